#include "ivp/cli.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "ivp/error.hpp"
#include "ivp/evalbench.hpp"
#include "ivp/image_io.hpp"
#include "ivp/service.hpp"
#include "ivp/synthgen.hpp"

namespace ivp {

namespace fs = std::filesystem;

namespace {

template <typename T>
std::vector<T> split_list(const std::string& csv) {
  std::vector<T> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::istringstream is(item);
    T v;
    if (!(is >> v) || !is.eof()) throw Error(ErrorCode::kInvalidArgument, "bad list item '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw Error(ErrorCode::kInvalidArgument, "empty list '" + csv + "'");
  return out;
}

struct CorpusArgs {
  std::string root;
  std::string filler;
  double timeout = 30.0;

  void add(CLI::App* cmd, bool with_filler = false) {
    cmd->add_option("--corpus", root, "Corpus directory")->required();
    if (with_filler) {
      cmd->add_option("--filler", filler, "External filler base URL");
      cmd->add_option("--filler-timeout", timeout, "Filler timeout in seconds");
    }
  }

  ServiceConfig config(bool with_index) const {
    ServiceConfig c;
    c.corpus_root = root;
    c.with_index = with_index;
    if (!filler.empty()) c.filler = FillerEndpoint{filler, timeout};
    return c;
  }
};

void print_matches(std::ostream& out, const PipelineService& s, const RetrieveOutput& r) {
  out << std::left << std::setw(5) << "rank" << std::setw(14) << "id" << std::setw(10) << "label" << std::right
      << std::setw(9) << "total" << std::setw(9) << "visual" << std::setw(9) << "spatial" << std::setw(9)
      << "motion" << std::setw(9) << "dtheta" << std::setw(9) << "dx" << std::setw(9) << "dy" << std::setw(9)
      << "realism" << "\n";
  int rank = 1;
  for (const Match& m : r.matches) {
    out << std::left << std::setw(5) << rank++ << std::setw(14) << m.id << std::setw(10) << s.label(m.id)
        << std::right << std::fixed << std::setprecision(4) << std::setw(9) << m.total << std::setw(9)
        << m.d_visual << std::setw(9) << m.d_spatial << std::setw(9) << m.d_motion << std::setw(9) << m.dtheta
        << std::setw(9) << m.dx.x() << std::setw(9) << m.dx.y() << std::setw(9);
    if (m.realism) out << *m.realism;
    else out << "-";
    out << "\n";
  }
  for (const auto& w : r.warnings) out << "warning: " << w.id << ": " << w.message << "\n";
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Inverse visual path planning: ActionTunnel pipeline tools", "ivp"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic RGBD corpus");
  CorpusOptions co;
  std::string synth_out, synth_frames, synth_mix;
  synth->add_option("--out", synth_out, "Output corpus directory")->required();
  synth->add_option("--n", co.n_scenes, "Number of scenes")->check(CLI::PositiveNumber);
  synth->add_option("--seed", co.seed, "Corpus seed");
  synth->add_option("--mix", synth_mix, "Class mix straight,left,right (e.g. 1,1,1)");
  synth->add_option("--frames", synth_frames, "Frame offsets per scene, e.g. 0,2,4 (sequence corpus)");
  synth->add_option("--width", co.width, "Image width");
  synth->add_option("--height", co.height, "Image height");
  synth->add_option("--jitter", co.jitter_deg, "Per-frame yaw/pitch jitter, degrees");
  synth->add_option("--depth-noise", co.depth_noise, "Depth noise sigma, meters");

  // rectify
  auto* rectify = app.add_subcommand("rectify", "Rectify a scene image to its ground frame");
  CorpusArgs rect_args;
  std::string rect_id, rect_out, rect_valid;
  rect_args.add(rectify);
  rectify->add_option("--id", rect_id, "Scene id")->required();
  rectify->add_option("--out", rect_out, "Rectified PNG")->required();
  rectify->add_option("--valid-out", rect_valid, "Validity mask PNG");

  // heightmap
  auto* heightmap = app.add_subcommand("heightmap", "Build the EgoRetinal height map of a scene");
  CorpusArgs hm_args;
  std::string hm_id, hm_out;
  hm_args.add(heightmap);
  heightmap->add_option("--id", hm_id, "Scene id")->required();
  heightmap->add_option("--out", hm_out, "PFM path (grid spec written next to it as .json)")->required();

  // tunnel
  auto* tunnel = app.add_subcommand("tunnel", "Build an ActionTunnel and export debug views");
  CorpusArgs tn_args;
  std::string tn_id, tn_out;
  tn_args.add(tunnel);
  tunnel->add_option("--id", tn_id, "Scene id")->required();
  tunnel->add_option("--out", tn_out, "Output directory (tunnel.obj, projection.png, coverage.png, outline.json)")
      ->required();

  // compose
  auto* compose = app.add_subcommand("compose", "Compose two scenes at a transition range");
  CorpusArgs cp_args;
  std::string cp_a, cp_b, cp_out = ".", cp_fill = "diffusion";
  double cp_R = std::numeric_limits<double>::quiet_NaN(), cp_dR = kDefaultBandHalfWidth;
  cp_args.add(compose, true);
  compose->add_option("A", cp_a, "Present scene id")->required();
  compose->add_option("B", cp_b, "Future scene id")->required();
  compose->add_option("--R", cp_R, "Transition log-range (default: centre of the shared range)");
  compose->add_option("--dR", cp_dR, "Band half-width, log-meters");
  compose->add_option("--fill", cp_fill, "none | diffusion | external")
      ->check(CLI::IsMember({"none", "diffusion", "external"}));
  compose->add_option("--out", cp_out, "Output directory");

  // pairs
  auto* pairs = app.add_subcommand("pairs", "Export self-supervised training pairs (masked/target/mask)");
  CorpusArgs pr_args;
  std::string pr_out;
  int pr_per_scene = 1;
  std::uint64_t pr_seed = 0;
  pr_args.add(pairs);
  pairs->add_option("--out", pr_out, "Output directory")->required();
  pairs->add_option("--per-scene", pr_per_scene, "Pairs per scene")->check(CLI::PositiveNumber);
  pairs->add_option("--seed", pr_seed, "Transition sampling seed");

  // index
  auto* index = app.add_subcommand("index", "Build and save the retrieval index");
  CorpusArgs ix_args;
  std::string ix_out;
  ix_args.add(index);
  index->add_option("--out", ix_out, "Index file")->required();

  // retrieve
  auto* retrieve = app.add_subcommand("retrieve", "Retrieve the k nearest scenes to a query scene");
  CorpusArgs rt_args;
  std::string rt_id, rt_index;
  int rt_k = 5, rt_rerank = 0;
  bool rt_json = false;
  rt_args.add(retrieve, true);
  retrieve->add_option("--id", rt_id, "Query scene id")->required();
  retrieve->add_option("--k", rt_k, "Number of matches")->check(CLI::PositiveNumber);
  retrieve->add_option("--rerank", rt_rerank, "Re-rank by realism and keep this many");
  retrieve->add_option("--index", rt_index, "Prebuilt index file");
  retrieve->add_flag("--json", rt_json, "Print JSON instead of a table");

  // eval
  auto* eval = app.add_subcommand("eval", "Masked reconstruction benchmark");
  CorpusArgs ev_args;
  std::string ev_dt = "2,4,6,8,10", ev_methods = "all", ev_fractions, ev_policy = "tunnel-band", ev_out, ev_dump;
  std::string ev_sweep = "dt";
  double ev_fraction = 0.65;
  int ev_missing_dt = 4;
  bool ev_table = false;
  ev_args.add(eval);
  eval->add_option("--sweep", ev_sweep, "dt | missing")->check(CLI::IsMember({"dt", "missing"}));
  eval->add_option("--dt", ev_dt, "Frame offsets for the dt sweep");
  eval->add_option("--methods", ev_methods, "Comma-separated methods or 'all'");
  eval->add_option("--fractions", ev_fractions, "Missing fractions for the missing sweep");
  eval->add_option("--mask-fraction", ev_fraction, "Target missing fraction for the dt sweep");
  eval->add_option("--missing-dt", ev_missing_dt, "Frame offset for the missing sweep");
  eval->add_option("--policy", ev_policy, "tunnel-band | centered-disk (dt sweep)");
  eval->add_option("--out", ev_out, "CSV path (default: stdout)");
  eval->add_option("--dump", ev_dump, "Directory for per-trial PNGs");
  eval->add_flag("--table", ev_table, "Also print a median(std) table");

  // serve
  auto* serve = app.add_subcommand("serve", "Start the HTTP service");
  CorpusArgs sv_args;
  std::string sv_host = "127.0.0.1", sv_index;
  int sv_port = 8080;
  sv_args.add(serve, true);
  serve->add_option("--host", sv_host, "Listen address");
  serve->add_option("--port", sv_port, "Listen port (0 = any free port)");
  serve->add_option("--index", sv_index, "Prebuilt index file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*synth) {
      if (!synth_frames.empty()) co.sequence_frames = split_list<int>(synth_frames);
      if (!synth_mix.empty()) {
        const auto m = split_list<double>(synth_mix);
        if (m.size() != 3) throw Error(ErrorCode::kInvalidArgument, "--mix needs three weights");
        co.mix = {m[0], m[1], m[2]};
      }
      const CorpusManifest m = make_corpus(synth_out, co);
      out << "wrote " << m.ids.size() << " bundles to " << synth_out << "\n";
    } else if (*rectify) {
      const PipelineService s(rect_args.config(false));
      const WarpResult w = s.rectified(rect_id);
      write_png(rect_out, to_u8(w.image));
      if (!rect_valid.empty()) write_png(rect_valid, w.valid);
    } else if (*heightmap) {
      const PipelineService s(hm_args.config(false));
      export_height_map(s.height_map(hm_id), hm_out);
    } else if (*tunnel) {
      const PipelineService s(tn_args.config(false));
      const ActionTunnel t = s.tunnel(tn_id);
      fs::create_directories(tn_out);
      export_tunnel_obj(t, fs::path(tn_out) / "tunnel.obj");
      const Projection p = project_tunnel(t, t.source);
      write_png(fs::path(tn_out) / "projection.png", to_u8(p.image));
      write_png(fs::path(tn_out) / "coverage.png", p.coverage);
      std::ofstream(fs::path(tn_out) / "outline.json") << to_json(s.tunnel_outline(tn_id)).dump(1) << "\n";
    } else if (*compose) {
      const PipelineService s(cp_args.config(false));
      ComposeRequest req;
      req.id1 = cp_a;
      req.id2 = cp_b;
      if (!std::isnan(cp_R)) req.R = cp_R;
      req.dR = cp_dR;
      req.fill = fill_mode_from_string(cp_fill);
      const ComposeOutput o = s.compose(req);
      fs::create_directories(cp_out);
      write_png(fs::path(cp_out) / "composite.png", to_u8(o.composite.image));
      write_png(fs::path(cp_out) / "mask.png", o.composite.missing);
      write_png(fs::path(cp_out) / "filled.png", to_u8(o.filled));
      write_png(fs::path(cp_out) / "provenance.png", provenance_image(o.composite.provenance));
      out << "R " << o.R << " dR " << o.dR << " missing " << cv::countNonZero(o.composite.missing) << "\n";
    } else if (*pairs) {
      const PipelineService s(pr_args.config(false));
      int written = 0;
      for (const auto& id : s.ids()) {
        const ActionTunnel t = s.tunnel(id);
        for (int k = 0; k < pr_per_scene; ++k) {
          const auto [R, dR] = sample_transition(t, pr_seed * 1000003u + std::hash<std::string>{}(id) + k);
          export_training_pair(make_training_pair(t, R, dR), fs::path(pr_out) / (id + "_" + std::to_string(k)));
          ++written;
        }
      }
      out << "wrote " << written << " pairs to " << pr_out << "\n";
    } else if (*index) {
      const PipelineService s(ix_args.config(false));
      std::vector<SceneBundle> all;
      for (const auto& id : s.ids()) all.push_back(s.scene(id));
      save_index(build_index(all, {}, load_labels(ix_args.root)), ix_out);
      out << "indexed " << all.size() << " scenes\n";
    } else if (*retrieve) {
      ServiceConfig c = rt_args.config(true);
      c.index_path = rt_index;
      const PipelineService s(c);
      RetrieveRequest req;
      req.id = rt_id;
      req.k = rt_k;
      req.rerank = rt_rerank;
      const RetrieveOutput r = s.retrieve(req);
      if (rt_json) out << retrieve_json(s, r).dump(1) << "\n";
      else print_matches(out, s, r);
    } else if (*eval) {
      const EvalCorpus corpus = load_eval_corpus(ev_args.root);
      EvalConfig cfg;
      cfg.methods = parse_methods(ev_methods);
      cfg.policy = mask_policy_from_string(ev_policy);
      cfg.mask_fraction = ev_fraction;
      cfg.missing_dt = ev_missing_dt;
      cfg.dump_dir = ev_dump;
      SweepReport rep;
      if (ev_sweep == "dt") {
        cfg.dts = split_list<int>(ev_dt);
        rep = run_sweep(corpus, cfg);
      } else {
        if (!ev_fractions.empty()) cfg.fractions = split_list<double>(ev_fractions);
        rep = missing_data_sweep(corpus, cfg);
      }
      if (ev_out.empty()) out << to_csv(rep);
      else write_csv(rep, ev_out);
      if (ev_table) out << format_table(rep);
    } else if (*serve) {
      ServiceConfig c = sv_args.config(true);
      c.host = sv_host;
      c.port = sv_port;
      c.index_path = sv_index;
      const PipelineService s(c);
      HttpServer server(s);
      const int port = server.bind(c.host, c.port);
      out << "serving " << s.ids().size() << " scenes on http://" << c.host << ":" << port << std::endl;
      server.listen();
    }
  } catch (const Error& e) {
    err << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace ivp
