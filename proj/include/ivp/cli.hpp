#pragma once

#include <iosfwd>

namespace ivp {

/// Command-line entry: subcommands synth, rectify, heightmap, tunnel,
/// compose, pairs, index, retrieve, eval, serve. Returns 0 on success, 1 on
/// a usage error, 2 on a runtime error (one-line diagnostic on `err`).
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ivp
