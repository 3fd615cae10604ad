#include <iostream>

#include "ivp/cli.hpp"

int main(int argc, char** argv) { return ivp::cli_main(argc, argv, std::cout, std::cerr); }
