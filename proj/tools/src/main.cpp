#include <iostream>

#include "ctxrel_tools/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return ctxrel::cli::run_cli(args, std::cout, std::cerr);
}
