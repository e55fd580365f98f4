#include <iostream>
#include <string>
#include <vector>

#include "deepma/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return deepma::run_cli(args, std::cout, std::cerr, deepma::log_level_from_env());
}
