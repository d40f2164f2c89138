#include <iostream>

#include "splinehmm_cli/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return splinehmm::cli::run(args, std::cout, std::cerr);
}
