#include <iostream>

#include "qmri/cli/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return qmri::cli::run(args, std::cout, std::cerr);
}
