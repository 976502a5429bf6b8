#include "sourcep/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
  return sourcep::cli::run_cli(argc, argv, std::cout, std::cerr);
}
