#include <iostream>

#include "phaseopt/commands.hpp"

int main(int argc, char** argv) {
  return phaseopt::run_cli(argc, argv, std::cout, std::cerr);
}
