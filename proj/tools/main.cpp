#include <iostream>

#include "rankedcl/cli.hpp"

int main(int argc, char** argv) {
  return rankedcl::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
