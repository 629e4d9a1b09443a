#include <iostream>
#include <string>
#include <vector>

#include "geotomo/cli.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  return geotomo::run_cli(args, std::cout, std::cerr);
}
