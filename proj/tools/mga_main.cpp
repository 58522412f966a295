#include <iostream>
#include <string>
#include <vector>

#include "mga/cli.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  return mga::run_cli(args, std::cout, std::cerr);
}
