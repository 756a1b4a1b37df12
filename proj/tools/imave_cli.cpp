#include <iostream>
#include <string>
#include <vector>

#include "imave/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return imave::run_command(args, std::cout, std::cerr);
}
