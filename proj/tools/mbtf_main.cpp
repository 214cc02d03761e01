#include <iostream>
#include <string>
#include <vector>

#include "mbtf/cli/commands.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv, argv + argc);
  return mbtf::cli::run(args, std::cout, std::cerr);
}
