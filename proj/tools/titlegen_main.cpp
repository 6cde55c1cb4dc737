#include <string>
#include <vector>

#include "titlegen/cli/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return titlegen::cli::run(args);
}
