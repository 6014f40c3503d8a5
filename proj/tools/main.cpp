#include <string>
#include <vector>

#include "storypipe/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return storypipe::cli::run_cli(args);
}
