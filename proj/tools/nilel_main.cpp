#include <string>
#include <vector>

#include "nilel/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return nilel::cli_main(args);
}
