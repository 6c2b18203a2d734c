#include <string>
#include <vector>

#include "pamkit/cli.hpp"

int main(int argc, char** argv) {
  return pamkit::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
