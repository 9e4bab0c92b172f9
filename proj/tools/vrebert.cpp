#include <iostream>

#include "vrebert/cli/cli.hpp"

int main(int argc, char** argv) {
  return vrebert::run_cli({argv + 1, argv + argc}, std::cout, std::cerr);
}
