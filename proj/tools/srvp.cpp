#include <iostream>

#include "srvp/cli.hpp"

int main(int argc, char** argv) {
  return srvp::run_cli({argv + 1, argv + argc}, std::cout, std::cerr);
}
