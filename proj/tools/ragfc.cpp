#include <iostream>

#include "ragfc/cli.hpp"

int main(int argc, char** argv) {
  return ragfc::cli_main(argc, argv, std::cout, std::cerr);
}
