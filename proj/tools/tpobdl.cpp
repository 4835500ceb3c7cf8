#include <iostream>

#include "tpobdl/cli.hpp"

int main(int argc, char** argv) {
  return tpobdl::cli::run_main(argc, argv, std::cout, std::cerr);
}
