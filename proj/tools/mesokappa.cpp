#include <iostream>

#include "mesokappa/cli.hpp"

int main(int argc, char** argv) {
  return mesokappa::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
