#include <iostream>

#include "incidur/cli.hpp"

int main(int argc, char** argv) {
  return incidur::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
