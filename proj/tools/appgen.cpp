#include <iostream>

#include "appgen/cli.hpp"

int main(int argc, char** argv) {
  return appgen::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
