#include <iostream>
#include <string>
#include <vector>

#include "nls/cli.hpp"

int main(int argc, char** argv) {
  return nls::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
