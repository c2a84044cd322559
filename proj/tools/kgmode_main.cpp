#include <string>
#include <vector>

#include "kgmode/pipeline.hpp"

int main(int argc, char** argv) {
  return kgmode::run_cli(std::vector<std::string>(argv, argv + argc));
}
