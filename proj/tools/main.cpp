#include <string>
#include <vector>

#include "cxrlab/app/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cxr::app::cli::run(args);
}
