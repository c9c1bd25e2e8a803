#pragma once

#include <iostream>
#include <string>
#include <vector>

namespace cxr::app::cli {

/// Runs one command-line invocation. `args` excludes the program name and is
/// given in natural order. Returns the process exit code: 0 success,
/// 2 usage or config problem, 3 artifact or checkpoint incompatibility,
/// 4 numerical divergence during training.
int run(std::vector<std::string> args, std::ostream& out = std::cout,
        std::ostream& err = std::cerr);

}  // namespace cxr::app::cli
