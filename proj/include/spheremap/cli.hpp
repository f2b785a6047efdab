#pragma once

#include <string>
#include <vector>

namespace spheremap::cli {

/// Entry point for the command-line tool. Exit codes: 0 success, 2 input or
/// configuration error, 3 model-assumption or numerical failure.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);

}  // namespace spheremap::cli
