#pragma once

#include <string>
#include <vector>

namespace dipro::cli {

// Entry point for the experiment tool. args excludes argv[0].
// Exit codes: 0 success, 1 contract/usage/parse error, 2 numeric failure.
int run(const std::vector<std::string>& args);

}  // namespace dipro::cli
