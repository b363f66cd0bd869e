#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace ps2 {

/// Exit codes: 0 success, 1 usage error, 2 data or configuration error, 3 numerical failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ps2
