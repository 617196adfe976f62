#pragma once

#include <ostream>

namespace menet {

/// Entry point of the `menet` tool. Returns the process exit code:
/// 0 success, 1 usage/config, 2 data, 3 numerical failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace menet
