#pragma once

#include <ostream>

namespace gmseg {

/// Parses the command line and runs one subcommand. Returns the process
/// exit code: 0 success, 1 usage, 2 data error, 3 numerical failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace gmseg
