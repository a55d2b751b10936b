#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "care/error.hpp"

namespace care::cli {

/// Process exit code for an error: 1 validation, 2 I/O, 3 remote.
int exit_code(ErrorCode code);

/// Runs one command line (args excludes the program name). JSON goes to
/// `out` unless --out is given; diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace care::cli
