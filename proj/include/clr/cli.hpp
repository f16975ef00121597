#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace clr {

/// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInputError = 2;
inline constexpr int kExitNumericalError = 3;

/// Runs the command line front end. `args` excludes the program name.
/// Human-readable output goes to `out`, single-line errors prefixed with
/// "error[<category>]: " go to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace clr
