#pragma once

#include <iosfwd>

namespace unisoma {

/// Process exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitValidation = 2,
  kExitNumerical = 3,
  kExitVerification = 4,
};

/// Parses argv and runs one subcommand. Tables go to `out`, logs and errors
/// to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace unisoma
