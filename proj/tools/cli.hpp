#pragma once

namespace smoothsde::cli {

/// Runs one command; returns the process exit code
/// (0 success, 1 numerical failure, 2 user-input error).
int run(int argc, char** argv);

}  // namespace smoothsde::cli
