#pragma once

// Command-line front end. Exit codes: 0 success, 1 other failure,
// 2 configuration error, 3 training aborted on a non-finite loss.

#include <iosfwd>

namespace empsoa {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNonFinite = 3;

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace empsoa
