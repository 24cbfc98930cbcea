#pragma once

#include <iosfwd>

namespace runstyle::cli {

/// Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
inline constexpr int kOk = 0;
inline constexpr int kRuntimeFailure = 1;
inline constexpr int kUsageError = 2;

/// Default output root, overridden by --out.
inline constexpr const char* kOutEnv = "RUNSTYLE_OUT";

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace runstyle::cli
