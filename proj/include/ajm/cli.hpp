#pragma once

namespace ajm {

inline constexpr const char* version = "0.1.0";

// exit codes: 0 success, 1 usage, 2 validation, 3 numerical failure
inline constexpr int exit_ok = 0;
inline constexpr int exit_usage = 1;
inline constexpr int exit_validation = 2;
inline constexpr int exit_numerical = 3;

int cli_main(int argc, const char* const* argv);

}  // namespace ajm
