#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ebsde {

inline constexpr const char* kVersion = "1.0.0";

/// Entry point of the `ebsde` command line tool. `args` excludes the program
/// name. Returns 0 on success, 1 on configuration errors and 2 on runtime
/// failures.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ebsde
