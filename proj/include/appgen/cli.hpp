#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace appgen {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Command-line driver. `args` excludes the program name. Progress goes to
/// `out`; failures print one `appgen: error[<tag>]: <message>` line to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace appgen
