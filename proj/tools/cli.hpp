#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace simobs::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitAnalysis = 1;
inline constexpr int kExitUsage = 2;

// Runs one `simobs` invocation; `args` excludes the program name. Results go
// to files named by the flags or to `out`; diagnostics go to `err`. Nothing
// is written unless the whole command succeeds.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace simobs::cli
