#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace holmes::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitPipeline = 3;

// Runs one command line (args exclude the program name). Errors are reported
// on `err` and mapped to exit codes: 2 for input/config problems, 3 for
// pipeline failures.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_main(int argc, char** argv);

}  // namespace holmes::cli
