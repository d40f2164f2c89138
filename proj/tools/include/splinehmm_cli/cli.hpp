#ifndef SPLINEHMM_CLI_HPP
#define SPLINEHMM_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

namespace splinehmm::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitNumerical = 2;

/// Runs the command line (args[0] is the program name). Returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace splinehmm::cli

#endif  // SPLINEHMM_CLI_HPP
