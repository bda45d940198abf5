#ifndef PATHFX_CLI_HPP
#define PATHFX_CLI_HPP

#include "pathfx/nuisance.hpp"

#include <iosfwd>
#include <map>
#include <string>

namespace pathfx {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitData = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitEstimation = 3;

/// Parsed config file:
///
///   # comment
///   [run]
///   estimator = mr, a
///   bootstrap = wild
///   [model outcome_B]
///   family = gaussian
///   terms = 1, c0, e, c1, m, e*m
///
/// Keys of [run] mirror the long command-line flags (without dashes); flags win.
struct ConfigFile {
  std::map<std::string, std::string> run;
  struct Model {
    std::string family;
    std::string terms;
  };
  std::map<std::string, Model> models;  // keyed by role name
};

ConfigFile parse_config(std::istream& in);
ConfigFile parse_config_file(const std::string& path);

/// Starting-point working models: main effects in every role plus E*M in the outcome.
WorkingModelSet default_working_models(int d0, int d1, Pathway pathway);

/// Entry point for `pathfx simulate|estimate|oracle`. Returns the exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pathfx

#endif  // PATHFX_CLI_HPP
