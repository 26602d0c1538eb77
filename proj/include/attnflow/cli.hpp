#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace attnflow::cli {

inline constexpr int kSummarySchemaVersion = 1;

/// Effective settings for one invocation. Every field has a default; a
/// key-value config file is applied first and flags override it.
struct RunConfig {
  std::string command;
  std::string input;      // session log
  std::string network;    // network CSV (alternative to input)
  std::string stats;      // stats CSV from `stats`
  std::string distances;  // source distance CSV from `distance`
  std::string estimates;  // estimate CSV from `simulate`
  std::string delimiter = "comma";
  bool header = false;
  std::string mode = "session-closed";
  std::optional<std::int64_t> gap_seconds;
  std::size_t dense_threshold = 4096;
  std::size_t pairwise_cap = 2000;
  bool pairwise = false;
  std::string trapped = "drop";
  std::uint64_t seed = 42;
  std::string out = "attnflow-out";
  std::vector<std::string> analyses{"stats", "distance", "fits", "concentration", "duplication", "regression"};
  std::string x = "A";
  std::string y = "D";
  std::string column = "A";
  bool intercept = true;
  std::string walkers = "100000";
  double multiplier = 3.0;
  double required_fraction = 0.95;
  std::string family = "random-cyclic";
  std::size_t size = 20;
  double scale = 1.0;
  double recirculation = 0.2;
  std::size_t out_degree = 4;
  std::size_t window = 0;
  std::optional<double> planted_alpha;
  std::size_t sessions = 0;
};

/// Parses arguments (argv without the program name) and runs the command.
/// Returns the process exit status.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace attnflow::cli
