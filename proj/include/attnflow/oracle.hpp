#pragma once

// Monte Carlo random-walk simulator and synthetic generators. Independent of
// the linear-algebra path: walkers step on raw edge weights.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "attnflow/distance.hpp"
#include "attnflow/flowcalc.hpp"
#include "attnflow/ingest.hpp"
#include "attnflow/network.hpp"

namespace attnflow {

inline constexpr std::uint64_t kDefaultStepCap = 1'000'000;

struct NodeTally {
  std::uint64_t visits = 0;     // every arrival
  std::uint64_t visits_sq = 0;  // sum over walkers of (visits by that walker)^2
  std::uint64_t absorbed = 0;   // walkers that stepped from here into SINK
  std::uint64_t first_count = 0;
  std::uint64_t first_sum = 0;  // step index of first arrival
  std::uint64_t first_sq = 0;
};

struct WalkEstimate {
  std::vector<std::string> names;
  std::vector<NodeTally> tally;  // interior position
  std::uint64_t walkers = 0;
  std::uint64_t seed = 0;
  std::uint64_t cap_exceeded = 0;
  double source_outflow = 0.0;

  /// Expected visits per walker scaled to network flow units.
  double A_hat(std::size_t k) const;
  double A_se(std::size_t k) const;
  double D_fraction(std::size_t k) const;
  double D_hat(std::size_t k) const { return D_fraction(k) * source_outflow; }
  std::optional<double> l_hat(std::size_t k) const;
  std::optional<double> l_se(std::size_t k) const;
  std::uint64_t total_absorbed() const;
};

/// Walkers start at SOURCE and step along row-normalized weights until SINK.
/// Walker w uses stream w of `seed`, so results do not depend on threading.
WalkEstimate simulate_walkers(const FlowNetwork& network, std::uint64_t n_walkers, std::uint64_t seed,
                              std::uint64_t step_cap = kDefaultStepCap);

void write_estimate_csv(std::ostream& out, const WalkEstimate& estimate);
std::string estimate_sidecar_json(const WalkEstimate& estimate);
WalkEstimate read_estimate(std::istream& csv, std::istream& sidecar);

enum class GeneratorFamily { Chain, Star, RandomTree, RandomCyclic, SessionLog };

std::string_view family_name(GeneratorFamily family) noexcept;
std::optional<GeneratorFamily> parse_family(std::string_view name) noexcept;

struct GeneratorSpec {
  GeneratorFamily family = GeneratorFamily::RandomCyclic;
  std::size_t size = 20;
  double weight_scale = 1.0;   // chain/star edge weight; max integer weight otherwise
  double recirculation = 0.2;  // fraction of backward interior edges (random-cyclic, session-log)
  std::uint64_t seed = 1;
  std::size_t out_degree = 4;  // interior out-edges per node (random-cyclic)
  std::size_t window = 0;      // 0: targets anywhere; otherwise within +/- window
  std::size_t sessions = 0;    // session-log: 0 means 5 * size
  std::optional<double> planted_alpha;  // random-cyclic: make D_i = A_i^alpha exactly
};

/// Chain/star/tree/cyclic families produce a balanced, certified network;
/// session-log produces a parsed log.
std::variant<FlowNetwork, SessionLog> generate(const GeneratorSpec& spec);

FlowNetwork generate_network(const GeneratorSpec& spec);

/// Raw text of a session-log family log ("user,item" lines).
std::string generate_log_text(const GeneratorSpec& spec);

struct ZScores {
  std::string name;
  double z_A = 0.0;
  double z_D = 0.0;
  double z_l = 0.0;
  double worst() const;
};

struct ComparisonReport {
  double multiplier = 3.0;
  std::vector<ZScores> nodes;
  double pass_fraction_A = 0.0;
  double pass_fraction_D = 0.0;
  double pass_fraction_l = 0.0;
  std::vector<ZScores> worst_offenders;  // up to 5, largest |z| first

  bool passes(double required_fraction = 0.95) const {
    return pass_fraction_A >= required_fraction && pass_fraction_D >= required_fraction &&
           pass_fraction_l >= required_fraction;
  }
};

ComparisonReport compare(const WalkEstimate& estimate, const NodeFlowStats& stats, const DistanceRow& source_distance,
                         double multiplier = 3.0);

std::string comparison_json(const ComparisonReport& report, double required_fraction = 0.95);

}  // namespace attnflow
