#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "attnflow/ingest.hpp"

namespace attnflow {

struct WeightedEdge {
  std::string src;
  std::string dst;
  double weight = 0.0;
};

std::vector<WeightedEdge> to_weighted(const std::vector<CountEdge>& edges);

/// Edge between dense node indices. 0 is SOURCE, 1..N interior, N+1 SINK.
struct Edge {
  std::size_t src = 0;
  std::size_t dst = 0;
  double weight = 0.0;
};

/// Weighted directed graph with reserved SOURCE and SINK nodes. Immutable
/// once built; edges are stored sorted by (src, dst) with no duplicates.
class FlowNetwork {
 public:
  static constexpr std::size_t kSource = 0;

  FlowNetwork() = default;

  /// Takes already-merged, sorted-or-unsorted edges over dense indices.
  /// No sign checks are performed; use build_flow_network for input data.
  FlowNetwork(std::vector<std::string> interior_names, std::vector<Edge> edges);

  std::size_t interior_count() const { return names_.size(); }
  std::size_t node_count() const { return names_.size() + 2; }
  std::size_t sink() const { return names_.size() + 1; }
  std::size_t edge_count() const { return edges_.size(); }

  bool is_interior(std::size_t idx) const { return idx >= 1 && idx <= names_.size(); }

  /// Name for any index, using the reserved tokens for SOURCE and SINK.
  std::string_view name(std::size_t idx) const;
  const std::vector<std::string>& interior_names() const { return names_; }
  std::optional<std::size_t> index_of(std::string_view name) const;

  const std::vector<Edge>& edges() const { return edges_; }
  std::span<const Edge> out_edges(std::size_t idx) const;
  double weight(std::size_t src, std::size_t dst) const;

  double out_flow(std::size_t idx) const { return out_flow_[idx]; }
  double in_flow(std::size_t idx) const { return in_flow_[idx]; }
  double source_outflow() const { return out_flow_[kSource]; }
  double sink_inflow() const { return in_flow_[sink()]; }

  /// in - out for an interior node.
  double residual(std::size_t idx) const { return in_flow_[idx] - out_flow_[idx]; }

  /// Every interior residual within 1e-9.
  bool balanced() const { return balanced_; }

  bool integral_weights() const;

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<Edge> edges_;
  std::vector<std::size_t> row_start_;
  std::vector<double> out_flow_;
  std::vector<double> in_flow_;
  bool balanced_ = false;
};

inline constexpr double kConservationTolerance = 1e-9;

/// Merges duplicates by summing, assigns interior indices by first
/// appearance (after any names listed in `preferred_order`).
FlowNetwork build_flow_network(std::span<const WeightedEdge> edges,
                               std::span<const std::string> preferred_order = {});

/// Adds SOURCE->i for out-flow surplus and i->SINK for in-flow surplus.
FlowNetwork balance(const FlowNetwork& network);

struct ValidationReport {
  std::vector<std::size_t> unreachable;  // not reachable from SOURCE
  std::vector<std::size_t> trapped;      // cannot reach SINK
  std::vector<double> residuals;         // per interior node, position i-1
  std::vector<std::size_t> residual_violations;
  std::size_t negative_edges = 0;
  double max_abs_residual = 0.0;

  bool certified() const {
    return unreachable.empty() && trapped.empty() && residual_violations.empty() && negative_edges == 0;
  }
};

ValidationReport validate(const FlowNetwork& network);

struct DropResult {
  FlowNetwork network;
  std::vector<std::string> dropped;
  std::size_t warning_count() const { return dropped.size(); }
};

/// Removes unreachable and trapped nodes, then re-balances.
DropResult drop_uncertified(const FlowNetwork& network, const ValidationReport& report);

void write_network_csv(std::ostream& out, const FlowNetwork& network);

/// Sidecar with node table, balanced flag and the validation report.
std::string network_sidecar_json(const FlowNetwork& network, const ValidationReport& report);

std::vector<WeightedEdge> read_edge_csv(std::istream& in);

/// Interior names in index order from a sidecar produced by
/// network_sidecar_json.
std::vector<std::string> read_sidecar_node_order(std::istream& in);

}  // namespace attnflow
