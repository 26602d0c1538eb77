#pragma once

// Flow distances: total flow distance t, first-passage distance l and the
// symmetric distance c. Unreachable pairs are carried as empty optionals.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <vector>

#include "attnflow/flowcalc.hpp"

namespace attnflow {

using DistanceRow = std::vector<std::optional<double>>;

/// Dense table of optional distances.
class DistanceMatrix {
 public:
  DistanceMatrix() = default;
  DistanceMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), values_(rows * cols) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  const std::optional<double>& at(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  std::optional<double>& at(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<std::optional<double>> values_;
};

/// Row of t over interior columns (position k is node k+1). `row` is a
/// network index: 0 for SOURCE or 1..N. SOURCE uses u_0j = (MU)_0j.
DistanceRow total_flow_distance(const FlowNetwork& network, const TransitionMatrix& m, const FundamentalMatrix& u,
                                std::size_t row);

/// t_jj for every interior node, (U^2)_jj / u_jj - 1.
Eigen::VectorXd return_distances(const FundamentalMatrix& u);

/// l_ij = t_ij - t_jj for one row of t.
DistanceRow first_passage_distance(const DistanceRow& t_row, const Eigen::VectorXd& t_diagonal);

/// c = 2 l_ij l_ji / (l_ij + l_ji). Throws UnreachablePair when either
/// direction is missing.
double symmetric_distance(const std::optional<double>& l_ij, const std::optional<double>& l_ji);

/// l_0i for every interior node.
DistanceRow source_distances(const FlowNetwork& network, const TransitionMatrix& m, const FundamentalMatrix& u);

inline constexpr std::size_t kDefaultPairwiseCap = 2000;

/// Full distance tables. t and l have N+1 rows (SOURCE first) and N columns;
/// c is N x N with the diagonal left empty.
struct DistanceSet {
  DistanceMatrix t;
  DistanceMatrix l;
  DistanceMatrix c;
  DistanceRow source_distance;
};

/// Throws SizeGuard when N exceeds `pairwise_cap`.
DistanceSet distance_set(const FlowNetwork& network, const TransitionMatrix& m, const FundamentalMatrix& u,
                         std::size_t pairwise_cap = kDefaultPairwiseCap);

void write_source_distances_csv(std::ostream& out, const std::vector<std::string>& names, const DistanceRow& l0);

/// `i,j,t,l,c` for interior pairs i != j.
void write_pairwise_csv(std::ostream& out, const std::vector<std::string>& names, const DistanceSet& set);

}  // namespace attnflow
