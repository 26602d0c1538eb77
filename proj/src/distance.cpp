#include "attnflow/distance.hpp"

#include <ostream>

#include "attnflow/error.hpp"
#include "attnflow/text.hpp"

namespace attnflow {

namespace {

// Interior nodes reachable from `start` in one or more steps, by position.
std::vector<char> reachable_from(const FlowNetwork& network, std::size_t start) {
  const std::size_t n = network.interior_count();
  std::vector<char> seen(n, 0);
  std::vector<std::size_t> queue{start};
  for (std::size_t head = 0; head < queue.size(); ++head) {
    for (const auto& e : network.out_edges(queue[head])) {
      if (!network.is_interior(e.dst) || e.weight <= 0.0 || seen[e.dst - 1]) continue;
      seen[e.dst - 1] = 1;
      queue.push_back(e.dst);
    }
  }
  return seen;
}

}  // namespace

Eigen::VectorXd return_distances(const FundamentalMatrix& u) {
  return u.square_diagonal().cwiseQuotient(u.diagonal()).array() - 1.0;
}

DistanceRow total_flow_distance(const FlowNetwork& network, const TransitionMatrix& m, const FundamentalMatrix& u,
                                std::size_t row) {
  const std::size_t n = network.interior_count();
  if (row > n) throw Error(ErrorCode::InvalidArgument, "distance row must be SOURCE or an interior node");
  auto reach = reachable_from(network, row);
  DistanceRow out(n);

  if (row == FlowNetwork::kSource) {
    const Eigen::VectorXd w = u.solve_transpose(m.source_row());  // (m_0 U)^T
    const Eigen::VectorXd z = u.solve_transpose(w);               // (m_0 U^2)^T
    for (std::size_t j = 0; j < n; ++j)
      if (reach[j]) out[j] = z[static_cast<Eigen::Index>(j)] / w[static_cast<Eigen::Index>(j)];
    return out;
  }

  // (QU^2)_ij = (U^2)_ij - u_ij, so t_ij = (U^2)_ij / u_ij - 1.
  const std::size_t i = row - 1;
  reach[i] = 1;
  const Eigen::VectorXd y = u.row(i);
  const Eigen::VectorXd z = u.solve_transpose(y);
  for (std::size_t j = 0; j < n; ++j)
    if (reach[j]) out[j] = z[static_cast<Eigen::Index>(j)] / y[static_cast<Eigen::Index>(j)] - 1.0;
  return out;
}

DistanceRow first_passage_distance(const DistanceRow& t_row, const Eigen::VectorXd& t_diagonal) {
  DistanceRow out(t_row.size());
  for (std::size_t j = 0; j < t_row.size(); ++j)
    if (t_row[j]) out[j] = *t_row[j] - t_diagonal[static_cast<Eigen::Index>(j)];
  return out;
}

double symmetric_distance(const std::optional<double>& l_ij, const std::optional<double>& l_ji) {
  if (!l_ij || !l_ji) throw Error(ErrorCode::UnreachablePair, "symmetric distance needs both directions reachable");
  const double sum = *l_ij + *l_ji;
  if (sum == 0.0) return 0.0;
  return 2.0 * *l_ij * *l_ji / sum;
}

DistanceRow source_distances(const FlowNetwork& network, const TransitionMatrix& m, const FundamentalMatrix& u) {
  return first_passage_distance(total_flow_distance(network, m, u, FlowNetwork::kSource), return_distances(u));
}

DistanceSet distance_set(const FlowNetwork& network, const TransitionMatrix& m, const FundamentalMatrix& u,
                         std::size_t pairwise_cap) {
  const std::size_t n = network.interior_count();
  if (n > pairwise_cap)
    throw Error(ErrorCode::SizeGuard, "pairwise distances requested for " + std::to_string(n) +
                                          " nodes; cap is " + std::to_string(pairwise_cap));
  DistanceSet set;
  set.t = DistanceMatrix(n + 1, n);
  set.l = DistanceMatrix(n + 1, n);
  set.c = DistanceMatrix(n, n);
  const Eigen::VectorXd t_diag = return_distances(u);

  const Eigen::MatrixXd* dense = u.dense();
  Eigen::MatrixXd u2;
  if (dense) u2 = *dense * *dense;

  for (std::size_t r = 0; r <= n; ++r) {
    DistanceRow t_row;
    if (r == FlowNetwork::kSource || !dense) {
      t_row = total_flow_distance(network, m, u, r);
    } else {
      auto reach = reachable_from(network, r);
      reach[r - 1] = 1;
      t_row.resize(n);
      const auto i = static_cast<Eigen::Index>(r - 1);
      for (std::size_t j = 0; j < n; ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        if (reach[j]) t_row[j] = u2(i, jj) / (*dense)(i, jj) - 1.0;
      }
    }
    const auto l_row = first_passage_distance(t_row, t_diag);
    for (std::size_t j = 0; j < n; ++j) {
      set.t.at(r, j) = t_row[j];
      set.l.at(r, j) = l_row[j];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto& a = set.l.at(i + 1, j);
      const auto& b = set.l.at(j + 1, i);
      if (a && b) {
        const double c = symmetric_distance(a, b);
        set.c.at(i, j) = c;
        set.c.at(j, i) = c;
      }
    }
  }
  for (std::size_t j = 0; j < n; ++j) set.source_distance.push_back(set.l.at(0, j));
  return set;
}

void write_source_distances_csv(std::ostream& out, const std::vector<std::string>& names, const DistanceRow& l0) {
  out << "item,l_source\n";
  for (std::size_t k = 0; k < names.size(); ++k) out << names[k] << ',' << text::format_optional(l0[k]) << '\n';
}

void write_pairwise_csv(std::ostream& out, const std::vector<std::string>& names, const DistanceSet& set) {
  out << "i,j,t,l,c\n";
  const std::size_t n = names.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      out << names[i] << ',' << names[j] << ',' << text::format_optional(set.t.at(i + 1, j)) << ','
          << text::format_optional(set.l.at(i + 1, j)) << ',' << text::format_optional(set.c.at(i, j)) << '\n';
    }
}

}  // namespace attnflow
