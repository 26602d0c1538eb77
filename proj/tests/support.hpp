#pragma once

// Fixtures and independent reference computations shared by the tests. The
// reference routines deliberately avoid the library's solver code: they
// build I - Q straight from edge weights and invert it with a full-pivot LU.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "attnflow/network.hpp"
#include "attnflow/random.hpp"

namespace fixture {

inline const std::string kSrc{attnflow::kSourceToken};
inline const std::string kSnk{attnflow::kSinkToken};

inline attnflow::FlowNetwork network(const std::vector<attnflow::WeightedEdge>& edges) {
  return attnflow::build_flow_network(edges);
}

// SOURCE->A:2, A->B:2, B->SINK:2
inline attnflow::FlowNetwork chain() { return network({{kSrc, "A", 2}, {"A", "B", 2}, {"B", kSnk, 2}}); }

// SOURCE->hub:3, hub->{x,y,z}:1, leaves->SINK:1
inline attnflow::FlowNetwork star() {
  return network({{kSrc, "hub", 3},
                  {"hub", "x", 1},
                  {"hub", "y", 1},
                  {"hub", "z", 1},
                  {"x", kSnk, 1},
                  {"y", kSnk, 1},
                  {"z", kSnk, 1}});
}

// SOURCE->X:2, X->X:1, X->SINK:1 ... balanced by SOURCE->X:2, X->SINK:2
inline attnflow::FlowNetwork self_loop() { return network({{kSrc, "X", 2}, {"X", "X", 2}, {"X", kSnk, 2}}); }

struct RandomNetworkOptions {
  std::size_t nodes = 20;
  bool cyclic = true;
  std::size_t out_degree = 3;
  std::uint64_t max_weight = 9;
};

// Integer-weighted random network. Every node leaks to SINK and receives
// from SOURCE with some probability; balance() and the first node's source
// edge make it certified.
inline attnflow::FlowNetwork random_network(std::uint64_t seed, const RandomNetworkOptions& o) {
  attnflow::Xoshiro256 rng(seed);
  std::vector<attnflow::WeightedEdge> edges;
  auto name = [](std::size_t i) { return "v" + std::to_string(i); };
  auto w = [&] { return static_cast<double>(rng.between(1, o.max_weight)); };
  for (std::size_t i = 0; i < o.nodes; ++i) {
    if (i == 0 || rng.uniform() < 0.5) edges.push_back({kSrc, name(i), w()});
    edges.push_back({name(i), kSnk, w()});
    for (std::size_t d = 0; d < o.out_degree; ++d) {
      std::size_t j;
      if (o.cyclic) {
        j = rng.between(0, o.nodes - 1);
      } else {
        if (i + 1 >= o.nodes) break;
        j = rng.between(i + 1, o.nodes - 1);
      }
      edges.push_back({name(i), name(j), w()});
    }
  }
  auto net = attnflow::balance(attnflow::build_flow_network(edges));
  return net;
}

// Row-stochastic interior block and source row straight from edge weights.
struct Reference {
  Eigen::MatrixXd Q;
  Eigen::VectorXd m0;   // transition probabilities out of SOURCE
  Eigen::VectorXd f0;   // raw weights out of SOURCE
  Eigen::MatrixXd U;
};

inline Reference reference(const attnflow::FlowNetwork& net) {
  const auto n = static_cast<Eigen::Index>(net.interior_count());
  Reference r;
  r.Q = Eigen::MatrixXd::Zero(n, n);
  r.m0 = Eigen::VectorXd::Zero(n);
  r.f0 = Eigen::VectorXd::Zero(n);
  for (const auto& e : net.edges()) {
    const double out = net.out_flow(e.src);
    if (e.src == 0 && net.is_interior(e.dst)) {
      r.f0[static_cast<Eigen::Index>(e.dst - 1)] += e.weight;
      r.m0[static_cast<Eigen::Index>(e.dst - 1)] += e.weight / out;
    } else if (net.is_interior(e.src) && net.is_interior(e.dst)) {
      r.Q(static_cast<Eigen::Index>(e.src - 1), static_cast<Eigen::Index>(e.dst - 1)) += e.weight / out;
    }
  }
  r.U = (Eigen::MatrixXd::Identity(n, n) - r.Q).fullPivLu().inverse();
  return r;
}

// C_i = sum_k sum_j (f_0j u_ji / u_ii) u_ik, summed term by term.
inline std::vector<double> impact_literal(const Reference& r) {
  const auto n = r.U.rows();
  std::vector<double> c(static_cast<std::size_t>(n), 0.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    double total = 0.0;
    for (Eigen::Index k = 0; k < n; ++k)
      for (Eigen::Index j = 0; j < n; ++j) total += r.f0[j] * r.U(j, i) / r.U(i, i) * r.U(i, k);
    c[static_cast<std::size_t>(i)] = total;
  }
  return c;
}

// Mean first-arrival step from SOURCE, enumerating every path of a DAG.
// Returns NaN for nodes no path reaches.
inline std::vector<double> dag_source_distance_by_paths(const attnflow::FlowNetwork& net) {
  const std::size_t n = net.interior_count();
  std::vector<double> mass(n, 0.0), weighted(n, 0.0);
  std::function<void(std::size_t, double, std::size_t)> walk = [&](std::size_t node, double p, std::size_t len) {
    for (const auto& e : net.out_edges(node)) {
      if (!net.is_interior(e.dst)) continue;
      const double q = p * e.weight / net.out_flow(node);
      mass[e.dst - 1] += q;
      weighted[e.dst - 1] += q * static_cast<double>(len + 1);
      walk(e.dst, q, len + 1);
    }
  };
  walk(0, 1.0, 0);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = mass[i] > 0 ? weighted[i] / mass[i] : std::nan("");
  return out;
}

// Mean absolute difference form of the Gini coefficient, O(n^2).
inline double gini_pairwise(const std::vector<double>& x) {
  const double n = static_cast<double>(x.size());
  double diff = 0.0, sum = 0.0;
  for (double a : x) {
    sum += a;
    for (double b : x) diff += std::abs(a - b);
  }
  return diff / (2.0 * n * sum);
}

inline bool close(double a, double b, double tol) { return std::abs(a - b) <= tol; }

inline bool close_rel(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace fixture
