#pragma once

// Absorbing-chain calculus over a balanced flow network: the row-normalized
// transition matrix, the fundamental matrix U = (I - Q)^-1 over interior
// nodes, and the per-node flow quantities derived from them.

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "attnflow/network.hpp"

namespace attnflow {

using RowSparse = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Row-stochastic M over indices 0..N+1. The SINK row is empty.
class TransitionMatrix {
 public:
  TransitionMatrix(RowSparse m, std::shared_ptr<const std::vector<std::string>> names)
      : m_(std::move(m)), names_(std::move(names)) {}

  const RowSparse& matrix() const { return m_; }
  std::size_t interior_count() const { return names_->size(); }
  std::size_t sink() const { return names_->size() + 1; }
  const std::vector<std::string>& names() const { return *names_; }
  const std::shared_ptr<const std::vector<std::string>>& shared_names() const { return names_; }

  /// Interior block Q (N x N, position k is node k+1).
  Eigen::SparseMatrix<double> interior_block() const;
  /// Transitions out of SOURCE restricted to interior columns.
  Eigen::VectorXd source_row() const;

 private:
  RowSparse m_;
  std::shared_ptr<const std::vector<std::string>> names_;
};

TransitionMatrix transition_matrix(const FlowNetwork& network);

struct SolverOptions {
  std::size_t dense_threshold = 4096;
  std::size_t batch_size = 128;
  double pivot_threshold = 1e-12;
};

/// U = (I - Q)^-1 over interior nodes. Materialized densely when N is at most
/// the dense threshold; otherwise held as a sparse LU factorization that
/// answers row, column and diagonal queries. Vectors are indexed by interior
/// position (node index minus one).
class FundamentalMatrix {
 public:
  static FundamentalMatrix compute(const TransitionMatrix& m, const SolverOptions& options = {});

  std::size_t size() const;
  bool is_dense() const;
  /// Null when the sparse path is in use.
  const Eigen::MatrixXd* dense() const;

  /// U * b
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  /// U^T * b
  Eigen::VectorXd solve_transpose(const Eigen::VectorXd& b) const;

  Eigen::VectorXd row(std::size_t i) const;
  Eigen::VectorXd column(std::size_t j) const;
  Eigen::VectorXd row_sums() const;

  /// u_ii, computed once and cached.
  const Eigen::VectorXd& diagonal() const;
  /// (U^2)_ii, computed alongside the diagonal.
  const Eigen::VectorXd& square_diagonal() const;

  /// Exact infinity-norm condition number ||I-Q||_inf * max_i rowsum(U)_i
  /// (U is non-negative, so its infinity norm is the largest row sum).
  double condition() const { return condition_; }

  /// max |U(I-Q) - I| over all rows (dense) or `sample_rows` evenly spaced
  /// rows (sparse).
  double identity_residual(std::size_t sample_rows = 32) const;

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
  double condition_ = 0.0;
};

/// Per-node flow quantities, indexed by interior position.
struct NodeFlowStats {
  std::vector<std::string> names;
  Eigen::VectorXd A;    // through-flow
  Eigen::VectorXd D;    // dissipation to SINK
  Eigen::VectorXd S;    // direct in-flow from SOURCE
  Eigen::VectorXd F;    // out-flow to interior nodes, A - D
  Eigen::VectorXd C;    // flow impact
  Eigen::VectorXd phi;  // flux from SOURCE, sum_j f_0j u_ji

  std::size_t size() const { return names.size(); }
  double total_A() const { return A.sum(); }
  double total_D() const { return D.sum(); }
};

NodeFlowStats node_flows(const FlowNetwork& network, const FundamentalMatrix& u);

/// C_i = phi_0i * rowsum(U)_i / u_ii.
Eigen::VectorXd flow_impact(const FlowNetwork& network, const FundamentalMatrix& u);

/// Source-injection vector f_0j over interior positions.
Eigen::VectorXd source_injection(const FlowNetwork& network);

}  // namespace attnflow
