#include "attnflow/flowcalc.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <thread>

#include <Eigen/LU>
#include <Eigen/SparseLU>

#include "attnflow/error.hpp"

namespace attnflow {

Eigen::SparseMatrix<double> TransitionMatrix::interior_block() const {
  const auto n = static_cast<Eigen::Index>(interior_count());
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(m_.nonZeros()));
  for (Eigen::Index r = 1; r <= n; ++r)
    for (RowSparse::InnerIterator it(m_, r); it; ++it)
      if (it.col() >= 1 && it.col() <= n) trip.emplace_back(r - 1, it.col() - 1, it.value());
  Eigen::SparseMatrix<double> q(n, n);
  q.setFromTriplets(trip.begin(), trip.end());
  return q;
}

Eigen::VectorXd TransitionMatrix::source_row() const {
  const auto n = static_cast<Eigen::Index>(interior_count());
  Eigen::VectorXd row = Eigen::VectorXd::Zero(n);
  for (RowSparse::InnerIterator it(m_, 0); it; ++it)
    if (it.col() >= 1 && it.col() <= n) row[it.col() - 1] = it.value();
  return row;
}

TransitionMatrix transition_matrix(const FlowNetwork& network) {
  const auto size = static_cast<Eigen::Index>(network.node_count());
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(network.edge_count());
  for (std::size_t i = 0; i < network.sink(); ++i) {
    const double total = network.out_flow(i);
    if (!(total > 0.0))
      throw Error(ErrorCode::ZeroOutflowRow, "node " + std::string(network.name(i)) + " has no out-flow",
                  {std::string(network.name(i))});
    for (const auto& e : network.out_edges(i))
      trip.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(e.dst), e.weight / total);
  }
  RowSparse m(size, size);
  m.setFromTriplets(trip.begin(), trip.end());
  m.makeCompressed();
  return TransitionMatrix(std::move(m), std::make_shared<const std::vector<std::string>>(network.interior_names()));
}

namespace {

// Interior adjacency from Q's structure.
std::vector<std::vector<std::size_t>> adjacency(const Eigen::SparseMatrix<double>& q) {
  std::vector<std::vector<std::size_t>> adj(static_cast<std::size_t>(q.rows()));
  for (Eigen::Index c = 0; c < q.outerSize(); ++c)
    for (Eigen::SparseMatrix<double>::InnerIterator it(q, c); it; ++it)
      if (it.value() != 0.0) adj[static_cast<std::size_t>(it.row())].push_back(static_cast<std::size_t>(it.col()));
  for (auto& a : adj) std::sort(a.begin(), a.end());
  return adj;
}

// First strongly connected component completed by Tarjan's algorithm when
// started from `start` inside `allowed`; it has no edges leaving it within
// `allowed`.
std::vector<std::size_t> bottom_component(const std::vector<std::vector<std::size_t>>& adj, std::size_t start,
                                          const std::vector<char>& allowed) {
  const std::size_t n = adj.size();
  std::vector<std::size_t> index(n, SIZE_MAX), low(n, 0);
  std::vector<char> on_stack(n, 0);
  std::vector<std::size_t> stack;
  std::vector<std::pair<std::size_t, std::size_t>> call{{start, 0}};
  std::size_t counter = 0;
  index[start] = low[start] = counter++;
  stack.push_back(start);
  on_stack[start] = 1;
  while (!call.empty()) {
    auto& [v, next] = call.back();
    if (next < adj[v].size()) {
      auto w = adj[v][next++];
      if (!allowed[w]) continue;
      if (index[w] == SIZE_MAX) {
        index[w] = low[w] = counter++;
        stack.push_back(w);
        on_stack[w] = 1;
        call.emplace_back(w, 0);
      } else if (on_stack[w]) {
        low[v] = std::min(low[v], index[w]);
      }
      continue;
    }
    if (low[v] == index[v]) {
      std::vector<std::size_t> comp;
      std::size_t w;
      do {
        w = stack.back();
        stack.pop_back();
        on_stack[w] = 0;
        comp.push_back(w);
      } while (w != v);
      std::sort(comp.begin(), comp.end());
      return comp;
    }
    auto child = v;
    call.pop_back();
    if (!call.empty()) low[call.back().first] = std::min(low[call.back().first], low[child]);
  }
  return {start};
}

[[noreturn]] void throw_singular(const TransitionMatrix& m, const std::vector<std::size_t>& component,
                                 const std::string& why) {
  std::vector<std::string> names;
  for (auto k : component) names.push_back(m.names()[k]);
  std::string msg = "I - M is singular (" + why + "); component:";
  for (std::size_t i = 0; i < names.size() && i < 20; ++i) msg += " " + names[i];
  if (names.size() > 20) msg += " ...";
  throw Error(ErrorCode::SingularSystem, msg, std::move(names));
}

// Structural singularity: interior nodes with no path to a node that leaks
// to SINK.
void check_absorbing(const TransitionMatrix& m, const std::vector<std::vector<std::size_t>>& adj) {
  const std::size_t n = m.interior_count();
  const auto& full = m.matrix();
  std::vector<std::vector<std::size_t>> reverse(n);
  for (std::size_t v = 0; v < n; ++v)
    for (auto w : adj[v]) reverse[w].push_back(v);
  std::vector<char> reaches_exit(n, 0);
  std::vector<std::size_t> queue;
  for (std::size_t v = 0; v < n; ++v) {
    bool leaks = false;
    for (RowSparse::InnerIterator it(full, static_cast<Eigen::Index>(v + 1)); it; ++it)
      if (static_cast<std::size_t>(it.col()) == m.sink() && it.value() > 0.0) leaks = true;
    if (leaks) {
      reaches_exit[v] = 1;
      queue.push_back(v);
    }
  }
  for (std::size_t head = 0; head < queue.size(); ++head)
    for (auto u : reverse[queue[head]])
      if (!reaches_exit[u]) {
        reaches_exit[u] = 1;
        queue.push_back(u);
      }
  std::vector<char> trapped(n, 0);
  std::size_t first = SIZE_MAX;
  for (std::size_t v = 0; v < n; ++v)
    if (!reaches_exit[v]) {
      trapped[v] = 1;
      if (first == SIZE_MAX) first = v;
    }
  if (first != SIZE_MAX) throw_singular(m, bottom_component(adj, first, trapped), "closed recurrent class");
}

}  // namespace

struct FundamentalMatrix::Impl {
  std::size_t n = 0;
  Eigen::SparseMatrix<double> iq;  // I - Q
  std::optional<Eigen::MatrixXd> dense;
  std::optional<Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>>> lu;
  std::size_t batch_size = 128;

  std::once_flag diag_once;
  Eigen::VectorXd diag;
  Eigen::VectorXd square_diag;

  void compute_diagonals();
};

void FundamentalMatrix::Impl::compute_diagonals() {
  const auto size = static_cast<Eigen::Index>(n);
  if (dense) {
    diag = dense->diagonal();
    // (U^2)_ii = sum_k u_ik u_ki
    square_diag = dense->cwiseProduct(dense->transpose()).rowwise().sum();
    return;
  }
  diag.resize(size);
  square_diag.resize(size);
  const auto batch = static_cast<Eigen::Index>(std::max<std::size_t>(1, batch_size));
  const Eigen::Index n_batches = (size + batch - 1) / batch;

  // Batches write disjoint slots, so the result does not depend on the
  // schedule.
  auto run_batch = [&](Eigen::Index b) {
    const Eigen::Index start = b * batch;
    const Eigen::Index width = std::min(batch, size - start);
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(size, width);
    for (Eigen::Index c = 0; c < width; ++c) rhs(start + c, c) = 1.0;
    Eigen::MatrixXd cols = lu->solve(rhs);              // columns of U
    Eigen::MatrixXd rows = lu->transpose().solve(rhs);  // rows of U
    for (Eigen::Index c = 0; c < width; ++c) {
      diag[start + c] = cols(start + c, c);
      square_diag[start + c] = rows.col(c).dot(cols.col(c));
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(), 8u));
  if (threads == 1 || n_batches < 2) {
    for (Eigen::Index b = 0; b < n_batches; ++b) run_batch(b);
    return;
  }
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      for (Eigen::Index b = t; b < n_batches; b += threads) run_batch(b);
    });
  for (auto& th : pool) th.join();
}

FundamentalMatrix FundamentalMatrix::compute(const TransitionMatrix& m, const SolverOptions& options) {
  auto impl = std::make_shared<Impl>();
  impl->n = m.interior_count();
  impl->batch_size = options.batch_size;
  const auto size = static_cast<Eigen::Index>(impl->n);

  Eigen::SparseMatrix<double> q = m.interior_block();
  auto adj = adjacency(q);
  check_absorbing(m, adj);

  Eigen::SparseMatrix<double> identity(size, size);
  identity.setIdentity();
  impl->iq = identity - q;
  impl->iq.makeCompressed();

  if (impl->n <= options.dense_threshold) {
    Eigen::MatrixXd iq = Eigen::MatrixXd(impl->iq);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(iq);
    const Eigen::VectorXd pivots = lu.matrixLU().diagonal().cwiseAbs();
    Eigen::Index worst = 0;
    if (pivots.minCoeff(&worst) < options.pivot_threshold) {
      std::vector<char> all(impl->n, 1);
      throw_singular(m, bottom_component(adj, static_cast<std::size_t>(worst), all), "pivot below threshold");
    }
    impl->dense = lu.inverse();
  } else {
    impl->lu.emplace();
    impl->lu->analyzePattern(impl->iq);
    impl->lu->factorize(impl->iq);
    if (impl->lu->info() != Eigen::Success) {
      std::vector<char> all(impl->n, 1);
      throw_singular(m, bottom_component(adj, 0, all), impl->lu->lastErrorMessage());
    }
  }

  FundamentalMatrix u;
  u.impl_ = std::move(impl);

  // ||I - Q||_inf: rows of Q sum to at most 1.
  double iq_norm = 0.0;
  {
    Eigen::SparseMatrix<double, Eigen::RowMajor> rows = u.impl_->iq;
    for (Eigen::Index r = 0; r < rows.outerSize(); ++r) {
      double s = 0.0;
      for (decltype(rows)::InnerIterator it(rows, r); it; ++it) s += std::abs(it.value());
      iq_norm = std::max(iq_norm, s);
    }
  }
  u.condition_ = size > 0 ? iq_norm * u.row_sums().maxCoeff() : 0.0;
  return u;
}

std::size_t FundamentalMatrix::size() const { return impl_->n; }
bool FundamentalMatrix::is_dense() const { return impl_->dense.has_value(); }
const Eigen::MatrixXd* FundamentalMatrix::dense() const { return impl_->dense ? &*impl_->dense : nullptr; }

Eigen::VectorXd FundamentalMatrix::solve(const Eigen::VectorXd& b) const {
  if (impl_->dense) return *impl_->dense * b;
  return impl_->lu->solve(b);
}

Eigen::VectorXd FundamentalMatrix::solve_transpose(const Eigen::VectorXd& b) const {
  if (impl_->dense) return impl_->dense->transpose() * b;
  return impl_->lu->transpose().solve(b);
}

Eigen::VectorXd FundamentalMatrix::row(std::size_t i) const {
  if (impl_->dense) return impl_->dense->row(static_cast<Eigen::Index>(i)).transpose();
  return solve_transpose(Eigen::VectorXd::Unit(static_cast<Eigen::Index>(impl_->n), static_cast<Eigen::Index>(i)));
}

Eigen::VectorXd FundamentalMatrix::column(std::size_t j) const {
  if (impl_->dense) return impl_->dense->col(static_cast<Eigen::Index>(j));
  return solve(Eigen::VectorXd::Unit(static_cast<Eigen::Index>(impl_->n), static_cast<Eigen::Index>(j)));
}

Eigen::VectorXd FundamentalMatrix::row_sums() const {
  return solve(Eigen::VectorXd::Ones(static_cast<Eigen::Index>(impl_->n)));
}

const Eigen::VectorXd& FundamentalMatrix::diagonal() const {
  std::call_once(impl_->diag_once, [this] { impl_->compute_diagonals(); });
  return impl_->diag;
}

const Eigen::VectorXd& FundamentalMatrix::square_diagonal() const {
  std::call_once(impl_->diag_once, [this] { impl_->compute_diagonals(); });
  return impl_->square_diag;
}

double FundamentalMatrix::identity_residual(std::size_t sample_rows) const {
  const auto size = static_cast<Eigen::Index>(impl_->n);
  if (size == 0) return 0.0;
  if (impl_->dense) {
    Eigen::MatrixXd prod = *impl_->dense * impl_->iq;
    prod -= Eigen::MatrixXd::Identity(size, size);
    return prod.cwiseAbs().maxCoeff();
  }
  double worst = 0.0;
  const Eigen::Index samples = std::min<Eigen::Index>(size, static_cast<Eigen::Index>(std::max<std::size_t>(1, sample_rows)));
  Eigen::SparseMatrix<double> iqt = impl_->iq.transpose();
  for (Eigen::Index s = 0; s < samples; ++s) {
    const Eigen::Index i = samples == 1 ? 0 : s * (size - 1) / (samples - 1);
    Eigen::VectorXd r = row(static_cast<std::size_t>(i));
    Eigen::VectorXd res = iqt * r;  // (r^T (I - Q))^T
    res[i] -= 1.0;
    worst = std::max(worst, res.cwiseAbs().maxCoeff());
  }
  return worst;
}

Eigen::VectorXd source_injection(const FlowNetwork& network) {
  Eigen::VectorXd s = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(network.interior_count()));
  for (const auto& e : network.out_edges(FlowNetwork::kSource))
    if (network.is_interior(e.dst)) s[static_cast<Eigen::Index>(e.dst - 1)] += e.weight;
  return s;
}

Eigen::VectorXd flow_impact(const FlowNetwork& network, const FundamentalMatrix& u) {
  const Eigen::VectorXd phi = u.solve_transpose(source_injection(network));
  const Eigen::VectorXd sums = u.row_sums();
  return phi.cwiseProduct(sums).cwiseQuotient(u.diagonal());
}

NodeFlowStats node_flows(const FlowNetwork& network, const FundamentalMatrix& u) {
  const std::size_t n = network.interior_count();
  const auto size = static_cast<Eigen::Index>(n);
  NodeFlowStats stats;
  stats.names = network.interior_names();
  stats.A = Eigen::VectorXd::Zero(size);
  stats.D = Eigen::VectorXd::Zero(size);
  stats.S = source_injection(network);
  for (std::size_t i = 1; i <= n; ++i) {
    const auto k = static_cast<Eigen::Index>(i - 1);
    // Out-edges never target SOURCE, so the row sum is sum_{j=1..N+1} f_ij.
    stats.A[k] = network.out_flow(i);
    stats.D[k] = network.weight(i, network.sink());
  }
  stats.F = stats.A - stats.D;
  stats.phi = u.solve_transpose(stats.S);
  stats.C = stats.phi.cwiseProduct(u.row_sums()).cwiseQuotient(u.diagonal());
  return stats;
}

}  // namespace attnflow
