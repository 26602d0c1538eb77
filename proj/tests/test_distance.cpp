#include <doctest.h>

#include <sstream>

#include "attnflow/distance.hpp"
#include "attnflow/error.hpp"
#include "support.hpp"

using namespace attnflow;
using fixture::kSnk;
using fixture::kSrc;

namespace {

struct Solved {
  FlowNetwork net;
  TransitionMatrix m;
  FundamentalMatrix u;
};

Solved solve(FlowNetwork n, std::size_t dense_threshold = 4096) {
  auto m = transition_matrix(n);
  auto u = FundamentalMatrix::compute(m, {dense_threshold, 32, 1e-12});
  return {std::move(n), std::move(m), std::move(u)};
}

// Step-weighted arrival sums by explicit matrix powers. The source row counts
// arrivals at step k as (m0 Q^(k-1))_j; interior rows as (Q^k)_ij, with the
// diagonal normalized by sum_{k>=0} (Q^k)_jj.
struct SeriesDistances {
  Eigen::VectorXd t0;
  Eigen::MatrixXd t;
};

SeriesDistances series(const fixture::Reference& r) {
  const auto n = r.Q.rows();
  Eigen::RowVectorXd p = r.m0.transpose();
  Eigen::RowVectorXd s0 = Eigen::RowVectorXd::Zero(n), w0 = Eigen::RowVectorXd::Zero(n);
  Eigen::MatrixXd power = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(n, n), w = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < 20000; ++k) {
    s0 += p;
    w0 += k * p;
    p = p * r.Q;
    power = power * r.Q;
    s += power;
    w += k * power;
    if (power.cwiseAbs().maxCoeff() < 1e-18 && p.cwiseAbs().maxCoeff() < 1e-18) break;
  }
  SeriesDistances out;
  out.t0 = w0.cwiseQuotient(s0).transpose();
  out.t = w.cwiseQuotient(s);
  for (Eigen::Index j = 0; j < n; ++j) out.t(j, j) = w(j, j) / (1.0 + s(j, j));
  return out;
}

}  // namespace

TEST_CASE("chain distances") {
  auto c = solve(fixture::chain());
  auto t0 = total_flow_distance(c.net, c.m, c.u, 0);
  CHECK(*t0[0] == 1.0);
  CHECK(*t0[1] == 2.0);
  auto diag = return_distances(c.u);
  CHECK(diag[0] == 0.0);
  CHECK(diag[1] == 0.0);
  auto l0 = source_distances(c.net, c.m, c.u);
  CHECK(*l0[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(*l0[1] == doctest::Approx(2.0).epsilon(1e-12));
  auto tA = total_flow_distance(c.net, c.m, c.u, 1);
  CHECK(*tA[0] == 0.0);  // no cycle through A
  CHECK(*tA[1] == 1.0);
  auto tB = total_flow_distance(c.net, c.m, c.u, 2);
  CHECK_FALSE(tB[0].has_value());
}

TEST_CASE("self loop distances") {
  auto c = solve(fixture::self_loop());
  auto t0 = total_flow_distance(c.net, c.m, c.u, 0);
  CHECK(*t0[0] == doctest::Approx(2.0).epsilon(1e-12));
  auto diag = return_distances(c.u);
  CHECK(diag[0] == doctest::Approx(1.0).epsilon(1e-12));
  auto l0 = first_passage_distance(t0, diag);
  CHECK(*l0[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("star and single-node source distances") {
  auto c = solve(fixture::star());
  auto l0 = source_distances(c.net, c.m, c.u);
  std::vector<double> expected{1, 2, 2, 2};
  for (std::size_t k = 0; k < 4; ++k) CHECK(*l0[k] == doctest::Approx(expected[k]).epsilon(1e-12));
  auto single = solve(fixture::network({{kSrc, "X", 5}, {"X", kSnk, 5}}));
  CHECK(*source_distances(single.net, single.m, single.u)[0] == doctest::Approx(1.0));
}

TEST_CASE("first passage with zero return distance is the total distance") {
  DistanceRow t{2.5, std::nullopt, 4.0};
  Eigen::Vector3d diag(0.0, 0.0, 1.5);
  auto l = first_passage_distance(t, diag);
  CHECK(*l[0] == 2.5);
  CHECK_FALSE(l[1].has_value());
  CHECK(*l[2] == 2.5);
}

TEST_CASE("symmetric distance") {
  CHECK(symmetric_distance(2.0, 2.0) == 2.0);
  CHECK(symmetric_distance(1.0, 3.0) == 1.5);
  CHECK(symmetric_distance(1.0, 3.0) == symmetric_distance(3.0, 1.0));
  CHECK_THROWS_AS(symmetric_distance(1.0, std::nullopt), Error);
  try {
    symmetric_distance(std::nullopt, 1.0);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnreachablePair);
  }
}

TEST_CASE("distances match explicit arrival series") {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    auto c = solve(fixture::random_network(seed * 13, {15, seed % 2 == 0, 3, 9}));
    auto ref = fixture::reference(c.net);
    auto s = series(ref);
    auto set = distance_set(c.net, c.m, c.u);
    const auto n = c.net.interior_count();
    auto diag = return_distances(c.u);
    for (std::size_t j = 0; j < n; ++j) {
      const auto J = static_cast<Eigen::Index>(j);
      CHECK(fixture::close_rel(*set.t.at(0, j), s.t0[J], 1e-9));
      CHECK(fixture::close_rel(diag[J], s.t(J, J), 1e-9));
      CHECK(fixture::close_rel(*set.source_distance[j], s.t0[J] - s.t(J, J), 1e-9));
      for (std::size_t i = 0; i < n; ++i) {
        if (i == j) continue;
        const auto& t = set.t.at(i + 1, j);
        const bool reachable = ref.U(static_cast<Eigen::Index>(i), J) > 1e-12;
        REQUIRE(t.has_value() == reachable);
        if (!t) {
          CHECK_FALSE(set.l.at(i + 1, j).has_value());
          continue;
        }
        CHECK(fixture::close_rel(*t, s.t(static_cast<Eigen::Index>(i), J), 1e-9));
        CHECK(*t >= 1.0 - 1e-12);
        CHECK(*set.l.at(i + 1, j) == *t - diag[J]);
        if (set.c.at(i, j)) CHECK(*set.c.at(i, j) == *set.c.at(j, i));
      }
    }
  }
}

TEST_CASE("dag source distance equals path enumeration") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto c = solve(fixture::random_network(seed * 31, {10, false, 3, 9}));
    auto paths = fixture::dag_source_distance_by_paths(c.net);
    auto l0 = source_distances(c.net, c.m, c.u);
    for (std::size_t j = 0; j < paths.size(); ++j) CHECK(fixture::close_rel(*l0[j], paths[j], 1e-9));
  }
}

TEST_CASE("sparse path source distances agree with dense") {
  auto dense = solve(fixture::random_network(77, {80, true, 4, 9}));
  auto sparse = solve(fixture::random_network(77, {80, true, 4, 9}), 0);
  auto a = source_distances(dense.net, dense.m, dense.u);
  auto b = source_distances(sparse.net, sparse.m, sparse.u);
  for (std::size_t j = 0; j < a.size(); ++j) CHECK(fixture::close_rel(*a[j], *b[j], 1e-9));
  auto set_dense = distance_set(dense.net, dense.m, dense.u);
  auto set_sparse = distance_set(sparse.net, sparse.m, sparse.u);
  for (std::size_t i = 0; i < 80; i += 7)
    for (std::size_t j = 0; j < 80; j += 5)
      if (set_dense.l.at(i + 1, j)) CHECK(fixture::close_rel(*set_dense.l.at(i + 1, j), *set_sparse.l.at(i + 1, j), 1e-8));
}

TEST_CASE("pairwise cap") {
  auto c = solve(fixture::random_network(5, {30, true, 3, 9}));
  try {
    distance_set(c.net, c.m, c.u, 10);
    FAIL("expected SizeGuard");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SizeGuard);
  }
}

TEST_CASE("csv output marks unreachable pairs with empty fields") {
  auto c = solve(fixture::chain());
  auto set = distance_set(c.net, c.m, c.u);
  std::ostringstream l0, pw;
  write_source_distances_csv(l0, c.net.interior_names(), set.source_distance);
  write_pairwise_csv(pw, c.net.interior_names(), set);
  CHECK(l0.str() == "item,l_source\nA,1\nB,2\n");
  CHECK(pw.str() == "i,j,t,l,c\nA,B,1,1,\nB,A,,,\n");
}
