#include <doctest.h>

#include <cmath>
#include <sstream>

#include "attnflow/error.hpp"
#include "attnflow/oracle.hpp"
#include "support.hpp"

using namespace attnflow;
using fixture::kSnk;
using fixture::kSrc;

namespace {

std::string csv_of(const FlowNetwork& n) {
  std::ostringstream os;
  write_network_csv(os, n);
  return os.str();
}

struct Analytic {
  NodeFlowStats stats;
  DistanceRow l0;
};

Analytic analytic(const FlowNetwork& n) {
  auto m = transition_matrix(n);
  auto u = FundamentalMatrix::compute(m);
  return {node_flows(n, u), source_distances(n, m, u)};
}

}  // namespace

TEST_CASE("random streams are portable") {
  // Reference values for xoshiro256** seeded through SplitMix64 from 0.
  Xoshiro256 rng(0);
  std::uint64_t sm = 0;
  std::uint64_t s[4];
  for (auto& w : s) w = splitmix64(sm);
  auto rotl = [](std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); };
  for (int i = 0; i < 5; ++i) {
    const std::uint64_t expected = rotl(s[1] * 5, 7) * 9;
    const std::uint64_t t = s[1] << 17;
    s[2] ^= s[0], s[3] ^= s[1], s[1] ^= s[2], s[0] ^= s[3], s[2] ^= t, s[3] = rotl(s[3], 45);
    CHECK(rng.next() == expected);
  }
  std::uint64_t first = 0;
  CHECK(splitmix64(first) == 0xE220A8397B1DCDAFULL);
  Xoshiro256 bounded(5);
  for (int i = 0; i < 1000; ++i) {
    auto v = bounded.between(3, 9);
    CHECK((v >= 3 && v <= 9));
  }
}

TEST_CASE("chain walkers are deterministic") {
  auto net = fixture::chain();
  auto est = simulate_walkers(net, 1000, 5);
  CHECK(est.walkers == 1000);
  CHECK(*est.l_hat(1) == 2.0);
  CHECK(*est.l_se(1) == 0.0);
  CHECK(est.A_hat(0) == 2.0);
  CHECK(est.D_hat(1) == 2.0);
  auto a = analytic(net);
  auto report = compare(est, a.stats, a.l0);
  for (const auto& z : report.nodes) {
    CHECK(z.z_A == 0.0);
    CHECK(z.z_D == 0.0);
    CHECK(z.z_l == 0.0);
  }
  CHECK(report.passes());
}

TEST_CASE("star absorption fractions") {
  auto net = fixture::star();
  const std::uint64_t n = 1'000'000;
  auto est = simulate_walkers(net, n, 42);
  const double p = 1.0 / 3.0, se = std::sqrt(p * (1 - p) / static_cast<double>(n));
  for (std::size_t k = 1; k <= 3; ++k) CHECK(std::abs(est.D_fraction(k) - p) <= 3 * se);
  CHECK(est.D_fraction(0) == 0.0);
  CHECK(est.total_absorbed() == n);
  auto a = analytic(net);
  CHECK(compare(est, a.stats, a.l0).passes());
}

TEST_CASE("self loop visit mean") {
  auto net = fixture::self_loop();
  auto est = simulate_walkers(net, 200000, 8);
  const double mean = static_cast<double>(est.tally[0].visits) / 200000.0;
  CHECK(std::abs(mean - 2.0) <= 3 * est.A_se(0) / net.source_outflow());
}

TEST_CASE("simulation needs a certified network") {
  FlowNetwork trapped({"C1", "C2"}, {{0, 1, 1}, {1, 2, 1}, {2, 1, 1}});
  try {
    simulate_walkers(trapped, 10, 1);
    FAIL("expected NotCertified");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NotCertified);
  }
}

TEST_CASE("results do not depend on thread count or run") {
  GeneratorSpec spec;
  spec.seed = 7;
  auto net = generate_network(spec);
  auto a = simulate_walkers(net, 20000, 99);
  auto b = simulate_walkers(net, 20000, 99);
  std::ostringstream ca, cb;
  write_estimate_csv(ca, a);
  write_estimate_csv(cb, b);
  CHECK(ca.str() == cb.str());
  CHECK(estimate_sidecar_json(a) == estimate_sidecar_json(b));
  auto c = simulate_walkers(net, 20000, 100);
  std::ostringstream cc;
  write_estimate_csv(cc, c);
  CHECK(cc.str() != ca.str());
}

TEST_CASE("estimates round-trip through csv") {
  auto net = generate_network(GeneratorSpec{});
  auto est = simulate_walkers(net, 5000, 3);
  std::ostringstream csv;
  write_estimate_csv(csv, est);
  std::istringstream csv_in(csv.str()), json_in(estimate_sidecar_json(est));
  auto back = read_estimate(csv_in, json_in);
  CHECK(back.names == est.names);
  CHECK(back.walkers == est.walkers);
  CHECK(back.seed == est.seed);
  for (std::size_t k = 0; k < est.names.size(); ++k) {
    CHECK(back.tally[k].visits == est.tally[k].visits);
    CHECK(back.tally[k].first_sq == est.tally[k].first_sq);
    CHECK(back.A_hat(k) == est.A_hat(k));
  }
}

TEST_CASE("generator fixtures") {
  GeneratorSpec chain;
  chain.family = GeneratorFamily::Chain;
  chain.size = 2;
  chain.weight_scale = 2;
  auto expected = fixture::network({{kSrc, "n1", 2}, {"n1", "n2", 2}, {"n2", kSnk, 2}});
  CHECK(csv_of(generate_network(chain)) == csv_of(expected));

  GeneratorSpec star;
  star.family = GeneratorFamily::Star;
  star.size = 4;
  auto s = generate_network(star);
  auto a = analytic(s);
  CHECK(a.stats.C[*s.index_of("hub") - 1] == doctest::Approx(6.0));
  CHECK(s.weight(0, *s.index_of("hub")) == 3.0);
  CHECK(s.edge_count() == 7);
}

TEST_CASE("generated networks are certified and reproducible") {
  for (auto family : {GeneratorFamily::Chain, GeneratorFamily::Star, GeneratorFamily::RandomTree,
                      GeneratorFamily::RandomCyclic}) {
    GeneratorSpec spec;
    spec.family = family;
    spec.size = 50;
    spec.seed = 7;
    auto a = generate_network(spec), b = generate_network(spec);
    CHECK(validate(a).certified());
    CHECK(csv_of(a) == csv_of(b));
    CHECK(a.interior_count() == 50);
  }
  GeneratorSpec dag;
  dag.recirculation = 0.0;
  dag.size = 12;
  auto d = generate_network(dag);
  auto paths = fixture::dag_source_distance_by_paths(d);
  auto a = analytic(d);
  for (std::size_t j = 0; j < paths.size(); ++j) CHECK(fixture::close_rel(*a.l0[j], paths[j], 1e-9));
}

TEST_CASE("session-log generator") {
  GeneratorSpec spec;
  spec.family = GeneratorFamily::SessionLog;
  spec.size = 10;
  auto text = generate_log_text(spec);
  CHECK(text == generate_log_text(spec));
  auto out = generate(spec);
  REQUIRE(std::holds_alternative<SessionLog>(out));
  const auto& log = std::get<SessionLog>(out);
  CHECK(log.items.size() == 10);
  CHECK(log.total_sessions() == 50);
}

TEST_CASE("planted dissipation exponent") {
  GeneratorSpec spec;
  spec.size = 300;
  spec.planted_alpha = 0.8;
  spec.seed = 2;
  auto net = generate_network(spec);
  CHECK(validate(net).certified());
  auto a = analytic(net);
  for (Eigen::Index i = 0; i < a.stats.A.size(); ++i)
    CHECK(fixture::close_rel(a.stats.D[i], std::pow(a.stats.A[i], 0.8), 1e-9));
}

TEST_CASE("invalid generator specs") {
  auto code = [](GeneratorSpec spec) {
    try {
      generate(spec);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::IoError;
  };
  GeneratorSpec zero;
  zero.size = 0;
  CHECK(code(zero) == ErrorCode::InvalidSpec);
  GeneratorSpec recirc;
  recirc.recirculation = 1.5;
  CHECK(code(recirc) == ErrorCode::InvalidSpec);
  GeneratorSpec planted_chain;
  planted_chain.family = GeneratorFamily::Chain;
  planted_chain.planted_alpha = 0.5;
  CHECK(code(planted_chain) == ErrorCode::InvalidSpec);
  CHECK(parse_family("random-tree") == GeneratorFamily::RandomTree);
  CHECK_FALSE(parse_family("mesh").has_value());
}

TEST_CASE("comparison detects mismatched networks") {
  auto est = simulate_walkers(fixture::chain(), 100, 1);
  auto other = analytic(fixture::star());
  CHECK_THROWS_AS(compare(est, other.stats, other.l0), Error);
}
