#include "attnflow/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "attnflow/error.hpp"
#include "attnflow/random.hpp"
#include "attnflow/text.hpp"

namespace attnflow {

// --- estimates -------------------------------------------------------------

double WalkEstimate::A_hat(std::size_t k) const {
  return static_cast<double>(tally[k].visits) / static_cast<double>(walkers) * source_outflow;
}

double WalkEstimate::A_se(std::size_t k) const {
  const double n = static_cast<double>(walkers);
  const double mean = static_cast<double>(tally[k].visits) / n;
  const double var = std::max(0.0, static_cast<double>(tally[k].visits_sq) / n - mean * mean) * n / std::max(1.0, n - 1.0);
  return std::sqrt(var / n) * source_outflow;
}

double WalkEstimate::D_fraction(std::size_t k) const {
  return static_cast<double>(tally[k].absorbed) / static_cast<double>(walkers);
}

std::optional<double> WalkEstimate::l_hat(std::size_t k) const {
  if (tally[k].first_count == 0) return std::nullopt;
  return static_cast<double>(tally[k].first_sum) / static_cast<double>(tally[k].first_count);
}

std::optional<double> WalkEstimate::l_se(std::size_t k) const {
  const auto& t = tally[k];
  if (t.first_count < 2) return std::nullopt;
  const double n = static_cast<double>(t.first_count);
  const double mean = static_cast<double>(t.first_sum) / n;
  const double var = std::max(0.0, static_cast<double>(t.first_sq) / n - mean * mean) * n / (n - 1.0);
  return std::sqrt(var / n);
}

std::uint64_t WalkEstimate::total_absorbed() const {
  std::uint64_t total = 0;
  for (const auto& t : tally) total += t.absorbed;
  return total;
}

// --- simulator -------------------------------------------------------------

namespace {

struct Tables {
  std::vector<std::size_t> start;  // CSR offsets per node
  std::vector<std::size_t> target;
  std::vector<double> cumulative;  // per row, ends at 1
};

Tables build_tables(const FlowNetwork& net) {
  Tables t;
  t.start.push_back(0);
  for (std::size_t i = 0; i < net.node_count(); ++i) {
    const auto row = net.out_edges(i);
    const double total = net.out_flow(i);
    double acc = 0.0;
    for (const auto& e : row) {
      acc += e.weight;
      t.target.push_back(e.dst);
      t.cumulative.push_back(acc / total);
    }
    if (!row.empty()) t.cumulative.back() = 1.0;
    t.start.push_back(t.target.size());
  }
  return t;
}

struct Partial {
  std::vector<NodeTally> tally;
  std::uint64_t cap_exceeded = 0;
};

void walk_range(const FlowNetwork& net, const Tables& tables, std::uint64_t seed, std::uint64_t first,
                std::uint64_t last, std::uint64_t step_cap, Partial& out) {
  const std::size_t sink = net.sink();
  const std::size_t n = net.interior_count();
  std::vector<std::uint64_t> count(n + 2, 0);
  std::vector<std::size_t> touched;
  for (std::uint64_t w = first; w < last; ++w) {
    auto rng = Xoshiro256::for_stream(seed, w);
    std::size_t at = FlowNetwork::kSource;
    std::uint64_t step = 0;
    bool absorbed = false;
    while (step < step_cap) {
      const double u = rng.uniform();
      const auto lo = tables.cumulative.begin() + static_cast<std::ptrdiff_t>(tables.start[at]);
      const auto hi = tables.cumulative.begin() + static_cast<std::ptrdiff_t>(tables.start[at + 1]);
      auto it = std::upper_bound(lo, hi, u);
      if (it == hi) --it;
      const std::size_t next = tables.target[static_cast<std::size_t>(it - tables.cumulative.begin())];
      ++step;
      if (next == sink) {
        ++out.tally[at - 1].absorbed;
        absorbed = true;
        break;
      }
      if (count[next]++ == 0) {
        touched.push_back(next);
        auto& t = out.tally[next - 1];
        ++t.first_count;
        t.first_sum += step;
        t.first_sq += step * step;
      }
      at = next;
    }
    if (!absorbed) ++out.cap_exceeded;
    for (auto v : touched) {
      auto& t = out.tally[v - 1];
      t.visits += count[v];
      t.visits_sq += count[v] * count[v];
      count[v] = 0;
    }
    touched.clear();
  }
}

}  // namespace

WalkEstimate simulate_walkers(const FlowNetwork& network, std::uint64_t n_walkers, std::uint64_t seed,
                              std::uint64_t step_cap) {
  if (n_walkers == 0) throw Error(ErrorCode::InvalidArgument, "need at least one walker");
  if (!validate(network).certified())
    throw Error(ErrorCode::NotCertified, "simulation needs a certified network (run validate/drop first)");

  const auto tables = build_tables(network);
  const std::size_t n = network.interior_count();
  const unsigned threads =
      static_cast<unsigned>(std::max<std::uint64_t>(1, std::min<std::uint64_t>({std::thread::hardware_concurrency(), 8u, n_walkers / 10000 + 1})));

  std::vector<Partial> parts(threads, Partial{std::vector<NodeTally>(n), 0});
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    const std::uint64_t first = n_walkers * t / threads, last = n_walkers * (t + 1) / threads;
    if (threads == 1)
      walk_range(network, tables, seed, first, last, step_cap, parts[t]);
    else
      pool.emplace_back([&, t, first, last] { walk_range(network, tables, seed, first, last, step_cap, parts[t]); });
  }
  for (auto& th : pool) th.join();

  WalkEstimate est;
  est.names = network.interior_names();
  est.tally.assign(n, NodeTally{});
  est.walkers = n_walkers;
  est.seed = seed;
  est.source_outflow = network.source_outflow();
  // Integer sums: merge order does not matter.
  for (const auto& p : parts) {
    est.cap_exceeded += p.cap_exceeded;
    for (std::size_t k = 0; k < n; ++k) {
      auto& d = est.tally[k];
      const auto& s = p.tally[k];
      d.visits += s.visits;
      d.visits_sq += s.visits_sq;
      d.absorbed += s.absorbed;
      d.first_count += s.first_count;
      d.first_sum += s.first_sum;
      d.first_sq += s.first_sq;
    }
  }
  return est;
}

void write_estimate_csv(std::ostream& out, const WalkEstimate& e) {
  out << "item,A_hat,D_hat,l_source_hat,A_hat_se,l_source_hat_se,visits,visits_sq,absorbed,first_count,first_sum,"
         "first_sq\n";
  for (std::size_t k = 0; k < e.names.size(); ++k) {
    const auto& t = e.tally[k];
    out << e.names[k] << ',' << text::format_number(e.A_hat(k)) << ',' << text::format_number(e.D_hat(k)) << ','
        << text::format_optional(e.l_hat(k)) << ',' << text::format_number(e.A_se(k)) << ','
        << text::format_optional(e.l_se(k)) << ',' << t.visits << ',' << t.visits_sq << ',' << t.absorbed << ','
        << t.first_count << ',' << t.first_sum << ',' << t.first_sq << '\n';
  }
}

std::string estimate_sidecar_json(const WalkEstimate& e) {
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["walkers"] = e.walkers;
  j["seed"] = e.seed;
  j["cap_exceeded"] = e.cap_exceeded;
  j["source_outflow"] = e.source_outflow;
  j["absorbed_total"] = e.total_absorbed();
  return j.dump(2) + "\n";
}

WalkEstimate read_estimate(std::istream& csv, std::istream& sidecar) {
  WalkEstimate e;
  auto j = nlohmann::json::parse(sidecar);
  e.walkers = j.at("walkers").get<std::uint64_t>();
  e.seed = j.at("seed").get<std::uint64_t>();
  e.cap_exceeded = j.at("cap_exceeded").get<std::uint64_t>();
  e.source_outflow = j.at("source_outflow").get<double>();
  std::string line;
  std::getline(csv, line);
  std::size_t line_no = 1;
  while (std::getline(csv, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    auto f = text::split(text::trim(line), ',');
    if (f.size() != 12)
      throw Error(ErrorCode::MalformedRecord, "estimate line " + std::to_string(line_no) + ": expected 12 columns");
    auto u = [&](std::size_t i) {
      auto v = text::parse_int(f[i]);
      if (!v || *v < 0)
        throw Error(ErrorCode::MalformedRecord, "estimate line " + std::to_string(line_no) + ": bad count");
      return static_cast<std::uint64_t>(*v);
    };
    e.names.emplace_back(f[0]);
    e.tally.push_back(NodeTally{u(6), u(7), u(8), u(9), u(10), u(11)});
  }
  return e;
}

// --- generators ------------------------------------------------------------

std::string_view family_name(GeneratorFamily family) noexcept {
  switch (family) {
    case GeneratorFamily::Chain: return "chain";
    case GeneratorFamily::Star: return "star";
    case GeneratorFamily::RandomTree: return "random-tree";
    case GeneratorFamily::RandomCyclic: return "random-cyclic";
    case GeneratorFamily::SessionLog: return "session-log";
  }
  return "unknown";
}

std::optional<GeneratorFamily> parse_family(std::string_view name) noexcept {
  for (auto f : {GeneratorFamily::Chain, GeneratorFamily::Star, GeneratorFamily::RandomTree,
                 GeneratorFamily::RandomCyclic, GeneratorFamily::SessionLog})
    if (family_name(f) == name) return f;
  return std::nullopt;
}

namespace {

std::vector<std::string> numbered(std::string_view prefix, std::size_t n) {
  std::vector<std::string> names;
  names.reserve(n);
  for (std::size_t i = 1; i <= n; ++i) names.push_back(std::string(prefix) + std::to_string(i));
  return names;
}

void check_spec(const GeneratorSpec& spec) {
  if (spec.size == 0) throw Error(ErrorCode::InvalidSpec, "generator size must be positive");
  if (!(spec.weight_scale > 0.0) || !std::isfinite(spec.weight_scale))
    throw Error(ErrorCode::InvalidSpec, "weight scale must be positive");
  if (spec.recirculation < 0.0 || spec.recirculation > 1.0)
    throw Error(ErrorCode::InvalidSpec, "recirculation probability must lie in [0, 1]");
  if (spec.family == GeneratorFamily::Star && spec.size < 2)
    throw Error(ErrorCode::InvalidSpec, "star needs a hub and at least one leaf");
  if (spec.planted_alpha && spec.family != GeneratorFamily::RandomCyclic)
    throw Error(ErrorCode::InvalidSpec, "planted exponent is only supported by random-cyclic");
  if (spec.planted_alpha && !(*spec.planted_alpha > 0.0 && *spec.planted_alpha < 1.0))
    throw Error(ErrorCode::InvalidSpec, "planted exponent must lie in (0, 1)");
}

std::uint64_t max_weight(const GeneratorSpec& spec) {
  return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(spec.weight_scale)));
}

FlowNetwork make_chain(const GeneratorSpec& spec) {
  const std::size_t n = spec.size;
  std::vector<Edge> edges;
  edges.push_back({FlowNetwork::kSource, 1, spec.weight_scale});
  for (std::size_t i = 1; i < n; ++i) edges.push_back({i, i + 1, spec.weight_scale});
  edges.push_back({n, n + 1, spec.weight_scale});
  return FlowNetwork(numbered("n", n), std::move(edges));
}

FlowNetwork make_star(const GeneratorSpec& spec) {
  const std::size_t n = spec.size;
  std::vector<std::string> names{"hub"};
  for (auto& leaf : numbered("leaf", n - 1)) names.push_back(std::move(leaf));
  std::vector<Edge> edges;
  edges.push_back({FlowNetwork::kSource, 1, spec.weight_scale * static_cast<double>(n - 1)});
  for (std::size_t k = 2; k <= n; ++k) {
    edges.push_back({1, k, spec.weight_scale});
    edges.push_back({k, n + 1, spec.weight_scale});
  }
  return FlowNetwork(std::move(names), std::move(edges));
}

FlowNetwork make_tree(const GeneratorSpec& spec) {
  Xoshiro256 rng(spec.seed);
  const std::size_t n = spec.size;
  const auto wmax = max_weight(spec);
  std::vector<Edge> edges;
  for (std::size_t k = 2; k <= n; ++k) {
    const std::size_t lo = spec.window ? (k > spec.window ? k - spec.window : 1) : 1;
    const auto parent = static_cast<std::size_t>(rng.between(lo, k - 1));
    edges.push_back({parent, k, static_cast<double>(rng.between(1, wmax))});
  }
  // A single node still needs flow through it.
  if (n == 1) edges.push_back({FlowNetwork::kSource, 1, static_cast<double>(wmax)});
  return balance(FlowNetwork(numbered("t", n), std::move(edges)));
}

// Distinct interior target for node i, or 0 when none is available.
std::size_t pick_target(Xoshiro256& rng, const GeneratorSpec& spec, std::size_t i, std::size_t n, bool backward) {
  std::size_t lo, hi;
  if (backward) {
    if (i == 1) return 0;
    hi = i - 1;
    lo = spec.window && i > spec.window ? i - spec.window : 1;
  } else {
    if (i == n) return 0;
    lo = i + 1;
    hi = spec.window ? std::min(n, i + spec.window) : n;
  }
  return static_cast<std::size_t>(rng.between(lo, hi));
}

FlowNetwork make_cyclic(const GeneratorSpec& spec) {
  Xoshiro256 rng(spec.seed);
  const std::size_t n = spec.size;
  const auto wmax = max_weight(spec);
  std::vector<Edge> edges;
  edges.reserve(n * (spec.out_degree + 2));
  std::vector<std::size_t> chosen;
  for (std::size_t i = 1; i <= n; ++i) {
    edges.push_back({FlowNetwork::kSource, i, static_cast<double>(rng.between(1, wmax))});
    edges.push_back({i, n + 1, static_cast<double>(rng.between(1, wmax))});
    chosen.clear();
    for (std::size_t d = 0; d < spec.out_degree; ++d) {
      std::size_t target = 0;
      for (int attempt = 0; attempt < 8 && target == 0; ++attempt) {
        const bool backward = rng.uniform() < spec.recirculation;
        const auto t = pick_target(rng, spec, i, n, backward);
        if (t != 0 && std::find(chosen.begin(), chosen.end(), t) == chosen.end()) target = t;
      }
      if (target == 0) continue;
      chosen.push_back(target);
      edges.push_back({i, target, static_cast<double>(rng.between(1, wmax))});
    }
  }
  return balance(FlowNetwork(numbered("c", n), std::move(edges)));
}

// Through-flows are drawn log-uniformly; each node dissipates exactly
// A^alpha and routes the remainder to nodes that still have in-flow
// capacity. Ten percent of every node's through-flow is reserved for
// SOURCE, so all S and D are positive.
FlowNetwork make_planted(const GeneratorSpec& spec) {
  Xoshiro256 rng(spec.seed);
  const std::size_t n = spec.size;
  const double alpha = *spec.planted_alpha;
  const double lo = std::log(10.0 * spec.weight_scale), hi = std::log(1e4 * spec.weight_scale);
  std::vector<double> through(n), capacity(n), received(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    through[k] = std::exp(lo + (hi - lo) * rng.uniform());
    capacity[k] = 0.9 * through[k];
  }
  std::vector<Edge> edges;
  std::size_t scan = 0;  // first node that may still have capacity
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = k + 1;
    const double dissipation = std::pow(through[k], alpha);
    edges.push_back({i, n + 1, dissipation});
    double remaining = through[k] - dissipation;
    for (std::size_t d = 0; d < spec.out_degree && remaining > 0.0; ++d) {
      const bool backward = rng.uniform() < spec.recirculation;
      const auto t = pick_target(rng, spec, i, n, backward);
      if (t == 0) continue;
      const double give = std::min(capacity[t - 1], remaining / static_cast<double>(spec.out_degree - d));
      if (give <= 0.0) continue;
      capacity[t - 1] -= give;
      received[t - 1] += give;
      remaining -= give;
      edges.push_back({i, t, give});
    }
    // Whatever is left goes to the first nodes with spare capacity.
    while (remaining > 0.0) {
      while (scan < n && capacity[scan] <= 1e-9 * through[scan]) ++scan;
      if (scan == n) break;
      const double give = std::min(capacity[scan], remaining);
      capacity[scan] -= give;
      received[scan] += give;
      remaining -= give;
      edges.push_back({i, scan + 1, give});
    }
    if (remaining > 0.0) throw Error(ErrorCode::InvalidSpec, "planted exponent leaves flow without capacity");
  }
  for (std::size_t k = 0; k < n; ++k) edges.push_back({FlowNetwork::kSource, k + 1, through[k] - received[k]});
  return FlowNetwork(numbered("c", n), std::move(edges));
}

}  // namespace

std::string generate_log_text(const GeneratorSpec& spec) {
  check_spec(spec);
  Xoshiro256 rng(spec.seed);
  const std::size_t n = spec.size;
  const std::size_t sessions = spec.sessions ? spec.sessions : 5 * n;
  // Zipf-like popularity over items.
  std::vector<double> cumulative(n);
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    acc += 1.0 / std::pow(static_cast<double>(k + 1), 0.8);
    cumulative[k] = acc;
  }
  for (auto& c : cumulative) c /= acc;
  auto popular = [&] {
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), rng.uniform());
    return static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cumulative.begin(), static_cast<std::ptrdiff_t>(n) - 1));
  };

  std::ostringstream out;
  for (std::size_t s = 0; s < std::max(sessions, n); ++s) {
    const std::string user = "u" + std::to_string(s + 1);
    // The first n sessions visit each item once, so every item has both
    // SOURCE in-flow and SINK out-flow.
    if (s < n) {
      out << user << ",p" << (s + 1) << '\n';
      continue;
    }
    std::vector<std::size_t> path{popular()};
    while (rng.uniform() < 0.75 && path.size() < 50) {
      if (path.size() > 1 && rng.uniform() < spec.recirculation)
        path.push_back(path[static_cast<std::size_t>(rng.between(0, path.size() - 2))]);
      else
        path.push_back(popular());
    }
    for (auto item : path) out << user << ",p" << (item + 1) << '\n';
  }
  return out.str();
}

FlowNetwork generate_network(const GeneratorSpec& spec) {
  check_spec(spec);
  switch (spec.family) {
    case GeneratorFamily::Chain: return make_chain(spec);
    case GeneratorFamily::Star: return make_star(spec);
    case GeneratorFamily::RandomTree: return make_tree(spec);
    case GeneratorFamily::RandomCyclic: return spec.planted_alpha ? make_planted(spec) : make_cyclic(spec);
    case GeneratorFamily::SessionLog: {
      auto log = parse_log_string(generate_log_text(spec));
      return build_flow_network(to_weighted(to_transition_edges(log, ConstructionMode::SessionClosed)));
    }
  }
  throw Error(ErrorCode::InvalidSpec, "unknown generator family");
}

std::variant<FlowNetwork, SessionLog> generate(const GeneratorSpec& spec) {
  if (spec.family == GeneratorFamily::SessionLog) return parse_log_string(generate_log_text(spec));
  return generate_network(spec);
}

// --- comparison ------------------------------------------------------------

double ZScores::worst() const { return std::max({std::abs(z_A), std::abs(z_D), std::abs(z_l)}); }

namespace {

double zscore(double estimate, double truth, double se) {
  const double diff = estimate - truth;
  if (se > 0.0) return diff / se;
  return std::abs(diff) <= 1e-9 * std::max(1.0, std::abs(truth)) ? 0.0 : std::numeric_limits<double>::infinity();
}

}  // namespace

ComparisonReport compare(const WalkEstimate& estimate, const NodeFlowStats& stats, const DistanceRow& source_distance,
                         double multiplier) {
  if (estimate.names != stats.names || source_distance.size() != stats.size())
    throw Error(ErrorCode::MismatchedNetworks, "estimate and analytic results describe different node tables");
  ComparisonReport report;
  report.multiplier = multiplier;
  const double n = static_cast<double>(estimate.walkers);
  const double total_d = stats.total_D();
  std::size_t ok_a = 0, ok_d = 0, ok_l = 0;
  for (std::size_t k = 0; k < stats.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    ZScores z;
    z.name = stats.names[k];
    z.z_A = zscore(estimate.A_hat(k), stats.A[i], estimate.A_se(k));
    // Binomial model with the analytic absorption probability.
    const double p = stats.D[i] / total_d;
    z.z_D = zscore(estimate.D_fraction(k), p, std::sqrt(p * (1.0 - p) / n));
    const auto l_hat = estimate.l_hat(k);
    if (l_hat && source_distance[k])
      z.z_l = zscore(*l_hat, *source_distance[k], estimate.l_se(k).value_or(0.0));
    else if (l_hat.has_value() != source_distance[k].has_value())
      z.z_l = std::numeric_limits<double>::infinity();
    ok_a += std::abs(z.z_A) <= multiplier;
    ok_d += std::abs(z.z_D) <= multiplier;
    ok_l += std::abs(z.z_l) <= multiplier;
    report.nodes.push_back(std::move(z));
  }
  const double count = std::max<double>(1.0, static_cast<double>(stats.size()));
  report.pass_fraction_A = static_cast<double>(ok_a) / count;
  report.pass_fraction_D = static_cast<double>(ok_d) / count;
  report.pass_fraction_l = static_cast<double>(ok_l) / count;
  report.worst_offenders = report.nodes;
  std::stable_sort(report.worst_offenders.begin(), report.worst_offenders.end(),
                   [](const ZScores& a, const ZScores& b) { return a.worst() > b.worst(); });
  if (report.worst_offenders.size() > 5) report.worst_offenders.resize(5);
  return report;
}

std::string comparison_json(const ComparisonReport& report, double required_fraction) {
  nlohmann::ordered_json j;
  j["multiplier"] = report.multiplier;
  j["required_fraction"] = required_fraction;
  j["pass"] = report.passes(required_fraction);
  j["pass_fraction"] = {{"A", report.pass_fraction_A}, {"D", report.pass_fraction_D}, {"l_source", report.pass_fraction_l}};
  auto finite = [](double v) -> nlohmann::ordered_json {
    if (std::isfinite(v)) return v;
    return nullptr;
  };
  nlohmann::ordered_json worst = nlohmann::ordered_json::array();
  for (const auto& z : report.worst_offenders)
    worst.push_back({{"item", z.name}, {"z_A", finite(z.z_A)}, {"z_D", finite(z.z_D)}, {"z_l_source", finite(z.z_l)}});
  j["worst_offenders"] = worst;
  return j.dump(2) + "\n";
}

}  // namespace attnflow
