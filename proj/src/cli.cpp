#include "attnflow/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "attnflow/distance.hpp"
#include "attnflow/error.hpp"
#include "attnflow/flowcalc.hpp"
#include "attnflow/ingest.hpp"
#include "attnflow/network.hpp"
#include "attnflow/oracle.hpp"
#include "attnflow/stats.hpp"
#include "attnflow/text.hpp"

namespace attnflow::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

const std::vector<std::string> kCommands{"ingest", "build",    "stats",    "distance", "fit",      "gini",    "zipf",
                                         "duplication", "regress", "simulate", "compare", "generate", "pipeline"};

// Files written by the current command; removed again if it fails.
class Artifacts {
 public:
  explicit Artifacts(fs::path dir) : dir_(std::move(dir)) {}

  void open() {
    if (!fs::exists(dir_)) {
      fs::create_directories(dir_);
      created_ = true;
    }
  }

  fs::path path(const std::string& name) const { return dir_ / name; }

  void write(const std::string& name, const std::string& content) {
    open();
    const auto p = path(name);
    written_.push_back(p);
    std::ofstream f(p, std::ios::binary);
    if (!f) throw Error(ErrorCode::IoError, "cannot write " + p.string());
    f << content;
    if (!f) throw Error(ErrorCode::IoError, "write failed for " + p.string());
  }

  template <typename Fn>
  void write_with(const std::string& name, Fn&& fn) {
    std::ostringstream os;
    fn(os);
    write(name, os.str());
  }

  void rollback() noexcept {
    std::error_code ec;
    for (const auto& p : written_) fs::remove(p, ec);
    if (created_ && fs::is_empty(dir_, ec)) fs::remove(dir_, ec);
  }

 private:
  fs::path dir_;
  bool created_ = false;
  std::vector<fs::path> written_;
};

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoError, "cannot read " + path);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void require(const std::string& value, const std::string& flag, const std::string& command) {
  if (value.empty()) throw Error(ErrorCode::InvalidArgument, command + " requires " + flag);
}

void require_file(const std::string& path) {
  if (!path.empty() && !fs::exists(path)) throw Error(ErrorCode::IoError, "no such file: " + path);
}

LogFormat log_format(const RunConfig& cfg) {
  LogFormat f;
  if (cfg.delimiter == "comma" || cfg.delimiter == ",")
    f.delimiter = ',';
  else if (cfg.delimiter == "tab" || cfg.delimiter == "\\t")
    f.delimiter = '\t';
  else
    throw Error(ErrorCode::InvalidArgument, "delimiter must be comma or tab");
  f.header = cfg.header;
  return f;
}

ConstructionMode construction_mode(const RunConfig& cfg) {
  auto m = parse_mode(cfg.mode);
  if (!m) throw Error(ErrorCode::InvalidArgument, "mode must be session-closed or residual");
  return *m;
}

std::uint64_t walker_count(const std::string& text) {
  auto v = text::parse_double(text);
  if (!v || *v < 1 || *v != std::floor(*v) || *v > 1e15)
    throw Error(ErrorCode::InvalidArgument, "walkers must be a positive integer (e.g. 1e6)");
  return static_cast<std::uint64_t>(*v);
}

SessionLog load_log(const RunConfig& cfg) {
  std::ifstream f(cfg.input, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoError, "cannot read " + cfg.input);
  return sessionize(parse_log(f, log_format(cfg)), cfg.gap_seconds);
}

struct Loaded {
  FlowNetwork network;
  ValidationReport report;
  std::vector<std::string> dropped;
  std::optional<SessionLog> log;
};

FlowNetwork read_network_file(const std::string& path) {
  std::ifstream csv(path, std::ios::binary);
  if (!csv) throw Error(ErrorCode::IoError, "cannot read " + path);
  auto edges = read_edge_csv(csv);
  std::vector<std::string> order;
  auto sidecar = fs::path(path).replace_extension(".json");
  if (fs::exists(sidecar)) {
    std::ifstream js(sidecar);
    order = read_sidecar_node_order(js);
  }
  return build_flow_network(edges, order);
}

Loaded load_network(const RunConfig& cfg, std::ostream& err) {
  Loaded loaded;
  FlowNetwork raw;
  if (!cfg.network.empty()) {
    raw = read_network_file(cfg.network);
  } else {
    loaded.log = load_log(cfg);
    for (const auto& w : loaded.log->warnings) err << "warning: " << w << '\n';
    raw = build_flow_network(to_weighted(to_transition_edges(*loaded.log, construction_mode(cfg))));
  }
  FlowNetwork balanced = balance(raw);
  auto report = validate(balanced);
  if (!report.certified()) {
    if (cfg.trapped == "fail")
      throw Error(ErrorCode::NotCertified,
                  std::to_string(report.unreachable.size()) + " unreachable and " +
                      std::to_string(report.trapped.size()) + " trapped nodes");
    auto dropped = drop_uncertified(balanced, report);
    err << "warning: dropped " << dropped.warning_count() << " uncertified nodes\n";
    balanced = std::move(dropped.network);
    loaded.dropped = std::move(dropped.dropped);
    report = validate(balanced);
  }
  loaded.network = std::move(balanced);
  loaded.report = std::move(report);
  return loaded;
}

struct Analysis {
  TransitionMatrix m;
  FundamentalMatrix u;
  NodeFlowStats stats;
};

Analysis analyse(const FlowNetwork& net, const RunConfig& cfg) {
  auto m = transition_matrix(net);
  SolverOptions opts;
  opts.dense_threshold = cfg.dense_threshold;
  auto u = FundamentalMatrix::compute(m, opts);
  auto stats = node_flows(net, u);
  return {std::move(m), std::move(u), std::move(stats)};
}

void write_stats_csv(std::ostream& out, const NodeFlowStats& s) {
  out << "item,A,D,S,F,C,phi\n";
  for (std::size_t k = 0; k < s.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    out << s.names[k] << ',' << text::format_number(s.A[i]) << ',' << text::format_number(s.D[i]) << ','
        << text::format_number(s.S[i]) << ',' << text::format_number(s.F[i]) << ',' << text::format_number(s.C[i])
        << ',' << text::format_number(s.phi[i]) << '\n';
  }
}

json network_json(const FlowNetwork& net, const ValidationReport& report, const std::vector<std::string>& dropped) {
  json j;
  j["interior_nodes"] = net.interior_count();
  j["edges"] = net.edge_count();
  j["source_outflow"] = net.source_outflow();
  j["sink_inflow"] = net.sink_inflow();
  j["certified"] = report.certified();
  j["max_abs_residual"] = report.max_abs_residual;
  j["dropped_nodes"] = dropped.size();
  return j;
}

json solver_json(const FundamentalMatrix& u) {
  json j;
  j["path"] = u.is_dense() ? "dense" : "sparse";
  j["condition_inf"] = u.condition();
  j["identity_residual"] = u.identity_residual();
  return j;
}

json stats_aggregates(const NodeFlowStats& s) {
  json j;
  j["sum_A"] = s.total_A();
  j["sum_D"] = s.total_D();
  j["sum_S"] = s.S.sum();
  j["nodes"] = s.size();
  return j;
}

json fit_json(const PowerLawFit& f, const std::string& x, const std::string& y) {
  json j;
  j["x"] = x;
  j["y"] = y;
  j["exponent"] = f.exponent;
  j["intercept"] = f.intercept;
  j["r_squared"] = f.r_squared;
  j["stderr_exponent"] = f.stderr_exponent;
  j["n_points"] = f.n_points;
  j["dropped_nonpositive"] = f.dropped_nonpositive;
  return j;
}

json error_json(const Error& e) {
  json j;
  j["error"] = std::string(code_name(e.code()));
  j["message"] = e.what();
  return j;
}

std::string fit_text(const PowerLawFit& f, const std::string& x, const std::string& y) {
  std::ostringstream os;
  os << y << " ~ " << x << "^exponent\n";
  os << "exponent  " << text::format_number(f.exponent) << " (se " << text::format_number(f.stderr_exponent) << ")\n";
  os << "intercept " << text::format_number(f.intercept) << " (natural log)\n";
  os << "R^2       " << text::format_number(f.r_squared) << "\n";
  os << "points    " << f.n_points << " (dropped " << f.dropped_nonpositive << " non-positive)\n";
  return os.str();
}

json regression_json(const RegressionResult& r) {
  json j;
  json coefs = json::array();
  for (const auto& c : r.coefficients)
    coefs.push_back({{"term", c.name}, {"estimate", c.estimate}, {"std_error", c.std_error}, {"t", c.t_statistic}});
  j["coefficients"] = coefs;
  j["r_squared"] = r.r_squared;
  j["n_observations"] = r.n_observations;
  j["residual_std_error"] = r.residual_std_error;
  return j;
}

// Columns of a stats CSV keyed by header name.
struct Table {
  std::vector<std::string> items;
  std::map<std::string, std::vector<std::optional<double>>> columns;

  std::vector<double> column(const std::string& name) const {
    auto it = columns.find(name);
    if (it == columns.end()) throw Error(ErrorCode::InvalidArgument, "no column named " + name);
    std::vector<double> out;
    out.reserve(it->second.size());
    for (const auto& v : it->second) out.push_back(v.value_or(std::nan("")));
    return out;
  }
};

Table read_table(const std::string& path) {
  std::istringstream in(read_file(path));
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::EmptyInput, path + " is empty");
  auto header = text::split(text::trim(line), ',');
  std::vector<std::string> names(header.begin(), header.end());
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    auto f = text::split(text::trim(line), ',');
    if (f.size() != names.size())
      throw Error(ErrorCode::MalformedRecord, path + " line " + std::to_string(line_no) + ": column count mismatch");
    t.items.emplace_back(f[0]);
    for (std::size_t c = 1; c < f.size(); ++c) {
      auto v = text::parse_double(f[c]);
      if (!v && !text::trim(f[c]).empty())
        throw Error(ErrorCode::MalformedRecord, path + " line " + std::to_string(line_no) + ": bad number");
      t.columns[names[c]].push_back(v);
    }
  }
  return t;
}

std::string lorenz_csv(const std::vector<double>& values) {
  std::vector<double> sorted(values);
  std::sort(sorted.begin(), sorted.end());
  double total = 0.0;
  for (double v : sorted) total += v;
  std::ostringstream os;
  os << "population_share,value_share\n0,0\n";
  double acc = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    acc += sorted[i];
    os << text::format_number(static_cast<double>(i + 1) / static_cast<double>(sorted.size())) << ','
       << text::format_number(total > 0 ? acc / total : 0.0) << '\n';
  }
  return os.str();
}

std::string scatter_csv(const std::string& xname, const std::vector<double>& x, const std::string& yname,
                        const std::vector<double>& y) {
  std::ostringstream os;
  os << xname << ',' << yname << '\n';
  for (std::size_t i = 0; i < x.size(); ++i) os << text::format_number(x[i]) << ',' << text::format_number(y[i]) << '\n';
  return os.str();
}

std::string zipf_csv(const std::vector<double>& values) {
  std::ostringstream os;
  write_zipf_csv(os, zipf_table(values));
  return os.str();
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

std::string duplication_edges_csv(const DuplicationResult& d) {
  std::ostringstream os;
  os << "a,b,observed,expected,retained\n";
  for (const auto& e : d.edges)
    os << d.items[e.a] << ',' << d.items[e.b] << ',' << e.observed << ',' << text::format_number(e.expected) << ','
       << (e.retained ? 1 : 0) << '\n';
  return os.str();
}

std::string duplication_degree_csv(const DuplicationResult& d) {
  std::ostringstream os;
  os << "item,audience,degree_before,degree_after\n";
  for (std::size_t k = 0; k < d.items.size(); ++k)
    os << d.items[k] << ',' << d.audience[k] << ',' << d.degree_before[k] << ',' << d.degree_after[k] << '\n';
  return os.str();
}

json duplication_json(const DuplicationResult& d) {
  json j;
  j["items"] = d.items.size();
  j["total_users"] = d.total_users;
  j["overlap_edges"] = d.edges.size();
  j["retained_edges"] = d.retained_count();
  return j;
}

void write_duplication(Artifacts& art, const DuplicationResult& d) {
  std::vector<double> before(d.degree_before.begin(), d.degree_before.end());
  std::vector<double> after(d.degree_after.begin(), d.degree_after.end());
  art.write("duplication_edges.csv", duplication_edges_csv(d));
  art.write("duplication_degree.csv", duplication_degree_csv(d));
  art.write("zipf_degree_before.csv", zipf_csv(before));
  art.write("zipf_degree_after.csv", zipf_csv(after));
}

std::string config_text(const RunConfig& c) {
  std::ostringstream os;
  auto kv = [&](const char* k, const auto& v) { os << k << " = " << v << '\n'; };
  kv("command", c.command);
  kv("input", c.input);
  kv("network", c.network);
  kv("stats", c.stats);
  kv("distances", c.distances);
  kv("estimates", c.estimates);
  kv("delimiter", c.delimiter);
  kv("header", c.header ? "true" : "false");
  kv("mode", c.mode);
  kv("gap-seconds", c.gap_seconds ? std::to_string(*c.gap_seconds) : std::string());
  kv("dense-threshold", c.dense_threshold);
  kv("pairwise-cap", c.pairwise_cap);
  kv("pairwise", c.pairwise ? "true" : "false");
  kv("trapped", c.trapped);
  kv("seed", c.seed);
  // The output directory is omitted so runs into different directories match.
  std::string analyses;
  for (const auto& a : c.analyses) analyses += (analyses.empty() ? "" : ",") + a;
  kv("analyses", analyses);
  kv("x", c.x);
  kv("y", c.y);
  kv("column", c.column);
  kv("intercept", c.intercept ? "true" : "false");
  kv("walkers", c.walkers);
  kv("multiplier", text::format_number(c.multiplier));
  kv("required-fraction", text::format_number(c.required_fraction));
  kv("family", c.family);
  kv("size", c.size);
  kv("scale", text::format_number(c.scale));
  kv("recirculation", text::format_number(c.recirculation));
  kv("out-degree", c.out_degree);
  kv("window", c.window);
  kv("planted-alpha", c.planted_alpha ? text::format_number(*c.planted_alpha) : std::string());
  kv("sessions", c.sessions);
  return os.str();
}

GeneratorSpec generator_spec(const RunConfig& cfg) {
  GeneratorSpec spec;
  auto fam = parse_family(cfg.family);
  if (!fam) throw Error(ErrorCode::InvalidSpec, "unknown generator family " + cfg.family);
  spec.family = *fam;
  spec.size = cfg.size;
  spec.weight_scale = cfg.scale;
  spec.recirculation = cfg.recirculation;
  spec.seed = cfg.seed;
  spec.out_degree = cfg.out_degree;
  spec.window = cfg.window;
  spec.sessions = cfg.sessions;
  spec.planted_alpha = cfg.planted_alpha;
  return spec;
}

void write_network(Artifacts& art, const FlowNetwork& net, const ValidationReport& report) {
  art.write_with("network.csv", [&](std::ostream& os) { write_network_csv(os, net); });
  art.write("network.json", network_sidecar_json(net, report));
}

// --- commands --------------------------------------------------------------

void cmd_ingest(const RunConfig& cfg, Artifacts& art, std::ostream& out, std::ostream& err) {
  require(cfg.input, "--input", "ingest");
  auto log = load_log(cfg);
  for (const auto& w : log.warnings) err << "warning: " << w << '\n';
  auto edges = to_transition_edges(log, construction_mode(cfg));
  art.write_with("edges.csv", [&](std::ostream& os) { write_edges(os, edges); });
  json j;
  j["records"] = log.total_records();
  j["users"] = log.total_users();
  j["sessions"] = log.total_sessions();
  j["visits"] = log.total_visits();
  j["items"] = log.items.size();
  j["mode"] = cfg.mode;
  j["edges"] = edges.size();
  j["warnings"] = log.warnings;
  art.write("log_summary.json", j.dump(2) + "\n");
  out << "ingested " << log.total_records() << " records, " << log.total_users() << " users, " << edges.size()
      << " edges\n";
}

void cmd_build(const RunConfig& cfg, Artifacts& art, std::ostream& out, std::ostream& err) {
  if (cfg.network.empty()) require(cfg.input, "--input or --network", "build");
  auto loaded = load_network(cfg, err);
  write_network(art, loaded.network, loaded.report);
  out << "network: " << loaded.network.interior_count() << " nodes, " << loaded.network.edge_count() << " edges"
      << (loaded.report.certified() ? ", certified" : "") << '\n';
}

void cmd_stats(const RunConfig& cfg, Artifacts& art, std::ostream& out, std::ostream& err) {
  if (cfg.network.empty()) require(cfg.input, "--input or --network", "stats");
  auto loaded = load_network(cfg, err);
  auto a = analyse(loaded.network, cfg);
  art.write_with("stats.csv", [&](std::ostream& os) { write_stats_csv(os, a.stats); });
  json j;
  j["network"] = network_json(loaded.network, loaded.report, loaded.dropped);
  j["solver"] = solver_json(a.u);
  j["aggregates"] = stats_aggregates(a.stats);
  art.write("stats.json", j.dump(2) + "\n");
  out << "sum A = " << text::format_number(a.stats.total_A()) << ", sum D = " << text::format_number(a.stats.total_D())
      << '\n';
}

void cmd_distance(const RunConfig& cfg, Artifacts& art, std::ostream& out, std::ostream& err) {
  if (cfg.network.empty()) require(cfg.input, "--input or --network", "distance");
  auto loaded = load_network(cfg, err);
  if (cfg.pairwise && loaded.network.interior_count() > cfg.pairwise_cap)
    throw Error(ErrorCode::SizeGuard, "pairwise distances for " + std::to_string(loaded.network.interior_count()) +
                                          " nodes exceed --pairwise-cap " + std::to_string(cfg.pairwise_cap));
  auto m = transition_matrix(loaded.network);
  SolverOptions opts;
  opts.dense_threshold = cfg.dense_threshold;
  auto u = FundamentalMatrix::compute(m, opts);
  const auto& names = loaded.network.interior_names();
  if (cfg.pairwise) {
    auto set = distance_set(loaded.network, m, u, cfg.pairwise_cap);
    art.write_with("source_distances.csv", [&](std::ostream& os) { write_source_distances_csv(os, names, set.source_distance); });
    art.write_with("pairwise_distances.csv", [&](std::ostream& os) { write_pairwise_csv(os, names, set); });
  } else {
    auto l0 = source_distances(loaded.network, m, u);
    art.write_with("source_distances.csv", [&](std::ostream& os) { write_source_distances_csv(os, names, l0); });
  }
  out << "distances for " << names.size() << " nodes\n";
}

void cmd_fit(const RunConfig& cfg, Artifacts& art, std::ostream& out) {
  require(cfg.stats, "--stats", "fit");
  auto t = read_table(cfg.stats);
  auto f = fit_power_law(t.column(cfg.x), t.column(cfg.y));
  json j = fit_json(f, cfg.x, cfg.y);
  art.write("fit.json", j.dump(2) + "\n");
  art.write("fit.txt", fit_text(f, cfg.x, cfg.y));
  out << fit_text(f, cfg.x, cfg.y);
}

void cmd_gini(const RunConfig& cfg, Artifacts& art, std::ostream& out) {
  require(cfg.stats, "--stats", "gini");
  auto values = read_table(cfg.stats).column(cfg.column);
  const double g = gini(values);
  json j;
  j["column"] = cfg.column;
  j["gini"] = g;
  j["n"] = values.size();
  art.write("gini_" + cfg.column + ".json", j.dump(2) + "\n");
  art.write("lorenz_" + cfg.column + ".csv", lorenz_csv(values));
  out << "gini(" << cfg.column << ") = " << text::format_number(g) << '\n';
}

void cmd_zipf(const RunConfig& cfg, Artifacts& art, std::ostream& out) {
  require(cfg.stats, "--stats", "zipf");
  auto values = read_table(cfg.stats).column(cfg.column);
  art.write("zipf_" + cfg.column + ".csv", zipf_csv(values));
  out << "zipf table for " << values.size() << " values\n";
}

void cmd_duplication(const RunConfig& cfg, Artifacts& art, std::ostream& out) {
  require(cfg.input, "--input", "duplication");
  auto log = load_log(cfg);
  auto d = duplication_filter(log);
  write_duplication(art, d);
  art.write("duplication.json", duplication_json(d).dump(2) + "\n");
  out << d.retained_count() << " of " << d.edges.size() << " overlap edges retained\n";
}

void cmd_regress(const RunConfig& cfg, Artifacts& art, std::ostream& out) {
  require(cfg.stats, "--stats", "regress");
  require(cfg.distances, "--distances", "regress");
  auto t = read_table(cfg.stats);
  auto d = read_table(cfg.distances);
  if (t.items != d.items) throw Error(ErrorCode::MismatchedNetworks, "stats and distances list different items");
  NodeFlowStats s;
  s.names = t.items;
  auto vec = [&](const std::string& c) {
    auto v = t.column(c);
    return Eigen::VectorXd(Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
  };
  s.A = vec("A");
  s.D = vec("D");
  s.S = vec("S");
  s.F = vec("F");
  s.C = vec("C");
  s.phi = vec("phi");
  DistanceRow l0 = d.columns.at("l_source");
  auto table = regression_feature_table(s, l0);
  auto r = ols_regress(table.response, table.features, cfg.intercept);
  json j = regression_json(r);
  j["dropped_rows"] = table.dropped;
  art.write("regression.json", j.dump(2) + "\n");
  art.write_with("regression.txt", [&](std::ostream& os) { write_regression_text(os, r); });
  write_regression_text(out, r);
}

void cmd_simulate(const RunConfig& cfg, Artifacts& art, std::ostream& out, std::ostream& err) {
  if (cfg.network.empty()) require(cfg.input, "--input or --network", "simulate");
  auto loaded = load_network(cfg, err);
  auto est = simulate_walkers(loaded.network, walker_count(cfg.walkers), cfg.seed);
  art.write_with("estimates.csv", [&](std::ostream& os) { write_estimate_csv(os, est); });
  art.write("estimates.json", estimate_sidecar_json(est));
  out << "simulated " << est.walkers << " walkers (" << est.cap_exceeded << " hit the step cap)\n";
}

void cmd_compare(const RunConfig& cfg, Artifacts& art, std::ostream& out, std::ostream& err) {
  if (cfg.network.empty()) require(cfg.input, "--input or --network", "compare");
  require(cfg.estimates, "--estimates", "compare");
  auto loaded = load_network(cfg, err);
  auto a = analyse(loaded.network, cfg);
  auto l0 = source_distances(loaded.network, a.m, a.u);
  std::ifstream csv(cfg.estimates, std::ios::binary);
  std::ifstream sidecar(fs::path(cfg.estimates).replace_extension(".json"));
  if (!csv || !sidecar) throw Error(ErrorCode::IoError, "cannot read estimates " + cfg.estimates + " and its .json sidecar");
  auto est = read_estimate(csv, sidecar);
  auto report = compare(est, a.stats, l0, cfg.multiplier);
  art.write("comparison.json", comparison_json(report, cfg.required_fraction));
  out << (report.passes(cfg.required_fraction) ? "PASS" : "FAIL") << " at " << text::format_number(cfg.multiplier)
      << " standard errors (A " << text::format_number(report.pass_fraction_A) << ", D "
      << text::format_number(report.pass_fraction_D) << ", l_source " << text::format_number(report.pass_fraction_l)
      << ")\n";
}

void cmd_generate(const RunConfig& cfg, Artifacts& art, std::ostream& out) {
  auto spec = generator_spec(cfg);
  if (spec.family == GeneratorFamily::SessionLog) {
    auto text = generate_log_text(spec);
    art.write("sessions.csv", text);
    out << "generated session log\n";
    return;
  }
  auto net = generate_network(spec);
  write_network(art, net, validate(net));
  out << "generated " << family_name(spec.family) << " network: " << net.interior_count() << " nodes, "
      << net.edge_count() << " edges\n";
}

bool wants(const RunConfig& cfg, const std::string& analysis) {
  return std::find(cfg.analyses.begin(), cfg.analyses.end(), analysis) != cfg.analyses.end();
}

void cmd_pipeline(const RunConfig& cfg, Artifacts& art, std::ostream& out, std::ostream& err) {
  if (cfg.network.empty()) require(cfg.input, "--input or --network", "pipeline");
  static const std::vector<std::string> known{"stats", "distance", "fits", "concentration", "duplication",
                                              "regression", "simulate", "pairwise"};
  for (const auto& a : cfg.analyses)
    if (std::find(known.begin(), known.end(), a) == known.end())
      throw Error(ErrorCode::InvalidArgument, "unknown analysis " + a);

  auto loaded = load_network(cfg, err);
  const auto& net = loaded.network;
  json summary;
  summary["schema_version"] = kSummarySchemaVersion;
  summary["tool_version"] = ATTNFLOW_VERSION;
  json input;
  input["kind"] = loaded.log ? "log" : "network";
  if (loaded.log) {
    input["mode"] = cfg.mode;
    input["records"] = loaded.log->total_records();
    input["users"] = loaded.log->total_users();
    input["sessions"] = loaded.log->total_sessions();
    input["visits"] = loaded.log->total_visits();
  }
  summary["input"] = input;
  summary["network"] = network_json(net, loaded.report, loaded.dropped);
  write_network(art, net, loaded.report);

  auto a = analyse(net, cfg);
  summary["solver"] = solver_json(a.u);
  summary["totals"] = stats_aggregates(a.stats);
  art.write_with("stats.csv", [&](std::ostream& os) { write_stats_csv(os, a.stats); });

  DistanceRow l0;
  if (wants(cfg, "distance") || wants(cfg, "regression") || wants(cfg, "simulate")) {
    if (wants(cfg, "pairwise")) {
      auto set = distance_set(net, a.m, a.u, cfg.pairwise_cap);
      l0 = set.source_distance;
      art.write_with("pairwise_distances.csv",
                     [&](std::ostream& os) { write_pairwise_csv(os, net.interior_names(), set); });
    } else {
      l0 = source_distances(net, a.m, a.u);
    }
    art.write_with("source_distances.csv",
                   [&](std::ostream& os) { write_source_distances_csv(os, net.interior_names(), l0); });
  }

  const auto A = to_std(a.stats.A), D = to_std(a.stats.D), S = to_std(a.stats.S), C = to_std(a.stats.C);
  if (wants(cfg, "fits")) {
    json fits;
    auto try_fit = [&](const char* key, const std::string& xn, const std::vector<double>& x, const std::string& yn,
                       const std::vector<double>& y) {
      try {
        fits[key] = fit_json(fit_power_law(x, y), xn, yn);
      } catch (const Error& e) {
        fits[key] = error_json(e);
      }
      art.write("scatter_" + xn + "_" + yn + ".csv", scatter_csv(xn, x, yn, y));
    };
    try_fit("alpha", "A", A, "D", D);
    try_fit("beta", "S", S, "A", A);
    try_fit("eta", "A", A, "C", C);
    if (loaded.log) {
      // Distinct users per item against page views.
      auto audience = loaded.log->users_per_item();
      std::vector<double> uv, pv;
      for (std::size_t k = 0; k < net.interior_count(); ++k) {
        auto idx = std::find(loaded.log->items.begin(), loaded.log->items.end(), net.interior_names()[k]);
        uv.push_back(static_cast<double>(audience[static_cast<std::size_t>(idx - loaded.log->items.begin())]));
        pv.push_back(A[k]);
      }
      try_fit("uv_pv", "UV", uv, "PV", pv);
    }
    summary["fits"] = fits;
  }

  if (wants(cfg, "concentration")) {
    json conc;
    auto try_gini = [&](const char* key, const std::vector<double>& v) {
      try {
        conc[key] = gini(v);
      } catch (const Error& e) {
        conc[key] = error_json(e);
      }
    };
    try_gini("gini_A", A);
    try_gini("gini_D", D);
    try_gini("gini_C", C);
    summary["concentration"] = conc;
    art.write("zipf_A.csv", zipf_csv(A));
    art.write("zipf_D.csv", zipf_csv(D));
    art.write("zipf_C.csv", zipf_csv(C));
    art.write("lorenz_A.csv", lorenz_csv(A));
    art.write("lorenz_D.csv", lorenz_csv(D));
  }

  if (wants(cfg, "duplication") && loaded.log && loaded.log->items.size() >= 2) {
    auto d = duplication_filter(*loaded.log);
    write_duplication(art, d);
    summary["duplication"] = duplication_json(d);
  }

  if (wants(cfg, "regression")) {
    try {
      auto table = regression_feature_table(a.stats, l0);
      auto r = ols_regress(table.response, table.features, cfg.intercept);
      json model = regression_json(r);
      model["response"] = "ln_A";
      model["dropped_rows"] = table.dropped;
      summary["regression"] = {{"model_1", model}};
      art.write_with("regression.txt", [&](std::ostream& os) { write_regression_text(os, r); });
    } catch (const Error& e) {
      summary["regression"] = {{"model_1", error_json(e)}};
    }
  }

  if (wants(cfg, "simulate")) {
    auto est = simulate_walkers(net, walker_count(cfg.walkers), cfg.seed);
    auto report = compare(est, a.stats, l0, cfg.multiplier);
    art.write_with("estimates.csv", [&](std::ostream& os) { write_estimate_csv(os, est); });
    art.write("estimates.json", estimate_sidecar_json(est));
    art.write("comparison.json", comparison_json(report, cfg.required_fraction));
    summary["oracle"] = {{"walkers", est.walkers}, {"seed", est.seed}, {"pass", report.passes(cfg.required_fraction)}};
  }

  art.write("summary.json", summary.dump(2) + "\n");
  out << "pipeline: " << net.interior_count() << " nodes, sum A = " << text::format_number(a.stats.total_A())
      << ", sum D = " << text::format_number(a.stats.total_D()) << '\n';
}

// Key-value config file lines become leading flags; later flags win.
std::vector<std::string> config_args(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<std::string> args;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto view = text::trim(line);
    if (view.empty() || view.front() == '#') continue;
    auto eq = view.find('=');
    if (eq == std::string_view::npos)
      throw Error(ErrorCode::MalformedRecord, path + " line " + std::to_string(line_no) + ": expected key = value");
    std::string key(text::trim(view.substr(0, eq)));
    std::string value(text::trim(view.substr(eq + 1)));
    if (key == "header" || key == "pairwise") {
      if (value == "true") args.push_back("--" + key);
      continue;
    }
    if (key == "intercept") {
      if (value == "false") args.push_back("--no-intercept");
      continue;
    }
    args.push_back("--" + key);
    args.push_back(value);
  }
  return args;
}

}  // namespace

int run(const std::vector<std::string>& args_in, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  CLI::App app{"attnflow: attention flow network analysis", "attnflow"};
  app.set_version_flag("--version", std::string("attnflow ") + ATTNFLOW_VERSION);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  std::string config_path;
  std::string gap_text, alpha_text, analyses_text;
  bool no_intercept = false;

  app.add_option("command", cfg.command, "ingest|build|stats|distance|fit|gini|zipf|duplication|regress|simulate|compare|generate|pipeline")
      ->required();
  app.add_option("--config", config_path, "key = value config file; flags override it");
  app.add_option("--input", cfg.input, "session log (user,item[,timestamp])");
  app.add_option("--network", cfg.network, "network edge CSV (src,dst,weight)");
  app.add_option("--stats", cfg.stats, "stats CSV written by `stats`");
  app.add_option("--distances", cfg.distances, "source distance CSV written by `distance`");
  app.add_option("--estimates", cfg.estimates, "estimate CSV written by `simulate`");
  app.add_option("--delimiter", cfg.delimiter, "log delimiter: comma or tab");
  app.add_flag("--header", cfg.header, "log has a header line");
  app.add_option("--mode", cfg.mode, "session-closed or residual");
  app.add_option("--gap-seconds", gap_text, "split sessions at gaps longer than this");
  app.add_option("--dense-threshold", cfg.dense_threshold, "largest N solved densely");
  app.add_option("--pairwise-cap", cfg.pairwise_cap, "largest N for pairwise distances");
  app.add_flag("--pairwise", cfg.pairwise, "also write pairwise distances");
  app.add_option("--trapped", cfg.trapped, "drop or fail on uncertified nodes");
  app.add_option("--seed", cfg.seed, "random seed");
  app.add_option("--out", cfg.out, "output directory");
  app.add_option("--analyses", analyses_text, "comma list for pipeline");
  app.add_option("--x", cfg.x, "fit: x column");
  app.add_option("--y", cfg.y, "fit: y column");
  app.add_option("--column", cfg.column, "gini/zipf column");
  app.add_flag("--no-intercept", no_intercept, "regress without a constant");
  app.add_option("--walkers", cfg.walkers, "walker count, e.g. 1e6");
  app.add_option("--multiplier", cfg.multiplier, "z-score bound for compare");
  app.add_option("--required-fraction", cfg.required_fraction, "fraction of nodes that must pass");
  app.add_option("--family", cfg.family, "chain|star|random-tree|random-cyclic|session-log");
  app.add_option("--size", cfg.size, "generated node count");
  app.add_option("--scale", cfg.scale, "generated weight scale");
  app.add_option("--recirculation", cfg.recirculation, "backward edge probability");
  app.add_option("--out-degree", cfg.out_degree, "interior out-edges per node");
  app.add_option("--window", cfg.window, "edge locality window (0 = global)");
  app.add_option("--planted-alpha", alpha_text, "plant D = A^alpha (random-cyclic)");
  app.add_option("--sessions", cfg.sessions, "session-log: number of sessions");

  std::unique_ptr<Artifacts> artifacts;
  try {
    std::vector<std::string> args = args_in;
    // Pull --config out first so its values can precede the flags.
    for (std::size_t i = 0; i + 1 < args.size(); ++i)
      if (args[i] == "--config") {
        auto extra = config_args(args[i + 1]);
        args.insert(args.begin(), extra.begin(), extra.end());
        break;
      }
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
      app.parse(reversed);
    } catch (const CLI::Success&) {
      // --help / --version
      out << (app.get_help_ptr()->count() ? app.help() : app.version()) << (app.get_help_ptr()->count() ? "" : "\n");
      return 0;
    } catch (const CLI::ParseError& e) {
      err << "error code=UsageError message=\"" << e.what() << "\"\n";
      return 2;
    }
    if (std::find(kCommands.begin(), kCommands.end(), cfg.command) == kCommands.end())
      throw Error(ErrorCode::InvalidArgument, "unknown command " + cfg.command);
    if (!gap_text.empty()) {
      auto g = text::parse_int(gap_text);
      if (!g) throw Error(ErrorCode::InvalidArgument, "--gap-seconds must be an integer");
      cfg.gap_seconds = *g;
    }
    if (!alpha_text.empty()) {
      auto a = text::parse_double(alpha_text);
      if (!a) throw Error(ErrorCode::InvalidArgument, "--planted-alpha must be a number");
      cfg.planted_alpha = *a;
    }
    if (!analyses_text.empty()) {
      cfg.analyses.clear();
      for (auto part : text::split(analyses_text, ','))
        if (!text::trim(part).empty()) cfg.analyses.emplace_back(text::trim(part));
    }
    cfg.intercept = !no_intercept;
    if (cfg.trapped != "drop" && cfg.trapped != "fail") throw Error(ErrorCode::InvalidArgument, "--trapped must be drop or fail");
    for (const auto* p : {&cfg.input, &cfg.network, &cfg.stats, &cfg.distances, &cfg.estimates}) require_file(*p);

    artifacts = std::make_unique<Artifacts>(cfg.out);
    artifacts->write("effective_config.txt", config_text(cfg));
    auto& art = *artifacts;
    const auto& c = cfg.command;
    if (c == "ingest") cmd_ingest(cfg, art, out, err);
    else if (c == "build") cmd_build(cfg, art, out, err);
    else if (c == "stats") cmd_stats(cfg, art, out, err);
    else if (c == "distance") cmd_distance(cfg, art, out, err);
    else if (c == "fit") cmd_fit(cfg, art, out);
    else if (c == "gini") cmd_gini(cfg, art, out);
    else if (c == "zipf") cmd_zipf(cfg, art, out);
    else if (c == "duplication") cmd_duplication(cfg, art, out);
    else if (c == "regress") cmd_regress(cfg, art, out);
    else if (c == "simulate") cmd_simulate(cfg, art, out, err);
    else if (c == "compare") cmd_compare(cfg, art, out, err);
    else if (c == "generate") cmd_generate(cfg, art, out);
    else if (c == "pipeline") cmd_pipeline(cfg, art, out, err);
    return 0;
  } catch (const Error& e) {
    if (artifacts) artifacts->rollback();
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::replace(msg.begin(), msg.end(), '"', '\'');
    err << "error code=" << code_name(e.code()) << " message=\"" << msg << "\"\n";
    return 1;
  } catch (const std::exception& e) {
    if (artifacts) artifacts->rollback();
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::replace(msg.begin(), msg.end(), '"', '\'');
    err << "error code=InternalError message=\"" << msg << "\"\n";
    return 1;
  }
}

}  // namespace attnflow::cli
