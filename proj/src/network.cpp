#include "attnflow/network.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "attnflow/error.hpp"
#include "attnflow/text.hpp"

namespace attnflow {

std::vector<WeightedEdge> to_weighted(const std::vector<CountEdge>& edges) {
  std::vector<WeightedEdge> out;
  out.reserve(edges.size());
  for (const auto& e : edges) out.push_back({e.src, e.dst, static_cast<double>(e.count)});
  return out;
}

FlowNetwork::FlowNetwork(std::vector<std::string> interior_names, std::vector<Edge> edges)
    : names_(std::move(interior_names)), edges_(std::move(edges)) {
  for (std::size_t i = 0; i < names_.size(); ++i) index_.emplace(names_[i], i + 1);

  std::sort(edges_.begin(), edges_.end(),
            [](const Edge& a, const Edge& b) { return a.src != b.src ? a.src < b.src : a.dst < b.dst; });
  // Merge duplicates.
  std::vector<Edge> merged;
  merged.reserve(edges_.size());
  for (const auto& e : edges_) {
    if (!merged.empty() && merged.back().src == e.src && merged.back().dst == e.dst)
      merged.back().weight += e.weight;
    else
      merged.push_back(e);
  }
  edges_ = std::move(merged);

  const std::size_t n = node_count();
  row_start_.assign(n + 1, 0);
  out_flow_.assign(n, 0.0);
  in_flow_.assign(n, 0.0);
  for (const auto& e : edges_) {
    ++row_start_[e.src + 1];
    out_flow_[e.src] += e.weight;
    in_flow_[e.dst] += e.weight;
  }
  for (std::size_t i = 0; i < n; ++i) row_start_[i + 1] += row_start_[i];

  balanced_ = true;
  for (std::size_t i = 1; i <= names_.size(); ++i)
    if (std::abs(residual(i)) > kConservationTolerance) balanced_ = false;
}

std::string_view FlowNetwork::name(std::size_t idx) const {
  if (idx == kSource) return kSourceToken;
  if (idx == sink()) return kSinkToken;
  return names_.at(idx - 1);
}

std::optional<std::size_t> FlowNetwork::index_of(std::string_view name) const {
  if (name == kSourceToken) return kSource;
  if (name == kSinkToken) return sink();
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::span<const Edge> FlowNetwork::out_edges(std::size_t idx) const {
  return std::span<const Edge>(edges_).subspan(row_start_[idx], row_start_[idx + 1] - row_start_[idx]);
}

double FlowNetwork::weight(std::size_t src, std::size_t dst) const {
  auto row = out_edges(src);
  auto it = std::lower_bound(row.begin(), row.end(), dst, [](const Edge& e, std::size_t d) { return e.dst < d; });
  return it != row.end() && it->dst == dst ? it->weight : 0.0;
}

bool FlowNetwork::integral_weights() const {
  return std::all_of(edges_.begin(), edges_.end(), [](const Edge& e) { return std::floor(e.weight) == e.weight; });
}

FlowNetwork build_flow_network(std::span<const WeightedEdge> edges, std::span<const std::string> preferred_order) {
  if (edges.empty()) throw Error(ErrorCode::EmptyNetwork, "edge list is empty");

  std::vector<std::string> names;
  std::unordered_map<std::string, std::size_t> position;
  auto intern = [&](const std::string& name) {
    auto [it, inserted] = position.try_emplace(name, names.size());
    if (inserted) names.push_back(name);
    return it->second;
  };
  for (const auto& name : preferred_order)
    if (name != kSourceToken && name != kSinkToken) intern(name);

  // Indices are provisional (SINK is resolved once N is known).
  constexpr std::size_t kSourceTag = SIZE_MAX - 1, kSinkTag = SIZE_MAX;
  struct Raw {
    std::size_t src, dst;
    double w;
  };
  std::vector<Raw> raw;
  raw.reserve(edges.size());
  for (const auto& e : edges) {
    if (!(e.weight >= 0.0) || !std::isfinite(e.weight))
      throw Error(ErrorCode::NegativeWeight, "edge " + e.src + "->" + e.dst + " has invalid weight " +
                                                 text::format_number(e.weight));
    const bool src_source = e.src == kSourceToken, src_sink = e.src == kSinkToken;
    const bool dst_source = e.dst == kSourceToken, dst_sink = e.dst == kSinkToken;
    if ((src_source && dst_source) || (src_sink && dst_sink))
      throw Error(ErrorCode::SelfEdgeOnSourceOrSink, "self edge on " + e.src);
    if (dst_source) throw Error(ErrorCode::InvalidArgument, "edge into " + std::string(kSourceToken) + " from " + e.src);
    if (src_sink) throw Error(ErrorCode::InvalidArgument, "edge out of " + std::string(kSinkToken) + " to " + e.dst);
    if (src_source && dst_sink)
      throw Error(ErrorCode::InvalidArgument, "direct source-to-sink edge carries no interior flow");
    std::size_t s = src_source ? kSourceTag : intern(e.src);
    std::size_t d = dst_sink ? kSinkTag : intern(e.dst);
    if (e.weight > 0.0) raw.push_back({s, d, e.weight});
  }
  if (names.empty()) throw Error(ErrorCode::EmptyNetwork, "edge list has no interior nodes");

  const std::size_t sink = names.size() + 1;
  std::vector<Edge> out;
  out.reserve(raw.size());
  for (const auto& r : raw)
    out.push_back({r.src == kSourceTag ? FlowNetwork::kSource : r.src + 1, r.dst == kSinkTag ? sink : r.dst + 1, r.w});
  return FlowNetwork(std::move(names), std::move(out));
}

FlowNetwork balance(const FlowNetwork& network) {
  std::vector<Edge> edges = network.edges();
  for (std::size_t i = 1; i <= network.interior_count(); ++i) {
    const double in = network.in_flow(i), out = network.out_flow(i);
    const double d = out - in;
    // Rounding noise on real weights is not an imbalance.
    const double noise = 1e-12 * std::max({1.0, in, out});
    if (d > noise)
      edges.push_back({FlowNetwork::kSource, i, d});
    else if (-d > noise)
      edges.push_back({i, network.sink(), -d});
  }
  return FlowNetwork(network.interior_names(), std::move(edges));
}

namespace {

std::vector<char> reach(const FlowNetwork& net, std::size_t start, bool forward) {
  const std::size_t n = net.node_count();
  std::vector<std::vector<std::size_t>> reverse;
  if (!forward) {
    reverse.resize(n);
    for (const auto& e : net.edges())
      if (e.weight > 0) reverse[e.dst].push_back(e.src);
  }
  std::vector<char> seen(n, 0);
  std::deque<std::size_t> queue{start};
  seen[start] = 1;
  while (!queue.empty()) {
    auto v = queue.front();
    queue.pop_front();
    if (forward) {
      for (const auto& e : net.out_edges(v))
        if (e.weight > 0 && !seen[e.dst]) {
          seen[e.dst] = 1;
          queue.push_back(e.dst);
        }
    } else {
      for (auto u : reverse[v])
        if (!seen[u]) {
          seen[u] = 1;
          queue.push_back(u);
        }
    }
  }
  return seen;
}

}  // namespace

ValidationReport validate(const FlowNetwork& network) {
  ValidationReport report;
  auto from_source = reach(network, FlowNetwork::kSource, true);
  auto to_sink = reach(network, network.sink(), false);
  report.residuals.resize(network.interior_count());
  for (std::size_t i = 1; i <= network.interior_count(); ++i) {
    if (!from_source[i]) report.unreachable.push_back(i);
    if (!to_sink[i]) report.trapped.push_back(i);
    const double r = network.residual(i);
    report.residuals[i - 1] = r;
    report.max_abs_residual = std::max(report.max_abs_residual, std::abs(r));
    if (std::abs(r) > kConservationTolerance) report.residual_violations.push_back(i);
  }
  for (const auto& e : network.edges())
    if (e.weight < 0) ++report.negative_edges;
  return report;
}

DropResult drop_uncertified(const FlowNetwork& network, const ValidationReport& report) {
  DropResult result;
  FlowNetwork current = network;
  ValidationReport current_report = report;
  while (!current_report.unreachable.empty() || !current_report.trapped.empty()) {
    std::vector<char> drop(current.node_count(), 0);
    for (auto i : current_report.unreachable) drop[i] = 1;
    for (auto i : current_report.trapped) drop[i] = 1;

    std::vector<std::size_t> remap(current.node_count(), SIZE_MAX);
    std::vector<std::string> names;
    for (std::size_t i = 1; i <= current.interior_count(); ++i) {
      if (drop[i]) {
        result.dropped.emplace_back(current.name(i));
        continue;
      }
      names.push_back(std::string(current.name(i)));
      remap[i] = names.size();
    }
    if (names.empty()) throw Error(ErrorCode::AllNodesDropped, "no certified nodes remain", result.dropped);
    remap[FlowNetwork::kSource] = FlowNetwork::kSource;
    remap[current.sink()] = names.size() + 1;

    std::vector<Edge> edges;
    for (const auto& e : current.edges())
      if (remap[e.src] != SIZE_MAX && remap[e.dst] != SIZE_MAX) edges.push_back({remap[e.src], remap[e.dst], e.weight});
    current = balance(FlowNetwork(std::move(names), std::move(edges)));
    current_report = validate(current);
  }
  result.network = std::move(current);
  return result;
}

void write_network_csv(std::ostream& out, const FlowNetwork& network) {
  out << "src,dst,weight\n";
  for (const auto& e : network.edges())
    out << network.name(e.src) << ',' << network.name(e.dst) << ',' << text::format_number(e.weight) << '\n';
}

std::string network_sidecar_json(const FlowNetwork& network, const ValidationReport& report) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["schema_version"] = 1;
  j["interior_nodes"] = network.interior_count();
  j["edges"] = network.edge_count();
  j["balanced"] = network.balanced();
  ordered_json table = ordered_json::object();
  table[std::string(kSourceToken)] = FlowNetwork::kSource;
  for (std::size_t i = 1; i <= network.interior_count(); ++i) table[std::string(network.name(i))] = i;
  table[std::string(kSinkToken)] = network.sink();
  j["node_table"] = table;

  auto names = [&](const std::vector<std::size_t>& idx) {
    ordered_json a = ordered_json::array();
    for (auto i : idx) a.push_back(std::string(network.name(i)));
    return a;
  };
  ordered_json v;
  v["certified"] = report.certified();
  v["unreachable_from_source"] = names(report.unreachable);
  v["trapped"] = names(report.trapped);
  v["residual_violations"] = names(report.residual_violations);
  v["negative_edges"] = report.negative_edges;
  v["max_abs_residual"] = report.max_abs_residual;
  j["validation"] = v;
  return j.dump(2) + "\n";
}

std::vector<WeightedEdge> read_edge_csv(std::istream& in) {
  std::vector<WeightedEdge> edges;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto view = text::trim(line);
    if (view.empty()) continue;
    if (line_no == 1 && view == "src,dst,weight") continue;
    auto fields = text::split(view, ',');
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty())
      throw Error(ErrorCode::MalformedRecord, "edge list line " + std::to_string(line_no) + ": expected src,dst,weight",
                  {std::to_string(line_no)});
    auto w = text::parse_double(fields[2]);
    if (!w)
      throw Error(ErrorCode::MalformedRecord, "edge list line " + std::to_string(line_no) + ": bad weight",
                  {std::to_string(line_no)});
    edges.push_back({std::string(fields[0]), std::string(fields[1]), *w});
  }
  return edges;
}

std::vector<std::string> read_sidecar_node_order(std::istream& in) {
  auto j = nlohmann::ordered_json::parse(in);
  std::vector<std::pair<std::size_t, std::string>> entries;
  for (const auto& [name, idx] : j.at("node_table").items())
    if (name != kSourceToken && name != kSinkToken) entries.emplace_back(idx.get<std::size_t>(), name);
  std::sort(entries.begin(), entries.end());
  std::vector<std::string> names;
  for (auto& [idx, name] : entries) names.push_back(std::move(name));
  return names;
}

}  // namespace attnflow
