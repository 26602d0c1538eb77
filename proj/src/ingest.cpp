#include "attnflow/ingest.hpp"

#include <algorithm>
#include <iterator>
#include <sstream>

#include "attnflow/error.hpp"
#include "attnflow/text.hpp"

namespace attnflow {

std::size_t SessionLog::total_visits() const {
  std::size_t n = 0;
  for (const auto& u : users)
    for (const auto& s : u.sessions) n += s.size();
  return n;
}

std::size_t SessionLog::total_sessions() const {
  std::size_t n = 0;
  for (const auto& u : users) n += u.sessions.size();
  return n;
}

std::vector<std::vector<std::string>> SessionLog::sequences(std::size_t user_index) const {
  std::vector<std::vector<std::string>> out;
  for (const auto& s : users.at(user_index).sessions) {
    auto& seq = out.emplace_back();
    for (auto r : s) seq.push_back(item_of(r));
  }
  return out;
}

std::vector<std::uint32_t> SessionLog::users_per_item() const {
  std::vector<std::uint32_t> counts(items.size(), 0);
  std::vector<std::uint32_t> last_user(items.size(), UINT32_MAX);
  for (std::uint32_t u = 0; u < users.size(); ++u) {
    for (const auto& s : users[u].sessions) {
      for (auto r : s) {
        auto item = records[r].item;
        if (last_user[item] != u) {
          last_user[item] = u;
          ++counts[item];
        }
      }
    }
  }
  return counts;
}

namespace {

std::string malformed(std::size_t line, std::string_view why) {
  std::ostringstream os;
  os << "line " << line << ": " << why;
  return os.str();
}

}  // namespace

SessionLog parse_log_string(std::string_view text, const LogFormat& format) {
  SessionLog log;
  log.trailing_newline = !text.empty() && text.back() == '\n';

  std::unordered_map<std::string, std::uint32_t> user_index;
  std::unordered_map<std::string, std::uint32_t> item_index;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool header_pending = format.header;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    if (header_pending) {
      log.header_line = std::string(line);
      header_pending = false;
      continue;
    }

    auto fields = text::split(line, format.delimiter);
    if (fields.size() != 2 && fields.size() != 3)
      throw Error(ErrorCode::MalformedRecord, malformed(line_no, "expected 2 or 3 columns"), {std::to_string(line_no)});
    if (fields[0].empty() || fields[1].empty())
      throw Error(ErrorCode::MalformedRecord, malformed(line_no, "empty field"), {std::to_string(line_no)});
    if (fields[1] == kSourceToken || fields[1] == kSinkToken)
      throw Error(ErrorCode::ReservedToken,
                  malformed(line_no, "reserved token used as item id: " + std::string(fields[1])),
                  {std::to_string(line_no)});

    LogRecord rec;
    if (fields.size() == 3 && !fields[2].empty()) {
      auto ts = text::parse_int(fields[2]);
      if (!ts)
        throw Error(ErrorCode::MalformedRecord, malformed(line_no, "timestamp is not an integer"),
                    {std::to_string(line_no)});
      rec.timestamp = *ts;
    }

    std::string user(fields[0]);
    auto [uit, new_user] = user_index.try_emplace(user, static_cast<std::uint32_t>(log.users.size()));
    if (new_user) log.users.push_back(UserSessions{user, {Session{}}});
    rec.user = uit->second;

    std::string item(fields[1]);
    auto [iit, new_item] = item_index.try_emplace(item, static_cast<std::uint32_t>(log.items.size()));
    if (new_item) log.items.push_back(item);
    rec.item = iit->second;

    log.users[rec.user].sessions.front().push_back(static_cast<std::uint32_t>(log.records.size()));
    log.records.push_back(rec);
  }

  if (log.records.empty()) throw Error(ErrorCode::EmptyInput, "input contains no records");

  // Timestamped histories are re-sorted stably.
  for (auto& u : log.users) {
    auto& seq = u.sessions.front();
    bool all_timed = std::all_of(seq.begin(), seq.end(), [&](auto r) { return log.records[r].timestamp.has_value(); });
    if (!all_timed) continue;
    auto by_time = [&](auto a, auto b) { return *log.records[a].timestamp < *log.records[b].timestamp; };
    if (!std::is_sorted(seq.begin(), seq.end(), by_time)) {
      std::stable_sort(seq.begin(), seq.end(), by_time);
      log.warnings.push_back("NonMonotonicTimestamps: user " + u.user_id + " re-sorted by timestamp");
    }
  }
  return log;
}

SessionLog parse_log(std::istream& in, const LogFormat& format) {
  std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return parse_log_string(text, format);
}

void write_log(std::ostream& out, const SessionLog& log, const LogFormat& format) {
  bool first = true;
  auto newline = [&] {
    if (!first) out << '\n';
    first = false;
  };
  if (format.header) {
    newline();
    out << log.header_line;
  }
  for (const auto& rec : log.records) {
    newline();
    out << log.users[rec.user].user_id << format.delimiter << log.items[rec.item];
    if (rec.timestamp) out << format.delimiter << *rec.timestamp;
  }
  if (log.trailing_newline) out << '\n';
}

SessionLog sessionize(const SessionLog& log, std::optional<std::int64_t> gap_seconds) {
  if (!gap_seconds) return log;
  if (*gap_seconds < 0) throw Error(ErrorCode::InvalidArgument, "gap threshold must be non-negative");
  for (const auto& rec : log.records)
    if (!rec.timestamp)
      throw Error(ErrorCode::MissingTimestamps, "gap threshold given but record of user " +
                                                    log.users[rec.user].user_id + " has no timestamp");

  SessionLog out = log;
  for (auto& u : out.users) {
    std::vector<Session> split;
    for (const auto& s : u.sessions) {
      Session current;
      for (auto r : s) {
        if (!current.empty() &&
            *log.records[r].timestamp - *log.records[current.back()].timestamp > *gap_seconds) {
          split.push_back(std::move(current));
          current.clear();
        }
        current.push_back(r);
      }
      if (!current.empty()) split.push_back(std::move(current));
    }
    u.sessions = std::move(split);
  }
  return out;
}

std::string_view mode_name(ConstructionMode mode) noexcept {
  return mode == ConstructionMode::SessionClosed ? "session-closed" : "residual";
}

std::optional<ConstructionMode> parse_mode(std::string_view name) noexcept {
  if (name == "session-closed") return ConstructionMode::SessionClosed;
  if (name == "residual") return ConstructionMode::Residual;
  return std::nullopt;
}

std::vector<CountEdge> to_transition_edges(const SessionLog& log, ConstructionMode mode) {
  if (log.records.empty()) throw Error(ErrorCode::EmptyInput, "session log is empty");

  // Keys: item index, with SOURCE/SINK encoded past the item range.
  const auto n_items = static_cast<std::uint64_t>(log.items.size());
  const std::uint64_t source = n_items, sink = n_items + 1;
  std::unordered_map<std::uint64_t, std::size_t> slot;
  std::vector<CountEdge> edges;
  auto name = [&](std::uint64_t id) -> std::string {
    if (id == source) return std::string(kSourceToken);
    if (id == sink) return std::string(kSinkToken);
    return log.items[id];
  };
  auto add = [&](std::uint64_t a, std::uint64_t b) {
    auto key = a * (n_items + 2) + b;
    auto [it, inserted] = slot.try_emplace(key, edges.size());
    if (inserted) edges.push_back(CountEdge{name(a), name(b), 0});
    ++edges[it->second].count;
  };

  for (const auto& u : log.users) {
    for (const auto& s : u.sessions) {
      if (s.empty()) continue;
      if (mode == ConstructionMode::SessionClosed) add(source, log.records[s.front()].item);
      for (std::size_t k = 1; k < s.size(); ++k) add(log.records[s[k - 1]].item, log.records[s[k]].item);
      if (mode == ConstructionMode::SessionClosed) add(log.records[s.back()].item, sink);
    }
  }
  return edges;
}

void write_edges(std::ostream& out, const std::vector<CountEdge>& edges) {
  out << "src,dst,weight\n";
  for (const auto& e : edges) out << e.src << ',' << e.dst << ',' << e.count << '\n';
}

}  // namespace attnflow
