#pragma once

// Session log parsing and conversion of per-user visit sequences into
// transition-edge multisets.

#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace attnflow {

inline constexpr std::string_view kSourceToken = "__source__";
inline constexpr std::string_view kSinkToken = "__sink__";

struct LogFormat {
  char delimiter = ',';
  bool header = false;
};

struct LogRecord {
  std::uint32_t user = 0;  // index into SessionLog::users
  std::uint32_t item = 0;  // index into SessionLog::items
  std::optional<std::int64_t> timestamp;
};

/// One contiguous visit sequence. Holds indices into SessionLog::records.
using Session = std::vector<std::uint32_t>;

struct UserSessions {
  std::string user_id;
  std::vector<Session> sessions;
};

/// Parsed log. `records` keeps file order (used for serialization); the
/// per-user sessions reference records in visit order.
class SessionLog {
 public:
  std::vector<UserSessions> users;  // first-appearance order
  std::vector<std::string> items;   // item registry, first-appearance order
  std::vector<LogRecord> records;   // file order
  std::vector<std::string> warnings;

  // Formatting details kept for byte-identical serialization.
  std::string header_line;
  bool trailing_newline = true;

  std::size_t total_users() const { return users.size(); }
  std::size_t total_visits() const;
  std::size_t total_records() const { return records.size(); }
  std::size_t total_sessions() const;

  const std::string& item_of(std::uint32_t record) const { return items[records[record].item]; }

  /// Sessions of one user as item-id sequences.
  std::vector<std::vector<std::string>> sequences(std::size_t user_index) const;

  /// Distinct users per item, indexed like `items`.
  std::vector<std::uint32_t> users_per_item() const;
};

SessionLog parse_log(std::istream& in, const LogFormat& format = {});
SessionLog parse_log_string(std::string_view text, const LogFormat& format = {});

/// Writes records in their original file order.
void write_log(std::ostream& out, const SessionLog& log, const LogFormat& format = {});

/// Splits every session wherever consecutive timestamps differ by more than
/// `gap_seconds`. Without a threshold the log is returned unchanged.
SessionLog sessionize(const SessionLog& log, std::optional<std::int64_t> gap_seconds);

enum class ConstructionMode { SessionClosed, Residual };

std::string_view mode_name(ConstructionMode mode) noexcept;
std::optional<ConstructionMode> parse_mode(std::string_view name) noexcept;

struct CountEdge {
  std::string src;
  std::string dst;
  std::uint64_t count = 0;
};

/// Edges in order of first appearance. Session-closed mode adds
/// SOURCE->first and last->SINK per session.
std::vector<CountEdge> to_transition_edges(const SessionLog& log, ConstructionMode mode);

void write_edges(std::ostream& out, const std::vector<CountEdge>& edges);

}  // namespace attnflow
