#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tracedvfs {

/// Microseconds since the trace epoch.
using Micros = std::int64_t;

constexpr Micros kMicrosPerSecond = 1'000'000;

enum class ActivityKind { Begin, End, Send, Receive };

/// Log token for a kind: BEGIN, END, SEND or RECV.
std::string_view to_token(ActivityKind kind);
std::optional<ActivityKind> kind_from_token(std::string_view token);

inline bool is_message(ActivityKind kind) {
    return kind == ActivityKind::Send || kind == ActivityKind::Receive;
}

/**
 * One kernel-level interaction event.
 *
 * SEND/RECV carry the peer context and message size. The message id is
 * optional even for messages: black-box traces may lack it, in which case
 * the reconstructor falls back to FIFO matching per channel. request_hint
 * is ground truth written by the simulator for test oracles only; the
 * reconstruction code never reads it.
 */
struct Activity {
    Micros timestamp = 0;
    ActivityKind kind = ActivityKind::Begin;
    int tier = 0;
    std::string context;
    std::optional<std::string> peer_context;
    std::optional<std::uint64_t> message_id;
    std::optional<std::uint64_t> message_size;
    std::optional<std::uint64_t> request_hint;

    bool operator==(const Activity&) const = default;
};

/// Throws std::invalid_argument when field presence does not match the kind.
void validate(const Activity& activity, int tier_count);

struct ActivityLog {
    std::vector<Activity> activities;  // sorted by timestamp, stable
    int tier_count = 1;

    bool operator==(const ActivityLog&) const = default;
};

class TraceParseError : public std::runtime_error {
  public:
    TraceParseError(std::size_t line, const std::string& what);
    std::size_t line() const { return line_; }

  private:
    std::size_t line_;
};

/**
 * Parses the tab-separated activity log format:
 *
 *   ts \t kind \t tier \t ctx \t peer|- \t msg_id|- \t size|- \t hint|-
 *
 * Empty lines are skipped. When tier_count is not given it is inferred as
 * max(tier) + 1. Output is stably sorted by timestamp.
 */
ActivityLog parse_log(std::istream& input, std::optional<int> tier_count = std::nullopt);
ActivityLog parse_log(std::string_view text, std::optional<int> tier_count = std::nullopt);

void write_log(std::ostream& out, const ActivityLog& log);
std::string write_log(const ActivityLog& log);

/// Single canonical line, without the trailing LF.
std::string format_activity(const Activity& activity);

}  // namespace tracedvfs
