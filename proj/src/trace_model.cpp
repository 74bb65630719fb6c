#include "tracedvfs/trace_model.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>

namespace tracedvfs {

namespace {

constexpr std::string_view kAbsent = "-";

template <typename Int>
std::optional<Int> parse_int(std::string_view token) {
    Int value{};
    const auto* first = token.data();
    const auto* last = token.data() + token.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last || token.empty()) return std::nullopt;
    return value;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find('\t', start);
        if (pos == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return fields;
}

std::optional<std::uint64_t> optional_uint(std::string_view token, std::size_t line,
                                           const char* field) {
    if (token == kAbsent) return std::nullopt;
    auto value = parse_int<std::uint64_t>(token);
    if (!value) throw TraceParseError(line, std::string("bad ") + field + " '" + std::string(token) + "'");
    return value;
}

void write_optional(std::ostream& out, const std::optional<std::uint64_t>& value) {
    if (value) {
        out << *value;
    } else {
        out << kAbsent;
    }
}

}  // namespace

std::string_view to_token(ActivityKind kind) {
    switch (kind) {
        case ActivityKind::Begin: return "BEGIN";
        case ActivityKind::End: return "END";
        case ActivityKind::Send: return "SEND";
        case ActivityKind::Receive: return "RECV";
    }
    return "?";
}

std::optional<ActivityKind> kind_from_token(std::string_view token) {
    if (token == "BEGIN") return ActivityKind::Begin;
    if (token == "END") return ActivityKind::End;
    if (token == "SEND") return ActivityKind::Send;
    if (token == "RECV") return ActivityKind::Receive;
    return std::nullopt;
}

void validate(const Activity& a, int tier_count) {
    if (a.timestamp < 0) throw std::invalid_argument("negative timestamp");
    if (a.tier < 0 || a.tier >= tier_count) throw std::invalid_argument("tier out of range");
    if (a.context.empty() || a.context == kAbsent) throw std::invalid_argument("empty context");
    if (is_message(a.kind)) {
        if (!a.peer_context || a.peer_context->empty() || *a.peer_context == kAbsent)
            throw std::invalid_argument("message activity without peer context");
        if (!a.message_size) throw std::invalid_argument("message activity without size");
    } else if (a.peer_context || a.message_id || a.message_size) {
        throw std::invalid_argument("BEGIN/END must not carry message fields");
    }
}

TraceParseError::TraceParseError(std::size_t line, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

ActivityLog parse_log(std::istream& input, std::optional<int> tier_count) {
    ActivityLog log;
    std::vector<std::size_t> line_of;
    std::string line;
    std::size_t line_no = 0;
    int max_tier = -1;
    while (std::getline(input, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = split_tabs(line);
        if (fields.size() != 8)
            throw TraceParseError(line_no, "expected 8 tab-separated fields, got " +
                                               std::to_string(fields.size()));
        Activity a;
        auto ts = parse_int<std::int64_t>(fields[0]);
        if (!ts || *ts < 0) throw TraceParseError(line_no, "bad timestamp '" + std::string(fields[0]) + "'");
        a.timestamp = *ts;
        auto kind = kind_from_token(fields[1]);
        if (!kind) throw TraceParseError(line_no, "unknown kind '" + std::string(fields[1]) + "'");
        a.kind = *kind;
        auto tier = parse_int<int>(fields[2]);
        if (!tier || *tier < 0) throw TraceParseError(line_no, "bad tier '" + std::string(fields[2]) + "'");
        a.tier = *tier;
        if (fields[3].empty() || fields[3] == kAbsent) throw TraceParseError(line_no, "missing context");
        a.context = std::string(fields[3]);
        if (fields[4] != kAbsent) a.peer_context = std::string(fields[4]);
        a.message_id = optional_uint(fields[5], line_no, "message id");
        a.message_size = optional_uint(fields[6], line_no, "message size");
        a.request_hint = optional_uint(fields[7], line_no, "request hint");

        const int limit = tier_count.value_or(a.tier + 1);
        try {
            validate(a, std::max(limit, a.tier + 1));
        } catch (const std::invalid_argument& e) {
            throw TraceParseError(line_no, e.what());
        }
        if (tier_count && a.tier >= *tier_count)
            throw TraceParseError(line_no, "tier " + std::to_string(a.tier) + " >= tier count");
        max_tier = std::max(max_tier, a.tier);
        log.activities.push_back(std::move(a));
    }
    log.tier_count = tier_count.value_or(std::max(1, max_tier + 1));
    std::stable_sort(log.activities.begin(), log.activities.end(),
                     [](const Activity& x, const Activity& y) { return x.timestamp < y.timestamp; });
    return log;
}

ActivityLog parse_log(std::string_view text, std::optional<int> tier_count) {
    std::istringstream in{std::string(text)};
    return parse_log(in, tier_count);
}

std::string format_activity(const Activity& a) {
    std::ostringstream out;
    out << a.timestamp << '\t' << to_token(a.kind) << '\t' << a.tier << '\t' << a.context << '\t'
        << (a.peer_context ? *a.peer_context : std::string(kAbsent)) << '\t';
    write_optional(out, a.message_id);
    out << '\t';
    write_optional(out, a.message_size);
    out << '\t';
    write_optional(out, a.request_hint);
    return out.str();
}

void write_log(std::ostream& out, const ActivityLog& log) {
    for (const auto& a : log.activities) out << format_activity(a) << '\n';
}

std::string write_log(const ActivityLog& log) {
    std::ostringstream out;
    write_log(out, log);
    return out.str();
}

}  // namespace tracedvfs
