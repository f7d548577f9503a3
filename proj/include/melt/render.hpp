#pragma once

// Frames of tabular monitoring output and their four text renderings.

#include "melt/humanize.hpp"
#include "melt/metrics.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace melt::render {

enum class Format { human, csv, kv, log };
std::string_view to_string(Format f);
std::optional<Format> parse_format(std::string_view text);

struct Column {
    std::string name;   // csv/kv/log key
    std::string label;  // human header
    metrics::Unit unit = metrics::Unit::count;
};

struct Row {
    std::vector<std::string> keys;              // one per key column
    std::vector<std::optional<double>> values;  // one per column; absent renders as 0
};

using Tags = std::vector<std::pair<std::string, std::string>>;

struct RenderFrame {
    std::int64_t time = 0;  // unix seconds
    bool show_time = true;
    std::vector<std::string> key_names;  // upper case, e.g. JOB
    std::vector<Column> columns;
    std::vector<Row> rows;
    /// Log lines need at least one tag; used when there are no key columns.
    Tags context;
    std::string host;
    long pid = 0;
};

/// Reduced values per group key ("" for an ungrouped summary) for the named
/// metrics of one record. Counted-key and histogram aggregates are skipped.
using GroupValues = std::map<std::string, std::map<std::string, double>>;
GroupValues group_values(const metrics::StreamAggregate& agg, const std::vector<std::string>& metric_names);

/// `HH:MM:SS` (UTC).
std::string format_clock(std::int64_t unix_time);
/// `Jan 15 11:22:33` (UTC, day space-padded).
std::string format_log_time(std::int64_t unix_time);

std::string format_log_line(std::int64_t unix_time, const std::string& host, long pid, const Tags& tags,
                            const Tags& values);

/// Text for one frame; headers are included when `with_header` (human, csv).
std::string render(const RenderFrame& frame, Format format, bool with_header);

/// Conformance pattern every log line must match.
const std::string& log_line_pattern();
bool is_log_line(const std::string& line);

struct LogRecord {
    std::string stamp;  // `Jan 15 11:22:33`
    std::string host;
    long pid = 0;
    Tags tags;
    std::vector<std::pair<std::string, metrics::Quantity>> values;
};

/// Throws metrics::ParseError when the line does not match.
LogRecord parse_log_line(const std::string& line);

}  // namespace melt::render
