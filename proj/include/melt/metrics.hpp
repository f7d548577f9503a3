#pragma once

// Metric catalog, per-window samples, and the mergeable aggregate family.
//
// Every aggregate kind forms a commutative monoid under merge(): the default
// constructed value is the identity. Tree processes merge children's bodies
// in whatever order they arrive and still agree with a flat fold.

#include "melt/common.hpp"
#include "melt/stream.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace melt::metrics {

enum class MetricClass { io, lock, meta, rpc, load, op, path, client };
enum class MetricKind { rate, gauge, count };
enum class Unit { bytes_per_sec, bytes, ops_per_sec, seconds, percent, count };

/// How a summary is shown: total over contributors, or weighted mean.
enum class Reduce { sum, mean };

/// Where an agent gets the value from.
enum class Derivation {
    counter_rate,    // d(counter)/dt
    counter_ratio,   // d(counter)/d(denominator), weighted by d(denominator)
    gauge,           // instantaneous value
    active_clients,  // 1 per client with I/O in the window
    events,          // metadata event tallies (counted-key)
};

std::string_view to_string(MetricClass cls);
std::optional<MetricClass> parse_metric_class(std::string_view text);
std::string_view to_string(MetricKind kind);
std::string_view to_string(Unit unit);

struct MetricDef {
    std::string name;
    MetricClass cls;
    MetricKind kind;
    Unit unit;
    std::string label;  // short column header
    std::vector<LustreRole> roles;
    std::uint32_t default_interval_secs;
    Derivation derivation;
    std::string counter;      // raw counter or gauge name
    std::string denominator;  // counter_ratio only
    Reduce reduce;
    std::string event_field;  // events only: op, path, or client
};

/// Whole catalog in declaration order (the order logs and tables use).
const std::vector<MetricDef>& catalog();
const MetricDef* find_metric(std::string_view name);
/// Throws ConfigError naming the metric when it is not in the catalog.
const MetricDef& metric(std::string_view name);
/// Metrics a node of this role can produce, sorted by name.
std::vector<MetricDef> catalog_for_role(LustreRole role);
/// Names of a class's metrics in catalog order.
std::vector<std::string> class_metrics(MetricClass cls);
bool role_has_class(LustreRole role, MetricClass cls);
bool produces(const MetricDef& def, LustreRole role);
/// Expands `class:<name>` selectors and checks every name exists.
std::vector<std::string> expand_metric_selection(const std::vector<std::string>& names);
/// name, class, kind, unit, label, roles; one metric per line.
std::string catalog_table();

/// One leaf observation for one stream, metric, and group key.
struct Sample {
    std::string node_id;
    LustreRole lustre_role = LustreRole::client;
    std::string fs_name;
    std::string job_id;
    std::string ost_id;
    std::string metric;
    std::uint64_t round = 0;
    std::uint32_t window_secs = 0;
    double value = 0;
    /// Contribution weight: 1, or the denominator delta for ratio metrics,
    /// or the event count for counted-key metrics.
    std::uint64_t weight = 1;
    /// Grouping key under the stream's group_by (empty when ungrouped).
    std::string group_key;

    friend bool operator==(const Sample&, const Sample&) = default;
};

struct RateResult {
    std::optional<double> value;
    bool reset = false;  // counter went backwards; window suppressed
};

/// (cur - prev) / dt for a monotone counter. Throws Error when dt <= 0.
RateResult rate_from_counters(double prev, double cur, double dt);

class MergeError : public Error {
public:
    using Error::Error;
};

struct SummaryAgg {
    std::uint64_t count = 0;
    double sum = 0;
    double min = 0;
    double max = 0;

    static SummaryAgg of(double value, std::uint64_t weight = 1);
    bool empty() const { return count == 0; }
    friend bool operator==(const SummaryAgg&, const SummaryAgg&) = default;
};

struct GroupedAgg {
    std::map<std::string, SummaryAgg> groups;
    friend bool operator==(const GroupedAgg&, const GroupedAgg&) = default;
};

struct HistogramAgg {
    std::vector<double> edges;           // empty only for the identity
    std::vector<std::uint64_t> counts;   // edges.size() + 1 buckets

    static HistogramAgg with_edges(std::vector<double> edges);
    void add(double value, std::uint64_t n = 1);
    std::uint64_t total() const;
    friend bool operator==(const HistogramAgg&, const HistogramAgg&) = default;
};

struct CountedKeyAgg {
    std::map<std::string, std::uint64_t> counts;
    friend bool operator==(const CountedKeyAgg&, const CountedKeyAgg&) = default;
};

using Aggregate = std::variant<SummaryAgg, GroupedAgg, HistogramAgg, CountedKeyAgg>;

SummaryAgg merge(const SummaryAgg& a, const SummaryAgg& b);
GroupedAgg merge(const GroupedAgg& a, const GroupedAgg& b);
HistogramAgg merge(const HistogramAgg& a, const HistogramAgg& b);
CountedKeyAgg merge(const CountedKeyAgg& a, const CountedKeyAgg& b);
/// Throws MergeError on kind or histogram-edge mismatch.
Aggregate merge(const Aggregate& a, const Aggregate& b);

bool is_empty(const Aggregate& agg);
std::string_view kind_name(const Aggregate& agg);

/// Display value of a summary under the metric's reduce rule.
double reduce(const SummaryAgg& agg, const MetricDef& def);

/// Per-metric aggregates carried in one Data record.
using StreamAggregate = std::map<std::string, Aggregate>;

void merge_into(StreamAggregate& into, const StreamAggregate& from);
StreamAggregate merge(const StreamAggregate& a, const StreamAggregate& b);

/// Folds one leaf sample into a stream aggregate per the stream's
/// aggregation and grouping.
void fold_sample(StreamAggregate& agg, const StreamSpec& spec, const Sample& sample);

/// Text form carried in Data.aggregate_body.
std::string encode_body(const StreamAggregate& agg);
StreamAggregate decode_body(std::string_view body);  // throws Error

enum class Order { desc, asc };

struct RankedEntry {
    std::string key;
    double value = 0;
    friend bool operator==(const RankedEntry&, const RankedEntry&) = default;
};

std::vector<RankedEntry> select_topk(const GroupedAgg& agg, std::size_t k, const MetricDef& key_metric,
                                     Order order = Order::desc);
std::vector<RankedEntry> select_topk(const CountedKeyAgg& agg, std::size_t k, Order order = Order::desc);
/// Ranks the groups of `key_metric` inside a stream aggregate. Throws Error
/// naming the metric when it is absent or not groupable.
std::vector<RankedEntry> select_topk(const StreamAggregate& agg, std::size_t k, std::string_view key_metric,
                                     Order order = Order::desc);

}  // namespace melt::metrics
