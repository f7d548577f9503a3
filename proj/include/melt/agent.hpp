#pragma once

// Monitoring agents: sample a metric source on their own schedule, derive
// per-window rates, tag samples with the node's job, and pre-aggregate them
// into one Data record per stream round.

#include "melt/metrics.hpp"
#include "melt/topology.hpp"
#include "melt/wire.hpp"

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace melt::agent {

/// A raw cumulative counter: name, filesystem, and target (OST or MDT name;
/// empty for node-wide counters).
struct CounterKey {
    std::string name;
    std::string fs;
    std::string target;
    auto operator<=>(const CounterKey&) const = default;
};

struct MetaEvent {
    std::string op;
    std::string path;
    std::string client;  // empty when the source does not know it
    friend bool operator==(const MetaEvent&, const MetaEvent&) = default;
};

struct SourceSnapshot {
    std::int64_t ts = 0;
    std::map<CounterKey, double> counters;
    std::map<std::string, double> gauges;
    /// Metadata events seen since the previous snapshot.
    std::vector<MetaEvent> events;
    friend bool operator==(const SourceSnapshot&, const SourceSnapshot&) = default;
};

/// Raised by a source that cannot produce a snapshot; the agent skips the tick.
class SourceError : public Error {
public:
    using Error::Error;
};

class MetricSource {
public:
    virtual ~MetricSource() = default;
    virtual SourceSnapshot snapshot(std::int64_t now) = 0;
};

/// Raw counter names the stats grammar accepts, sorted.
const std::vector<std::string>& raw_counter_names();

/// Parses the stats snapshot grammar. Throws ConfigError naming the line.
SourceSnapshot parse_stats(std::string_view text);
SourceSnapshot read_stats_file(const std::string& path);
std::string format_stats(const SourceSnapshot& snap);

/// Re-reads a complete snapshot file on every call. Events are reported once
/// per distinct `ts` so an unchanged file does not repeat them.
class StatsFileSource : public MetricSource {
public:
    explicit StatsFileSource(std::string path) : path_(std::move(path)) {}
    SourceSnapshot snapshot(std::int64_t now) override;

private:
    std::string path_;
    std::optional<std::int64_t> last_ts_;
};

struct AgentConfig {
    std::string node_id;
    std::string domain_id;
    LustreRole role = LustreRole::client;
    std::vector<std::string> filesystems;
    std::vector<std::string> osts;  // oss only
    /// Per-class default sampling interval; classes not listed use the catalog.
    std::map<metrics::MetricClass, std::uint32_t> default_intervals;
    /// OST or MDT name -> server node, for group=server.
    std::map<std::string, std::string> server_of_target;
};

/// Config for the agent hosted at `node` in a topology. Throws ConfigError
/// for an unknown node.
AgentConfig agent_config_for(const overlay::OverlayTopology& topo, const std::string& node);

struct AgentHealth {
    std::uint64_t source_failures = 0;
    std::uint64_t invalid_gauges = 0;
    std::uint64_t counter_resets = 0;
};

struct StreamSample {
    std::uint64_t stream_id = 0;
    metrics::Sample sample;
};

struct TickResult {
    std::vector<StreamSample> samples;
    std::vector<wire::Data> records;
};

inline constexpr std::string_view kUnassigned = "unassigned";

class Agent {
public:
    Agent(AgentConfig cfg, MetricSource& source);

    const AgentConfig& config() const { return cfg_; }

    /// Stream specs, rate overrides, and job-map updates from the overlay.
    void on_message(const wire::Message& msg, std::int64_t now);

    /// Samples whatever is due at `now`, then builds one record for every
    /// stream whose round ends at `now`.
    TickResult tick(std::int64_t now);

    std::uint32_t default_interval(const metrics::MetricDef& def) const;
    std::uint32_t effective_interval(const std::string& metric) const;
    std::uint64_t job_epoch() const { return job_epoch_; }
    const std::string& job() const { return job_; }
    std::vector<StreamSpec> streams() const;
    const AgentHealth& health() const { return health_; }

private:
    struct Held {
        StreamSpec spec;
        std::vector<const metrics::MetricDef*> metrics;
        std::uint64_t watermark = 0;
    };
    using SnapPtr = std::shared_ptr<const SourceSnapshot>;
    struct Entry {
        std::int64_t t;
        SnapPtr snap;
    };

    void sample(std::int64_t now);
    void trim(std::int64_t now);
    std::vector<metrics::Sample> round_samples(const Held& held, std::uint64_t round) const;
    std::string group_key(const StreamSpec& spec, const std::string& fs, const std::string& target) const;
    bool key_selected(const StreamSpec& spec, const CounterKey& key) const;

    AgentConfig cfg_;
    MetricSource& source_;
    std::vector<metrics::MetricDef> produced_;
    std::map<std::uint64_t, Held> streams_;
    std::map<std::pair<std::uint64_t, std::string>, std::uint32_t> overrides_;
    std::map<std::string, std::deque<Entry>> history_;
    std::deque<std::pair<std::int64_t, std::vector<MetaEvent>>> events_;
    std::uint64_t job_epoch_ = 0;
    std::string job_{kUnassigned};
    mutable AgentHealth health_;
};

}  // namespace melt::agent
