#pragma once

// Workload scripts and the synthetic metric source they drive.
//
// Activity lines cover the half-open span [start, end) in logical seconds.
// Counters advance one second at a time, so identical scripts and seeds
// always give identical trajectories.

#include "melt/agent.hpp"
#include "melt/topology.hpp"

#include <cstdint>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace melt::sim {

using Weights = std::vector<std::pair<std::string, double>>;

struct JobLine {
    std::int64_t start = 0, end = 0;
    std::string job_id;
    std::vector<std::string> nodes;
    int line = 0;
};

struct IoLine {
    std::int64_t start = 0, end = 0;
    std::string job_id;
    double read_bps = 0;   // per client
    double write_bps = 0;  // per client
    std::string single_oss;  // empty means round-robin over every OST
    int line = 0;
};

struct MetaLine {
    std::int64_t start = 0, end = 0;
    std::string job_id;
    double ops_per_sec = 0;  // whole job, split evenly across its clients
    Weights ops;
    int line = 0;
};

struct PathsLine {
    std::int64_t start = 0, end = 0;
    std::string job_id;
    Weights paths;
    int line = 0;
};

struct LoadLine {
    std::string node;
    std::int64_t start = 0, end = 0;
    double cpu_pct = 0, mem_pct = 0;
    int line = 0;
};

struct Workload {
    std::vector<JobLine> jobs;
    std::vector<IoLine> io;
    std::vector<MetaLine> meta;
    std::vector<PathsLine> paths;
    std::vector<LoadLine> load;

    const JobLine* job(std::string_view id) const;
};

/// Node lists are comma separated; `name[01-16]` expands to a numbered range.
std::vector<std::string> expand_nodes(std::string_view text);

/// Throws ConfigError with the line number.
Workload parse_workload(std::string_view text);
Workload load_workload(const std::string& path);

/// Checks spans against the duration and names against the topology
/// (skipped when `topo` is null).
void validate_workload(const Workload& w, std::int64_t duration, const overlay::OverlayTopology* topo);

/// Job-map text (`<job_id> <node> <node> ...` per line) of the jobs running
/// at time t.
std::string job_map_text(const Workload& w, std::int64_t t);

inline constexpr double kRequestSize = 1048576.0;
inline constexpr double kRpcWait = 0.0005;  // seconds per request

struct SyntheticOptions {
    std::uint64_t seed = 1;
    /// Relative jitter applied to per-second byte rates (0 disables it).
    double noise = 0;
};

class SyntheticSource : public agent::MetricSource {
public:
    SyntheticSource(std::shared_ptr<const Workload> workload, std::shared_ptr<const overlay::OverlayTopology> topo,
                    std::string node, SyntheticOptions opts = {});
    agent::SourceSnapshot snapshot(std::int64_t now) override;

private:
    void advance_to(std::int64_t now);
    void step(std::int64_t s);  // activity in [s, s + 1)
    double jitter(const std::string& node, std::int64_t s) const;
    std::vector<std::string> targets_for(const std::string& client, const IoLine& io) const;
    std::string fs_of(const std::string& client) const;

    std::shared_ptr<const Workload> w_;
    std::shared_ptr<const overlay::OverlayTopology> topo_;
    std::string node_;
    LustreRole role_;
    SyntheticOptions opts_;
    std::int64_t t_ = 0;
    std::size_t routers_ = 0;
    std::set<std::string> my_jobs_;  // client role: jobs listing this node
    std::map<agent::CounterKey, double> counters_;
    std::map<std::string, double> gauges_;
    /// Fractional event tallies per (client, op, path).
    std::map<std::tuple<std::string, std::string, std::string>, double> tallies_;
    std::map<std::tuple<std::string, std::string, std::string>, std::uint64_t> emitted_;
};

}  // namespace melt::sim
