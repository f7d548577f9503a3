#pragma once

// Desk-scale simulation: a topology, a workload script, and a fault list run
// on a logical one-second clock against the in-process overlay.

#include "melt/agent.hpp"
#include "melt/meltmon.hpp"
#include "melt/overlay.hpp"
#include "melt/session.hpp"
#include "melt/workload.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace melt::sim {

struct Fault {
    enum class Kind { detach_agent, drop_ring_link };
    std::int64_t time = 0;
    Kind kind = Kind::detach_agent;
    std::string subject;
};

std::string_view to_string(Fault::Kind kind);

/// Job-map input for the simulated meltmon: derived from the workload's job
/// lines, or read from a file on every poll.
struct JobMapConfig {
    enum class Kind { workload, file } kind = Kind::workload;
    std::string path;
};

struct ScenarioSpec {
    overlay::OverlayTopology topology;
    std::string workload_path;  // empty: no activity
    std::shared_ptr<const Workload> workload;
    std::int64_t duration = 0;
    std::uint64_t seed = 1;
    double noise = 0;
    /// Unix time of logical second zero.
    std::int64_t start = 1516015320;  // 2018-01-15 11:22:00 UTC
    std::vector<Fault> faults;
    bool meltmon = true;
    std::uint32_t poll_secs = meltmon::kDefaultPollSecs;
    JobMapConfig jobmap;
    long pid = 123;
};

/// Topology sections plus a `[scenario]` section. Relative paths resolve
/// against `base_dir`. Throws ConfigError.
ScenarioSpec parse_scenario(std::string_view text, const std::string& base_dir = ".");
ScenarioSpec load_scenario(const std::string& path);
/// Checks durations, fault subjects, and the workload against the topology.
void validate_scenario(const ScenarioSpec& spec);

struct SampleEvent {
    std::int64_t time = 0;
    std::uint64_t stream_id = 0;
    metrics::Sample sample;
};

struct RecordEvent {
    std::int64_t time = 0;
    wire::Data data;
};

/// Everything observable in a run, in order, plus one text line per event.
struct Transcript {
    std::vector<SampleEvent> samples;
    std::vector<RecordEvent> records;  // merged records accepted by the root
    std::vector<overlay::FrameEvent> frames;
    std::map<std::uint64_t, StreamSpec> streams;
    std::map<std::string, std::vector<std::string>> logs;  // meltmon log files
    std::vector<std::string> lines;

    std::string text() const;
    std::uint64_t digest() const;
};

class ScenarioRunner {
public:
    /// `realtime` gives rounds the real-mode grace period so records from
    /// remote agents are not cut off at the boundary.
    explicit ScenarioRunner(ScenarioSpec spec, bool realtime = false);
    ~ScenarioRunner();
    ScenarioRunner(const ScenarioRunner&) = delete;
    ScenarioRunner& operator=(const ScenarioRunner&) = delete;

    const ScenarioSpec& spec() const { return spec_; }
    overlay::Overlay& overlay() { return *overlay_; }
    std::int64_t now() const { return now_; }

    /// Advances one logical second: faults, agent ticks, client ticks, then
    /// round closing.
    void step();
    void run_until(std::int64_t t);
    /// Runs to the scenario's duration and finishes the transcript.
    Transcript& run();

    /// Attaches a session client now; the runner ticks it every second.
    session::SimClient& add_client(session::ClientLogic& logic, const std::string& name);
    void remove_client(session::SimClient& client);

    void detach_agent(const std::string& node);
    /// Stops the in-process agent for `node` so a remote one can attach.
    void release_agent(const std::string& node);
    void drop_ring_link(const std::string& domain);

    agent::Agent* agent(const std::string& node);
    std::vector<std::string> agent_nodes() const;

    meltmon::Meltmon* meltmon() { return meltmon_.get(); }
    /// Drops the meltmon connection without a clean shutdown.
    void kill_meltmon();
    void start_meltmon();
    meltmon::MemoryLogSink& logs() { return logs_; }

    Transcript& transcript() { return transcript_; }

private:
    struct AgentSlot;
    void record_new_streams();
    void tick_agents(std::int64_t t);
    void log_line(std::string line);

    ScenarioSpec spec_;
    std::shared_ptr<const overlay::OverlayTopology> topo_;
    std::unique_ptr<overlay::Overlay> overlay_;
    std::map<std::string, std::unique_ptr<AgentSlot>> agents_;
    std::vector<std::unique_ptr<session::SimClient>> clients_;
    std::unique_ptr<meltmon::JobMapAdapter> jobs_;
    meltmon::MemoryLogSink logs_;
    std::unique_ptr<meltmon::Meltmon> meltmon_;
    session::SimClient* meltmon_client_ = nullptr;
    std::map<std::string, std::size_t> log_seen_;
    std::int64_t now_ = -1;
    Transcript transcript_;
};

Transcript run_scenario(const ScenarioSpec& spec);

/// Left-to-right fold of every leaf sample of one (stream, round), bypassing
/// the overlay.
metrics::StreamAggregate oracle_aggregate(const Transcript& t, std::uint64_t stream_id, std::uint64_t round);

struct RoundAccount {
    std::map<std::pair<std::string, std::string>, std::uint64_t> tree_edges;  // (from, to) data frames
    std::uint64_t ring_frames = 0;
    std::uint64_t root_in = 0;
    std::uint64_t dropped = 0;
};

struct Accounting {
    std::map<std::pair<std::uint64_t, std::uint64_t>, RoundAccount> rounds;  // (stream, round)
    /// Frames per link for every multicast, keyed by multicast sequence number.
    std::map<std::uint64_t, std::map<std::pair<std::string, std::string>, std::uint64_t>> multicasts;
    std::map<std::string, std::uint64_t> sent;
    std::map<std::string, std::uint64_t> received;
};

Accounting message_accounting(const Transcript& t);

}  // namespace melt::sim
