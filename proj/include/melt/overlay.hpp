#pragma once

// The running process graph: per-domain trees under managers, the manager
// ring, and the session root. Every process is a small state machine; frames
// between processes travel through one deterministic FIFO queue, encoded with
// the wire codec, so the same engine serves the simulator and the TCP server.

#include "melt/metrics.hpp"
#include "melt/topology.hpp"
#include "melt/wire.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

namespace melt::overlay {

/// A stream the session root refuses to publish. code() is a wire error code.
class StreamRejected : public Error {
public:
    StreamRejected(int code, const std::string& what) : Error(what), code_(code) {}
    int code() const { return code_; }

private:
    int code_;
};

/// Fills in the producer selection (roles, fs, node, job, osts) for a spec
/// and checks that every selected metric can be attributed under the
/// requested target and grouping. `known_jobs` may be null to skip the job
/// check.
void resolve_stream(StreamSpec& spec, const OverlayTopology& topo, const std::set<std::string>* known_jobs);

/// Lustre roles whose agents produce a stream, judged from the target kind,
/// selected classes, and grouping alone (clnt targets assume a client node).
std::vector<LustreRole> producer_roles(const StreamSpec& spec);

/// Static producer count under each process of the plan for a resolved spec.
std::vector<std::uint64_t> expected_contributors(const OverlayPlan& plan, const OverlayTopology& topo,
                                                 const StreamSpec& spec);

/// Receives messages addressed to an attached agent or session client.
class Port {
public:
    virtual ~Port() = default;
    virtual void deliver(const wire::Message& msg) = 0;
};

enum class LinkKind { tree, ring, client };
std::string_view to_string(LinkKind kind);

/// One frame put on a link. Multicast frames carry the sequence number the
/// root gave the multicast; everything else carries 0.
struct FrameEvent {
    std::int64_t time = 0;
    std::string from;
    std::string to;
    LinkKind link = LinkKind::tree;
    bool down = false;
    bool dropped = false;  // severed link
    wire::MsgType type = wire::MsgType::data;
    std::uint64_t stream_id = 0;
    std::uint64_t round = 0;
    std::uint64_t expected = 0;
    std::uint64_t actual = 0;
    std::size_t bytes = 0;
    std::uint64_t hash = 0;
    std::uint64_t multicast = 0;
};

struct OverlayOptions {
    /// Unix time of logical second zero.
    std::int64_t session_epoch = 0;
    /// Simulated rounds close at their boundary; real ones wait 2 intervals.
    bool simulated = true;
};

struct StreamState {
    StreamSpec spec;
    std::set<std::uint64_t> subscribers;
    std::deque<wire::Data> buffer;
    std::uint64_t last_round = 0;
    std::uint64_t faults = 0;
    std::uint64_t creator = 0;  // client id; 0 once detached or when persistent
};

class Overlay {
public:
    using ClientId = std::uint64_t;

    explicit Overlay(OverlayTopology topo, OverlayOptions opts = {});
    ~Overlay();
    Overlay(const Overlay&) = delete;
    Overlay& operator=(const Overlay&) = delete;

    const OverlayTopology& topology() const;
    const OverlayPlan& plan() const;
    std::int64_t session_epoch() const;
    std::int64_t now() const;
    void set_time(std::int64_t now);

    /// Throws Error for an unknown node, a role mismatch, or a double attach.
    /// The agent is immediately sent the job map, every open stream, and the
    /// active rate overrides.
    void attach_agent(const std::string& node, LustreRole role, Port* port);
    void detach_agent(const std::string& node);
    bool agent_attached(const std::string& node) const;
    /// A message from the agent hosted at `node` (Data, or Error).
    void agent_send(const std::string& node, const wire::Message& msg);

    ClientId attach_client(const std::string& name, Port* port);
    void client_send(ClientId client, const wire::Message& msg);
    /// Unsubscribes the client and closes the transient streams it created.
    void detach_client(ClientId client);

    /// Severs the ring edge leaving this domain's manager.
    void drop_ring_link(const std::string& domain);

    /// Forces out every round whose close time has passed, deepest processes
    /// first so partial records still reach the root.
    void close_rounds(std::int64_t now);

    void set_frame_observer(std::function<void(const FrameEvent&)> fn);
    /// Called with every merged record the root accepts, before delivery.
    void set_record_observer(std::function<void(const wire::Data&)> fn);

    const StreamState* stream(std::uint64_t id) const;
    const StreamState* stream_by_name(const std::string& name) const;
    std::vector<std::uint64_t> stream_ids() const;
    std::uint64_t job_epoch() const;
    const wire::JobMapUpdate& job_map() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace melt::overlay
