#include "melt/overlay.hpp"

#include <algorithm>
#include <cassert>

namespace melt::overlay {

std::string_view to_string(LinkKind kind)
{
    switch (kind) {
    case LinkKind::tree: return "tree";
    case LinkKind::ring: return "ring";
    case LinkKind::client: return "client";
    }
    return "?";
}

namespace {

struct Pending {
    metrics::StreamAggregate agg;
    std::uint64_t actual = 0;
    std::set<int> reported;
    bool have_pred = false;
    std::string fault;
};

struct ProcStream {
    std::uint64_t watermark = 0;
    std::map<std::uint64_t, Pending> rounds;
};

/// Per-stream facts every process can derive from the StreamSpec and the shared
/// topology file.
struct StreamMeta {
    std::vector<std::uint64_t> expected;     // by process index
    std::vector<std::uint64_t> ring_prefix;  // by ring position
};

struct ProcRt {
    std::map<std::uint64_t, ProcStream> streams;
    int ring_next = -1;
    int ring_prev = -1;
    int ring_index = -1;
    bool ring_out_severed = false;
    // Leaves only.
    Port* agent = nullptr;
    std::map<std::uint64_t, std::uint64_t> last_sent;
};

struct Item {
    int from = -1;
    int to = -1;
    std::uint64_t from_client = 0;
    std::uint64_t to_client = 0;
    LinkKind link = LinkKind::tree;
    bool down = false;
    std::uint64_t mcast = 0;
    std::vector<std::uint8_t> bytes;
};

struct ClientRt {
    std::string name;
    Port* port = nullptr;
};

struct OverrideKey {
    std::uint64_t stream;
    std::string metric;
    std::string scope;
    auto operator<=>(const OverrideKey&) const = default;
};

bool same_shape(const StreamSpec& a, const StreamSpec& b)
{
    return a.target == b.target && a.metrics == b.metrics && a.aggregation == b.aggregation && a.edges == b.edges &&
           a.group_by == b.group_by && a.interval_secs == b.interval_secs;
}

}  // namespace

struct Overlay::Impl {
    OverlayTopology topo;
    OverlayPlan plan;
    OverlayOptions opts;
    std::int64_t now = 0;

    std::vector<ProcRt> rt;
    std::vector<int> close_order;
    std::deque<Item> queue;
    bool pumping = false;

    std::map<std::uint64_t, StreamState> streams;
    std::map<std::uint64_t, StreamMeta> meta;
    std::uint64_t next_stream = 1;
    std::map<ClientId, ClientRt> clients;
    ClientId next_client = 1;
    wire::JobMapUpdate jobs;
    std::map<OverrideKey, wire::SetRate> overrides;
    std::uint64_t mcast_seq = 0;

    std::function<void(const FrameEvent&)> frame_observer;
    std::function<void(const wire::Data&)> record_observer;

    Impl(OverlayTopology t, OverlayOptions o) : topo(std::move(t)), plan(plan_overlay(topo)), opts(o)
    {
        rt.resize(plan.procs.size());
        std::vector<int> ring;
        for (const auto& d : topo.ring_order) ring.push_back(plan.manager_of_domain.at(d));
        int prev = plan.root;
        for (std::size_t i = 0; i < ring.size(); ++i) {
            rt[static_cast<std::size_t>(prev)].ring_next = ring[i];
            rt[static_cast<std::size_t>(ring[i])].ring_prev = prev;
            rt[static_cast<std::size_t>(ring[i])].ring_index = static_cast<int>(i);
            prev = ring[i];
        }
        rt[static_cast<std::size_t>(prev)].ring_next = plan.root;
        rt[static_cast<std::size_t>(plan.root)].ring_prev = prev;

        for (int mgr : ring) {
            std::vector<int> internals;
            for (std::size_t i = 0; i < plan.procs.size(); ++i) {
                const auto& p = plan.procs[i];
                if (p.role == ProcessRole::tree_internal && p.domain == plan.procs[static_cast<std::size_t>(mgr)].domain)
                    internals.push_back(static_cast<int>(i));
            }
            std::stable_sort(internals.begin(), internals.end(), [this](int a, int b) {
                return proc(a).depth > proc(b).depth;
            });
            close_order.insert(close_order.end(), internals.begin(), internals.end());
            close_order.push_back(mgr);
        }
    }

    const ProcessNode& proc(int p) const { return plan.procs[static_cast<std::size_t>(p)]; }
    ProcRt& run(int p) { return rt[static_cast<std::size_t>(p)]; }

    std::string endpoint_name(int p, std::uint64_t client) const
    {
        if (p >= 0) return proc(p).id;
        auto it = clients.find(client);
        return "client:" + (it == clients.end() ? std::to_string(client) : it->second.name);
    }

    // -- frames -------------------------------------------------------------

    void send(Item item, const wire::Message& msg)
    {
        item.bytes = wire::encode_message(msg);
        bool severed = item.link == LinkKind::ring && item.from >= 0 && run(item.from).ring_out_severed;
        if (frame_observer) {
            FrameEvent ev;
            ev.time = now;
            ev.from = endpoint_name(item.from, item.from_client);
            ev.to = endpoint_name(item.to, item.to_client);
            ev.link = item.link;
            ev.down = item.down;
            ev.dropped = severed;
            ev.type = wire::type_of(msg);
            ev.bytes = item.bytes.size();
            ev.hash = fnv1a64(std::string_view(reinterpret_cast<const char*>(item.bytes.data()), item.bytes.size()));
            ev.multicast = item.mcast;
            if (auto* d = std::get_if<wire::Data>(&msg)) {
                ev.stream_id = d->stream_id;
                ev.round = d->round;
                ev.expected = d->expected_contributors;
                ev.actual = d->actual_contributors;
            } else if (auto* c = std::get_if<wire::CreateStream>(&msg)) {
                ev.stream_id = c->spec.id;
            } else if (auto* s = std::get_if<wire::SetRate>(&msg)) {
                ev.stream_id = s->stream_id;
            } else if (auto* s = std::get_if<wire::Subscribe>(&msg)) {
                ev.stream_id = s->stream_id;
            } else if (auto* s = std::get_if<wire::StreamCreated>(&msg)) {
                ev.stream_id = s->stream_id;
            }
            frame_observer(ev);
        }
        if (!severed) queue.push_back(std::move(item));
    }

    void send_proc(int from, int to, LinkKind link, bool down, const wire::Message& msg, std::uint64_t mcast = 0)
    {
        Item it;
        it.from = from;
        it.to = to;
        it.link = link;
        it.down = down;
        it.mcast = mcast;
        send(std::move(it), msg);
    }

    void send_client(ClientId c, const wire::Message& msg)
    {
        Item it;
        it.from = plan.root;
        it.to_client = c;
        it.link = LinkKind::client;
        it.down = true;
        send(std::move(it), msg);
    }

    void pump()
    {
        if (pumping) return;
        pumping = true;
        struct Reset {
            bool& flag;
            ~Reset() { flag = false; }
        } reset{pumping};
        while (!queue.empty()) {
            Item item = std::move(queue.front());
            queue.pop_front();
            auto res = wire::decode_frame(item.bytes);
            assert(res.status == wire::DecodeStatus::ok);
            dispatch(item, res.message);
        }
    }

    void dispatch(const Item& item, const wire::Message& msg)
    {
        if (item.to < 0) {
            auto it = clients.find(item.to_client);
            if (it != clients.end() && it->second.port) it->second.port->deliver(msg);
            return;
        }
        if (item.link == LinkKind::client) {
            if (clients.count(item.from_client)) root_client(item.from_client, msg);
            return;
        }
        if (item.down) handle_down(item.to, msg, item.mcast);
        else handle_up(item.to, item.from, item.link, msg);
    }

    // -- multicast ----------------------------------------------------------

    static wire::Scope scope_of(const wire::Message& msg)
    {
        if (auto* s = std::get_if<wire::SetRate>(&msg)) return s->scope;
        return {};
    }

    static bool in_scope(const DomainSpec& d, const wire::Scope& scope)
    {
        switch (scope.kind) {
        case wire::Scope::Kind::all: return true;
        case wire::Scope::Kind::domain: return d.id == scope.value;
        case wire::Scope::Kind::role: return to_string(d.role) == scope.value;
        }
        return false;
    }

    /// True when this ring position or any later one is in scope.
    bool scope_ahead(int ring_index, const wire::Scope& scope) const
    {
        for (std::size_t i = static_cast<std::size_t>(ring_index); i < topo.ring_order.size(); ++i)
            if (in_scope(*topo.domain(topo.ring_order[i]), scope)) return true;
        return false;
    }

    void multicast(const wire::Message& msg)
    {
        auto scope = scope_of(msg);
        if (!scope_ahead(0, scope)) return;
        ++mcast_seq;
        send_proc(plan.root, run(plan.root).ring_next, LinkKind::ring, true, msg, mcast_seq);
    }

    void note_stream(int p, const wire::Message& msg)
    {
        auto* cs = std::get_if<wire::CreateStream>(&msg);
        if (!cs) return;
        auto& streams_at = run(p).streams;
        if (cs->spec.closed) {
            streams_at.erase(cs->spec.id);
            run(p).last_sent.erase(cs->spec.id);
        } else {
            streams_at.try_emplace(cs->spec.id, ProcStream{static_cast<std::uint64_t>(now) / cs->spec.interval_secs, {}});
        }
    }

    void handle_down(int p, const wire::Message& msg, std::uint64_t mcast)
    {
        note_stream(p, msg);
        const auto& node = proc(p);
        auto scope = scope_of(msg);
        const DomainSpec& d = *topo.domain(node.domain);
        switch (node.role) {
        case ProcessRole::domain_manager: {
            if (in_scope(d, scope))
                for (int c : node.children) send_proc(p, c, LinkKind::tree, true, msg, mcast);
            int next = run(p).ring_next;
            if (next != plan.root && scope_ahead(run(p).ring_index + 1, scope))
                send_proc(p, next, LinkKind::ring, true, msg, mcast);
            break;
        }
        case ProcessRole::tree_internal:
            for (int c : node.children) send_proc(p, c, LinkKind::tree, true, msg, mcast);
            break;
        case ProcessRole::agent_leaf:
            if (run(p).agent && in_scope(d, scope)) run(p).agent->deliver(msg);
            break;
        default: break;
        }
    }

    // -- gather -------------------------------------------------------------

    int upward(int p, LinkKind& link) const
    {
        const auto& node = proc(p);
        if (node.role == ProcessRole::domain_manager) {
            link = LinkKind::ring;
            return rt[static_cast<std::size_t>(p)].ring_next;
        }
        link = LinkKind::tree;
        return node.parent;
    }

    void handle_up(int p, int from, LinkKind link, const wire::Message& msg)
    {
        if (auto* err = std::get_if<wire::ErrorMsg>(&msg)) {
            if (p == plan.root) {
                root_fault(*err);
                return;
            }
            LinkKind up_link;
            int to = upward(p, up_link);
            send_proc(p, to, up_link, false, msg);
            return;
        }
        auto* data = std::get_if<wire::Data>(&msg);
        if (!data) return;
        if (p == plan.root) {
            root_accept(*data);
            return;
        }
        auto sit = run(p).streams.find(data->stream_id);
        if (sit == run(p).streams.end() || data->round <= sit->second.watermark) return;
        Pending& pend = sit->second.rounds[data->round];
        if (link == LinkKind::ring) {
            if (pend.have_pred) return;
            pend.have_pred = true;
        } else if (!pend.reported.insert(from).second) {
            return;
        }
        pend.actual += data->actual_contributors;
        try {
            metrics::merge_into(pend.agg, metrics::decode_body(data->aggregate_body));
        } catch (const Error& e) {
            if (pend.fault.empty()) pend.fault = e.what();
        }
        if (complete(p, data->stream_id, pend)) emit_through(p, data->stream_id, data->round);
    }

    bool complete(int p, std::uint64_t id, const Pending& pend) const
    {
        const auto& m = meta.at(id);
        for (int c : proc(p).children)
            if (m.expected[static_cast<std::size_t>(c)] > 0 && !pend.reported.count(c)) return false;
        const auto& r = rt[static_cast<std::size_t>(p)];
        if (proc(p).role == ProcessRole::domain_manager && r.ring_index > 0 && !pend.have_pred) return false;
        return true;
    }

    /// Emits every round up to `round`, in order, forcing the earlier ones.
    void emit_through(int p, std::uint64_t id, std::uint64_t round)
    {
        auto& ps = run(p).streams.at(id);
        while (ps.watermark < round) emit_one(p, id, ps, ps.watermark + 1);
    }

    void emit_one(int p, std::uint64_t id, ProcStream& ps, std::uint64_t round)
    {
        Pending pend;
        if (auto it = ps.rounds.find(round); it != ps.rounds.end()) {
            pend = std::move(it->second);
            ps.rounds.erase(it);
        }
        ps.watermark = round;
        const auto& m = meta.at(id);
        const auto& node = proc(p);
        std::uint64_t expected;
        if (node.role == ProcessRole::domain_manager) {
            expected = m.ring_prefix[static_cast<std::size_t>(run(p).ring_index)];
        } else {
            expected = m.expected[static_cast<std::size_t>(p)];
            if (expected == 0) return;
        }
        LinkKind link;
        int to = upward(p, link);
        if (!pend.fault.empty()) {
            send_proc(p, to, link, false,
                      wire::ErrorMsg{wire::kErrStreamFault, "stream " + std::to_string(id) + " round " +
                                                                std::to_string(round) + " at " + node.id + ": " +
                                                                pend.fault});
            return;
        }
        wire::Data out;
        out.stream_id = id;
        out.round = round;
        out.window_secs = streams.count(id) ? streams.at(id).spec.interval_secs : 0;
        out.expected_contributors = expected;
        out.actual_contributors = pend.actual;
        out.aggregate_body = metrics::encode_body(pend.agg);
        send_proc(p, to, link, false, out);
    }

    // -- session root ---------------------------------------------------------

    void root_accept(const wire::Data& data)
    {
        auto it = streams.find(data.stream_id);
        if (it == streams.end() || it->second.spec.closed) return;
        StreamState& st = it->second;
        if (data.round <= st.last_round) return;
        while (st.last_round + 1 < data.round) root_deliver(st, synthesized(st, st.last_round + 1));
        root_deliver(st, data);
    }

    wire::Data synthesized(const StreamState& st, std::uint64_t round) const
    {
        wire::Data d;
        d.stream_id = st.spec.id;
        d.round = round;
        d.window_secs = st.spec.interval_secs;
        d.expected_contributors = meta.at(st.spec.id).expected[static_cast<std::size_t>(plan.root)];
        d.actual_contributors = 0;
        d.aggregate_body = metrics::encode_body({});
        return d;
    }

    void root_deliver(StreamState& st, const wire::Data& data)
    {
        st.last_round = data.round;
        if (record_observer) record_observer(data);
        if (!st.subscribers.empty()) {
            for (auto c : st.subscribers) send_client(c, data);
            return;
        }
        st.buffer.push_back(data);
        while (st.buffer.size() > st.spec.buffer_capacity) st.buffer.pop_front();
    }

    void root_fault(const wire::ErrorMsg& err)
    {
        // Text starts with "stream <id> ".
        auto words = split_ws(err.text);
        std::uint64_t id = words.size() > 1 ? parse_u64(words[1]).value_or(0) : 0;
        auto it = streams.find(id);
        if (it == streams.end()) return;
        ++it->second.faults;
        for (auto c : it->second.subscribers) send_client(c, err);
    }

    void root_client(ClientId c, const wire::Message& msg)
    {
        std::visit(
            [&](const auto& m) {
                using T = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<T, wire::Attach>) {
                    send_client(c, wire::AttachAck{opts.session_epoch});
                } else if constexpr (std::is_same_v<T, wire::CreateStream>) {
                    create_stream(c, m.spec);
                } else if constexpr (std::is_same_v<T, wire::Subscribe>) {
                    subscribe(c, m.stream_id);
                } else if constexpr (std::is_same_v<T, wire::SetRate>) {
                    set_rate(c, m);
                } else if constexpr (std::is_same_v<T, wire::JobMapUpdate>) {
                    job_map_update(c, m);
                } else if constexpr (std::is_same_v<T, wire::Detach>) {
                    detach(c);
                } else {
                    send_client(c, wire::ErrorMsg{wire::kErrProtocol,
                                                  "unexpected " + std::string(wire::type_name(wire::type_of(msg))) +
                                                      " from a session client"});
                }
            },
            msg);
    }

    void create_stream(ClientId c, StreamSpec spec)
    {
        if (spec.closed) {
            auto it = streams.find(spec.id);
            if (it == streams.end() || it->second.spec.closed) {
                send_client(c, wire::ErrorMsg{wire::kErrUnknownStream, "no open stream " + std::to_string(spec.id)});
                return;
            }
            close_stream(spec.id);
            send_client(c, wire::StreamCreated{spec.id});
            return;
        }
        for (const auto& [id, st] : streams) {
            if (st.spec.closed || st.spec.name != spec.name) continue;
            if (same_shape(st.spec, spec)) {
                send_client(c, wire::StreamCreated{id});
            } else {
                send_client(c, wire::ErrorMsg{wire::kErrMalformedSpec,
                                              "stream name '" + spec.name + "' is in use with a different definition"});
            }
            return;
        }
        std::set<std::string> known;
        for (const auto& e : jobs.entries) known.insert(e.job_id);
        try {
            resolve_stream(spec, topo, jobs.epoch > 0 ? &known : nullptr);
        } catch (const StreamRejected& e) {
            send_client(c, wire::ErrorMsg{e.code(), e.what()});
            return;
        }
        spec.id = next_stream++;
        spec.closed = false;
        StreamMeta m;
        m.expected = expected_contributors(plan, topo, spec);
        std::uint64_t acc = 0;
        for (const auto& d : topo.ring_order) {
            acc += m.expected[static_cast<std::size_t>(plan.manager_of_domain.at(d))];
            m.ring_prefix.push_back(acc);
        }
        meta[spec.id] = std::move(m);
        StreamState st;
        st.spec = spec;
        st.last_round = static_cast<std::uint64_t>(now) / spec.interval_secs;
        st.creator = spec.transient ? c : 0;
        streams[spec.id] = std::move(st);
        send_client(c, wire::StreamCreated{spec.id});
        multicast(wire::CreateStream{spec});
    }

    void close_stream(std::uint64_t id)
    {
        auto& st = streams.at(id);
        st.spec.closed = true;
        st.subscribers.clear();
        st.buffer.clear();
        for (auto it = overrides.begin(); it != overrides.end();)
            it = it->first.stream == id ? overrides.erase(it) : std::next(it);
        multicast(wire::CreateStream{st.spec});
    }

    void subscribe(ClientId c, std::uint64_t id)
    {
        auto it = streams.find(id);
        if (it == streams.end() || it->second.spec.closed) {
            send_client(c, wire::ErrorMsg{wire::kErrUnknownStream, "no open stream " + std::to_string(id)});
            return;
        }
        StreamState& st = it->second;
        send_client(c, wire::SubscribeAck{id});
        while (!st.buffer.empty()) {
            send_client(c, st.buffer.front());
            st.buffer.pop_front();
        }
        st.subscribers.insert(c);
    }

    void set_rate(ClientId c, const wire::SetRate& sr)
    {
        auto it = streams.find(sr.stream_id);
        if (it == streams.end() || it->second.spec.closed) {
            send_client(c, wire::ErrorMsg{wire::kErrUnknownStream, "no open stream " + std::to_string(sr.stream_id)});
            return;
        }
        for (const auto& name : sr.metric_names) {
            if (!metrics::find_metric(name)) {
                send_client(c, wire::ErrorMsg{wire::kErrUnknownMetric, "unknown metric '" + name + "'"});
                return;
            }
        }
        for (const auto& name : sr.metric_names) {
            OverrideKey key{sr.stream_id, name, wire::to_string(sr.scope)};
            if (sr.interval_secs == 0) {
                overrides.erase(key);
            } else {
                wire::SetRate one = sr;
                one.metric_names = {name};
                overrides[key] = one;
            }
        }
        multicast(sr);
    }

    void job_map_update(ClientId c, wire::JobMapUpdate update)
    {
        std::set<std::string> seen;
        for (const auto& e : update.entries)
            for (const auto& n : e.nodes)
                if (!seen.insert(n).second) {
                    send_client(c, wire::ErrorMsg{wire::kErrMalformedSpec, "node '" + n + "' is listed in two jobs"});
                    return;
                }
        if (jobs.epoch > 0 && update.entries == jobs.entries) return;
        // A restarted daemon counts epochs from scratch; keep agents moving forward.
        update.epoch = std::max(update.epoch, jobs.epoch + 1);
        jobs = update;
        multicast(update);
    }

    void detach(ClientId c)
    {
        if (!clients.count(c)) return;
        for (auto& [id, st] : streams) {
            st.subscribers.erase(c);
            if (st.creator == c) {
                st.creator = 0;
                if (st.spec.transient && !st.spec.closed) close_stream(id);
            }
        }
        clients.erase(c);
    }

    void close_rounds_at(std::int64_t t)
    {
        now = t;
        for (int p : close_order) {
            for (auto& [id, ps] : run(p).streams) {
                auto interval = static_cast<std::int64_t>(streams.at(id).spec.interval_secs);
                std::int64_t limit = t - (opts.simulated ? 0 : 2 * interval);
                if (limit <= 0) continue;
                auto last_due = static_cast<std::uint64_t>(limit / interval);
                if (ps.watermark < last_due) emit_through(p, id, last_due);
            }
            pump();
        }
        for (auto& [id, st] : streams) {
            if (st.spec.closed) continue;
            auto interval = static_cast<std::int64_t>(st.spec.interval_secs);
            std::int64_t limit = t - (opts.simulated ? 0 : 2 * interval);
            if (limit <= 0) continue;
            auto last_due = static_cast<std::uint64_t>(limit / interval);
            while (st.last_round < last_due) root_deliver(st, synthesized(st, st.last_round + 1));
        }
        pump();
    }
};

Overlay::Overlay(OverlayTopology topo, OverlayOptions opts) : impl_(std::make_unique<Impl>(std::move(topo), opts)) {}
Overlay::~Overlay() = default;

const OverlayTopology& Overlay::topology() const { return impl_->topo; }
const OverlayPlan& Overlay::plan() const { return impl_->plan; }
std::int64_t Overlay::session_epoch() const { return impl_->opts.session_epoch; }
std::int64_t Overlay::now() const { return impl_->now; }
void Overlay::set_time(std::int64_t now) { impl_->now = now; }

void Overlay::attach_agent(const std::string& node, LustreRole role, Port* port)
{
    auto& im = *impl_;
    auto it = im.plan.leaf_of_node.find(node);
    if (it == im.plan.leaf_of_node.end()) throw Error("unknown node '" + node + "'");
    const DomainSpec& d = *im.topo.domain_of_node(node);
    if (d.role != role)
        throw Error("node '" + node + "' is in " + std::string(to_string(d.role)) + " domain '" + d.id +
                    "', not " + std::string(to_string(role)));
    auto& leaf = im.run(it->second);
    if (leaf.agent) throw Error("node '" + node + "' is already attached");
    leaf.agent = port;
    if (im.jobs.epoch > 0) port->deliver(im.jobs);
    for (const auto& [id, st] : im.streams) {
        if (st.spec.closed) continue;
        leaf.streams.try_emplace(id, ProcStream{static_cast<std::uint64_t>(im.now) / st.spec.interval_secs, {}});
        port->deliver(wire::CreateStream{st.spec});
    }
    for (const auto& [key, sr] : im.overrides)
        if (Impl::in_scope(d, sr.scope)) port->deliver(sr);
}

void Overlay::detach_agent(const std::string& node)
{
    auto it = impl_->plan.leaf_of_node.find(node);
    if (it != impl_->plan.leaf_of_node.end()) impl_->run(it->second).agent = nullptr;
}

bool Overlay::agent_attached(const std::string& node) const
{
    auto it = impl_->plan.leaf_of_node.find(node);
    return it != impl_->plan.leaf_of_node.end() && impl_->rt[static_cast<std::size_t>(it->second)].agent;
}

void Overlay::agent_send(const std::string& node, const wire::Message& msg)
{
    auto& im = *impl_;
    auto it = im.plan.leaf_of_node.find(node);
    if (it == im.plan.leaf_of_node.end() || !im.run(it->second).agent) return;
    int leaf = it->second;
    if (auto* d = std::get_if<wire::Data>(&msg)) {
        auto m = im.meta.find(d->stream_id);
        if (m == im.meta.end() || m->second.expected[static_cast<std::size_t>(leaf)] == 0) return;
        auto& last = im.run(leaf).last_sent[d->stream_id];
        if (d->round <= last) return;
        last = d->round;
    } else if (!std::holds_alternative<wire::ErrorMsg>(msg)) {
        return;
    }
    im.send_proc(leaf, im.proc(leaf).parent, LinkKind::tree, false, msg);
    im.pump();
}

Overlay::ClientId Overlay::attach_client(const std::string& name, Port* port)
{
    ClientId id = impl_->next_client++;
    impl_->clients[id] = ClientRt{name, port};
    return id;
}

void Overlay::client_send(ClientId client, const wire::Message& msg)
{
    auto& im = *impl_;
    if (!im.clients.count(client)) return;
    Item it;
    it.from_client = client;
    it.to = im.plan.root;
    it.link = LinkKind::client;
    im.send(std::move(it), msg);
    im.pump();
}

void Overlay::detach_client(ClientId client)
{
    impl_->detach(client);
    impl_->pump();
}

void Overlay::drop_ring_link(const std::string& domain)
{
    auto it = impl_->plan.manager_of_domain.find(domain);
    if (it == impl_->plan.manager_of_domain.end()) throw Error("unknown domain '" + domain + "'");
    impl_->run(it->second).ring_out_severed = true;
}

void Overlay::close_rounds(std::int64_t now) { impl_->close_rounds_at(now); }

void Overlay::set_frame_observer(std::function<void(const FrameEvent&)> fn) { impl_->frame_observer = std::move(fn); }
void Overlay::set_record_observer(std::function<void(const wire::Data&)> fn) { impl_->record_observer = std::move(fn); }

const StreamState* Overlay::stream(std::uint64_t id) const
{
    auto it = impl_->streams.find(id);
    return it == impl_->streams.end() ? nullptr : &it->second;
}

const StreamState* Overlay::stream_by_name(const std::string& name) const
{
    for (const auto& [id, st] : impl_->streams)
        if (st.spec.name == name && !st.spec.closed) return &st;
    return nullptr;
}

std::vector<std::uint64_t> Overlay::stream_ids() const
{
    std::vector<std::uint64_t> out;
    for (const auto& [id, st] : impl_->streams) out.push_back(id);
    return out;
}

std::uint64_t Overlay::job_epoch() const { return impl_->jobs.epoch; }
const wire::JobMapUpdate& Overlay::job_map() const { return impl_->jobs; }

}  // namespace melt::overlay
