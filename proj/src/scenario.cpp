#include "melt/scenario.hpp"

#include <algorithm>
#include <filesystem>
#include <set>

namespace melt::sim {

std::string_view to_string(Fault::Kind kind)
{
    return kind == Fault::Kind::detach_agent ? "detach-agent" : "drop-ring-link";
}

namespace {

std::int64_t parse_secs(const std::string& value, const std::string& where)
{
    std::string_view v = value;
    std::int64_t mult = 1;
    if (!v.empty() && (v.back() == 's' || v.back() == 'm' || v.back() == 'h')) {
        mult = v.back() == 's' ? 1 : v.back() == 'm' ? 60 : 3600;
        v.remove_suffix(1);
    }
    auto n = parse_i64(v);
    if (!n || *n < 0) throw ConfigError(where + ": bad duration '" + value + "'");
    return *n * mult;
}

std::string resolve_path(const std::string& base_dir, const std::string& path)
{
    std::filesystem::path p(path);
    return p.is_absolute() ? path : (std::filesystem::path(base_dir) / p).string();
}

}  // namespace

ScenarioSpec parse_scenario(std::string_view text, const std::string& base_dir)
{
    auto sections = overlay::parse_sections(text);
    ScenarioSpec spec;
    const overlay::ConfigSection* sc = nullptr;
    for (const auto& s : sections) {
        if (s.kind != "scenario") continue;
        if (sc) throw ConfigError("line " + std::to_string(s.line) + ": second [scenario] section");
        if (!s.arg.empty()) throw ConfigError("line " + std::to_string(s.line) + ": [scenario] takes no argument");
        sc = &s;
    }
    if (!sc) throw ConfigError("missing [scenario] section");

    std::set<std::string> seen;
    bool have_duration = false, have_topology_file = false;
    for (const auto& e : sc->entries) {
        const std::string where = "line " + std::to_string(e.line);
        if (e.key != "fault" && !seen.insert(e.key).second) throw ConfigError(where + ": duplicate key '" + e.key + "'");
        if (e.key == "duration") {
            spec.duration = parse_secs(e.value, where);
            have_duration = true;
        } else if (e.key == "seed") {
            auto v = parse_u64(e.value);
            if (!v) throw ConfigError(where + ": bad seed '" + e.value + "'");
            spec.seed = *v;
        } else if (e.key == "noise") {
            auto v = parse_double(e.value);
            if (!v || *v < 0 || *v >= 1) throw ConfigError(where + ": noise must be in [0, 1)");
            spec.noise = *v;
        } else if (e.key == "start") {
            auto v = parse_i64(e.value);
            if (!v || *v < 0) throw ConfigError(where + ": start must be a unix time in seconds");
            spec.start = *v;
        } else if (e.key == "topology") {
            spec.topology = overlay::load_topology(resolve_path(base_dir, e.value));
            have_topology_file = true;
        } else if (e.key == "workload") {
            spec.workload_path = resolve_path(base_dir, e.value);
        } else if (e.key == "meltmon") {
            if (e.value != "on" && e.value != "off") throw ConfigError(where + ": meltmon must be on or off");
            spec.meltmon = e.value == "on";
        } else if (e.key == "poll") {
            auto secs = parse_secs(e.value, where);
            if (secs < 1) throw ConfigError(where + ": poll interval must be at least 1 s");
            spec.poll_secs = static_cast<std::uint32_t>(secs);
        } else if (e.key == "jobmap") {
            if (e.value == "workload") {
                spec.jobmap = {JobMapConfig::Kind::workload, ""};
            } else if (starts_with(e.value, "file:") && e.value.size() > 5) {
                spec.jobmap = {JobMapConfig::Kind::file, resolve_path(base_dir, e.value.substr(5))};
            } else {
                throw ConfigError(where + ": jobmap must be 'workload' or file:<path>");
            }
        } else if (e.key == "pid") {
            auto v = parse_i64(e.value);
            if (!v || *v <= 0) throw ConfigError(where + ": bad pid '" + e.value + "'");
            spec.pid = static_cast<long>(*v);
        } else if (e.key == "fault") {
            auto w = split_ws(e.value);
            if (w.size() != 3) throw ConfigError(where + ": fault is '<time> detach-agent|drop-ring-link <subject>'");
            Fault f;
            f.time = parse_secs(w[0], where);
            if (w[1] == "detach-agent") f.kind = Fault::Kind::detach_agent;
            else if (w[1] == "drop-ring-link") f.kind = Fault::Kind::drop_ring_link;
            else throw ConfigError(where + ": unknown fault kind '" + w[1] + "'");
            f.subject = w[2];
            spec.faults.push_back(std::move(f));
        } else {
            throw ConfigError(where + ": unknown scenario key '" + e.key + "'");
        }
    }
    if (!have_duration) throw ConfigError("[scenario] needs a duration");
    const bool inline_topology = std::any_of(sections.begin(), sections.end(), [](const auto& s) { return s.kind != "scenario"; });
    if (have_topology_file && inline_topology)
        throw ConfigError("scenario has both topology= and inline topology sections");
    if (!have_topology_file) spec.topology = overlay::topology_from_sections(sections, {"scenario"});
    spec.workload = std::make_shared<const Workload>(spec.workload_path.empty() ? Workload{}
                                                                                : load_workload(spec.workload_path));
    validate_scenario(spec);
    return spec;
}

ScenarioSpec load_scenario(const std::string& path)
{
    auto dir = std::filesystem::path(path).parent_path().string();
    return parse_scenario(overlay::read_file(path), dir.empty() ? "." : dir);
}

void validate_scenario(const ScenarioSpec& spec)
{
    overlay::validate(spec.topology);
    if (spec.duration <= 0) throw ConfigError("scenario duration must be positive");
    for (const auto& f : spec.faults) {
        if (f.time < 0 || f.time > spec.duration)
            throw ConfigError("fault at " + std::to_string(f.time) + " s is outside the scenario duration");
        if (f.kind == Fault::Kind::detach_agent) {
            const auto* d = spec.topology.domain_of_node(f.subject);
            if (!d || std::find(d->members.begin(), d->members.end(), f.subject) == d->members.end())
                throw ConfigError("fault subject '" + f.subject + "' is not an agent node");
        } else if (!spec.topology.domain(f.subject)) {
            throw ConfigError("fault subject '" + f.subject + "' is not a domain");
        }
    }
    if (spec.workload) validate_workload(*spec.workload, spec.duration, &spec.topology);
}

// -- transcript ---------------------------------------------------------------

std::string Transcript::text() const
{
    std::string out;
    for (const auto& l : lines) {
        out += l;
        out += '\n';
    }
    return out;
}

std::uint64_t Transcript::digest() const { return fnv1a64(text()); }

namespace {

std::string sample_line(const SampleEvent& e)
{
    const auto& s = e.sample;
    return "t=" + std::to_string(e.time) + " sample node=" + s.node_id + " stream=" + std::to_string(e.stream_id) +
           " round=" + std::to_string(s.round) + " metric=" + s.metric + " key=" +
           (s.group_key.empty() ? "-" : s.group_key) + " value=" + format_double(s.value) +
           " weight=" + std::to_string(s.weight);
}

std::string frame_line(const overlay::FrameEvent& f)
{
    std::string out = "t=" + std::to_string(f.time) + " frame " + f.from + " -> " + f.to +
                      " link=" + std::string(overlay::to_string(f.link)) + (f.down ? " down" : " up") + " type=" +
                      std::string(wire::type_name(f.type)) + " stream=" + std::to_string(f.stream_id);
    if (f.type == wire::MsgType::data)
        out += " round=" + std::to_string(f.round) + " expected=" + std::to_string(f.expected) +
               " actual=" + std::to_string(f.actual);
    if (f.multicast) out += " mcast=" + std::to_string(f.multicast);
    out += " bytes=" + std::to_string(f.bytes) + " hash=" + hex64(f.hash);
    if (f.dropped) out += " dropped";
    return out;
}

std::string record_line(const RecordEvent& r)
{
    return "t=" + std::to_string(r.time) + " record stream=" + std::to_string(r.data.stream_id) +
           " round=" + std::to_string(r.data.round) + " expected=" + std::to_string(r.data.expected_contributors) +
           " actual=" + std::to_string(r.data.actual_contributors) + " body=" + hex64(fnv1a64(r.data.aggregate_body));
}

}  // namespace

// -- runner -------------------------------------------------------------------

struct ScenarioRunner::AgentSlot : overlay::Port {
    AgentSlot(ScenarioRunner& r, const std::string& node, std::unique_ptr<agent::MetricSource> src)
        : runner(r), source(std::move(src)),
          agent(agent::agent_config_for(*r.topo_, node), *source)
    {
    }
    void deliver(const wire::Message& msg) override { agent.on_message(msg, runner.now_); }

    ScenarioRunner& runner;
    std::unique_ptr<agent::MetricSource> source;
    agent::Agent agent;
    bool attached = false;
};

ScenarioRunner::ScenarioRunner(ScenarioSpec spec, bool realtime)
    : spec_(std::move(spec)), topo_(std::make_shared<const overlay::OverlayTopology>(spec_.topology))
{
    if (!spec_.workload) spec_.workload = std::make_shared<const Workload>();
    overlay::OverlayOptions opts;
    opts.session_epoch = spec_.start;
    opts.simulated = !realtime;
    overlay_ = std::make_unique<overlay::Overlay>(spec_.topology, opts);
    overlay_->set_time(0);
    now_ = 0;
    overlay_->set_frame_observer([this](const overlay::FrameEvent& f) {
        transcript_.frames.push_back(f);
        log_line(frame_line(f));
    });
    overlay_->set_record_observer([this](const wire::Data& d) {
        transcript_.records.push_back({now_, d});
        log_line(record_line(transcript_.records.back()));
    });

    SyntheticOptions so{spec_.seed, spec_.noise};
    for (const auto& node : topo_->all_members()) {
        auto src = std::make_unique<SyntheticSource>(spec_.workload, topo_, node, so);
        auto slot = std::make_unique<AgentSlot>(*this, node, std::move(src));
        overlay_->attach_agent(node, slot->agent.config().role, slot.get());
        slot->attached = true;
        agents_[node] = std::move(slot);
    }

    if (spec_.jobmap.kind == JobMapConfig::Kind::file) {
        jobs_ = std::make_unique<meltmon::FileJobAdapter>(spec_.jobmap.path);
    } else {
        auto w = spec_.workload;
        jobs_ = std::make_unique<meltmon::FunctionJobAdapter>([w](std::int64_t t) { return job_map_text(*w, t); });
    }
    if (spec_.meltmon) start_meltmon();
    tick_agents(0);
}

ScenarioRunner::~ScenarioRunner()
{
    // Clients detach through the overlay, so drop them first.
    clients_.clear();
}

void ScenarioRunner::log_line(std::string line) { transcript_.lines.push_back(std::move(line)); }

void ScenarioRunner::start_meltmon()
{
    meltmon::Options o;
    o.host = spec_.topology.root_node;
    o.pid = spec_.pid;
    o.poll_secs = spec_.poll_secs;
    meltmon_ = std::make_unique<meltmon::Meltmon>(*topo_, *jobs_, logs_, o);
    meltmon_client_ = &add_client(*meltmon_, o.name);
    record_new_streams();
}

void ScenarioRunner::kill_meltmon()
{
    if (!meltmon_client_) return;
    remove_client(*meltmon_client_);
    meltmon_client_ = nullptr;
}

session::SimClient& ScenarioRunner::add_client(session::ClientLogic& logic, const std::string& name)
{
    clients_.push_back(std::make_unique<session::SimClient>(*overlay_, logic, name));
    auto& c = *clients_.back();
    c.start();
    return c;
}

void ScenarioRunner::remove_client(session::SimClient& client)
{
    client.disconnect();
    clients_.erase(std::remove_if(clients_.begin(), clients_.end(), [&](const auto& p) { return p.get() == &client; }),
                   clients_.end());
}

void ScenarioRunner::detach_agent(const std::string& node)
{
    auto it = agents_.find(node);
    if (it == agents_.end() || !it->second->attached) return;
    overlay_->detach_agent(node);
    it->second->attached = false;
    log_line("t=" + std::to_string(now_) + " fault detach-agent " + node);
}

void ScenarioRunner::drop_ring_link(const std::string& domain)
{
    overlay_->drop_ring_link(domain);
    log_line("t=" + std::to_string(now_) + " fault drop-ring-link " + domain);
}

void ScenarioRunner::release_agent(const std::string& node)
{
    auto it = agents_.find(node);
    if (it == agents_.end()) throw Error("unknown agent node '" + node + "'");
    if (it->second->attached) overlay_->detach_agent(node);
    it->second->attached = false;
}

agent::Agent* ScenarioRunner::agent(const std::string& node)
{
    auto it = agents_.find(node);
    return it == agents_.end() ? nullptr : &it->second->agent;
}

std::vector<std::string> ScenarioRunner::agent_nodes() const
{
    std::vector<std::string> out;
    for (const auto& [node, slot] : agents_) out.push_back(node);
    return out;
}

void ScenarioRunner::record_new_streams()
{
    for (auto id : overlay_->stream_ids())
        if (!transcript_.streams.count(id)) {
            transcript_.streams[id] = overlay_->stream(id)->spec;
            log_line("t=" + std::to_string(now_) + " stream id=" + std::to_string(id) + " name=" +
                     overlay_->stream(id)->spec.name);
        }
    for (const auto& [file, lines] : logs_.files) {
        auto& seen = log_seen_[file];
        for (; seen < lines.size(); ++seen) log_line("t=" + std::to_string(now_) + " log " + file + " " + lines[seen]);
    }
}

void ScenarioRunner::tick_agents(std::int64_t t)
{
    for (auto& [node, slot] : agents_) {
        if (!slot->attached) continue;
        auto res = slot->agent.tick(t);
        for (auto& s : res.samples) {
            transcript_.samples.push_back({t, s.stream_id, s.sample});
            log_line(sample_line(transcript_.samples.back()));
        }
        for (const auto& rec : res.records) overlay_->agent_send(node, rec);
    }
}

void ScenarioRunner::step()
{
    const std::int64_t t = now_ + 1;
    now_ = t;
    overlay_->set_time(t);
    for (const auto& f : spec_.faults) {
        if (f.time != t) continue;
        if (f.kind == Fault::Kind::detach_agent) detach_agent(f.subject);
        else drop_ring_link(f.subject);
    }
    tick_agents(t);
    for (std::size_t i = 0; i < clients_.size(); ++i) clients_[i]->tick(t);
    overlay_->close_rounds(t);
    record_new_streams();
}

void ScenarioRunner::run_until(std::int64_t t)
{
    while (now_ < t) step();
}

Transcript& ScenarioRunner::run()
{
    run_until(spec_.duration);
    transcript_.logs = logs_.files;
    return transcript_;
}

Transcript run_scenario(const ScenarioSpec& spec)
{
    ScenarioRunner runner(spec);
    return std::move(runner.run());
}

metrics::StreamAggregate oracle_aggregate(const Transcript& t, std::uint64_t stream_id, std::uint64_t round)
{
    metrics::StreamAggregate agg;
    const StreamSpec& spec = t.streams.at(stream_id);
    for (const auto& e : t.samples)
        if (e.stream_id == stream_id && e.sample.round == round) metrics::fold_sample(agg, spec, e.sample);
    return agg;
}

Accounting message_accounting(const Transcript& t)
{
    Accounting a;
    for (const auto& f : t.frames) {
        ++a.sent[f.from];
        if (!f.dropped) ++a.received[f.to];
        if (f.multicast) ++a.multicasts[f.multicast][{f.from, f.to}];
        if (f.type != wire::MsgType::data || f.link == overlay::LinkKind::client) continue;
        auto& r = a.rounds[{f.stream_id, f.round}];
        if (f.dropped) {
            ++r.dropped;
            continue;
        }
        if (f.link == overlay::LinkKind::tree) ++r.tree_edges[{f.from, f.to}];
        else ++r.ring_frames;
        if (f.to == "root") ++r.root_in;
    }
    return a;
}

}  // namespace melt::sim
