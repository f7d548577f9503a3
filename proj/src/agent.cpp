#include "melt/agent.hpp"

#include <algorithm>
#include <cmath>

namespace melt::agent {

using metrics::Derivation;
using metrics::MetricDef;
using metrics::Sample;

AgentConfig agent_config_for(const overlay::OverlayTopology& topo, const std::string& node)
{
    const auto* d = topo.domain_of_node(node);
    if (!d) throw ConfigError("node '" + node + "' is not in the topology");
    AgentConfig cfg;
    cfg.node_id = node;
    cfg.domain_id = d->id;
    cfg.role = d->role;
    cfg.filesystems = d->filesystems;
    if (auto it = d->osts.find(node); it != d->osts.end()) cfg.osts = it->second;
    for (const auto& dom : topo.domains)
        for (const auto& [oss, list] : dom.osts)
            for (const auto& ost : list) cfg.server_of_target[ost] = oss;
    for (const auto& fs : topo.filesystems()) {
        auto mds = topo.mds_of_fs(fs);
        if (!mds.empty()) cfg.server_of_target[overlay::mdt_name(fs)] = mds;
    }
    return cfg;
}

Agent::Agent(AgentConfig cfg, MetricSource& source) : cfg_(std::move(cfg)), source_(source)
{
    for (const auto& [cls, secs] : cfg_.default_intervals)
        if (secs < 1) throw ConfigError("default interval for " + std::string(metrics::to_string(cls)) + " must be >= 1 s");
    for (const auto& def : metrics::catalog())
        if (metrics::produces(def, cfg_.role)) produced_.push_back(def);
}

std::uint32_t Agent::default_interval(const MetricDef& def) const
{
    auto it = cfg_.default_intervals.find(def.cls);
    return it == cfg_.default_intervals.end() ? def.default_interval_secs : it->second;
}

std::uint32_t Agent::effective_interval(const std::string& metric) const
{
    const auto& def = metrics::metric(metric);
    std::uint32_t out = default_interval(def);
    for (const auto& [key, secs] : overrides_)
        if (key.second == metric) out = std::min(out, secs);
    return out;
}

std::vector<StreamSpec> Agent::streams() const
{
    std::vector<StreamSpec> out;
    for (const auto& [id, h] : streams_) out.push_back(h.spec);
    return out;
}

void Agent::on_message(const wire::Message& msg, std::int64_t now)
{
    if (auto* cs = std::get_if<wire::CreateStream>(&msg)) {
        const auto& spec = cs->spec;
        if (spec.closed) {
            streams_.erase(spec.id);
            for (auto it = overrides_.begin(); it != overrides_.end();)
                it = it->first.first == spec.id ? overrides_.erase(it) : std::next(it);
            return;
        }
        if (streams_.count(spec.id)) return;
        Held h;
        h.spec = spec;
        for (const auto& name : metrics::expand_metric_selection(spec.metrics)) {
            const auto& def = metrics::metric(name);
            if (metrics::produces(def, cfg_.role)) h.metrics.push_back(&def);
        }
        h.watermark = static_cast<std::uint64_t>(std::max<std::int64_t>(now, 0)) / spec.interval_secs;
        streams_.emplace(spec.id, std::move(h));
    } else if (auto* sr = std::get_if<wire::SetRate>(&msg)) {
        for (const auto& name : sr->metric_names) {
            if (!metrics::find_metric(name)) continue;
            if (sr->interval_secs == 0) overrides_.erase({sr->stream_id, name});
            else overrides_[{sr->stream_id, name}] = sr->interval_secs;
        }
    } else if (auto* jm = std::get_if<wire::JobMapUpdate>(&msg)) {
        if (jm->epoch < job_epoch_) return;
        job_epoch_ = jm->epoch;
        job_ = std::string(kUnassigned);
        for (const auto& e : jm->entries)
            if (std::find(e.nodes.begin(), e.nodes.end(), cfg_.node_id) != e.nodes.end()) job_ = e.job_id;
    }
}

void Agent::sample(std::int64_t now)
{
    std::vector<const MetricDef*> due;
    for (const auto& def : produced_)
        if (now % effective_interval(def.name) == 0) due.push_back(&def);
    if (due.empty()) return;
    SnapPtr snap;
    try {
        snap = std::make_shared<const SourceSnapshot>(source_.snapshot(now));
    } catch (const Error&) {
        ++health_.source_failures;
        return;
    }
    for (const auto* def : due) history_[def->name].push_back({now, snap});
    if (!snap->events.empty()) events_.emplace_back(now, snap->events);
}

void Agent::trim(std::int64_t now)
{
    std::int64_t span = 30;
    for (const auto& [id, h] : streams_) span = std::max<std::int64_t>(span, h.spec.interval_secs);
    for (const auto& def : produced_) span = std::max<std::int64_t>(span, default_interval(def));
    std::int64_t horizon = now - 2 * span - 1;
    for (auto& [name, hist] : history_)
        // Keep one entry at or before the horizon as a window start.
        while (hist.size() > 1 && hist[1].t <= horizon) hist.pop_front();
    while (!events_.empty() && events_.front().first <= horizon) events_.pop_front();
}

TickResult Agent::tick(std::int64_t now)
{
    TickResult out;
    sample(now);
    for (auto& [id, h] : streams_) {
        if (!is_producer(h.spec, cfg_.role, cfg_.node_id)) continue;
        if (now <= 0 || now % h.spec.interval_secs != 0) continue;
        auto round = static_cast<std::uint64_t>(now) / h.spec.interval_secs;
        if (round <= h.watermark) continue;
        h.watermark = round;
        metrics::StreamAggregate agg;
        for (auto& s : round_samples(h, round)) {
            metrics::fold_sample(agg, h.spec, s);
            out.samples.push_back({id, std::move(s)});
        }
        wire::Data d;
        d.stream_id = id;
        d.round = round;
        d.window_secs = h.spec.interval_secs;
        d.expected_contributors = 1;
        d.actual_contributors = 1;
        d.aggregate_body = metrics::encode_body(agg);
        out.records.push_back(std::move(d));
    }
    trim(now);
    return out;
}

std::string Agent::group_key(const StreamSpec& spec, const std::string& fs, const std::string& target) const
{
    std::string key;
    switch (spec.group_by) {
    case GroupBy::none: break;
    case GroupBy::client: key = cfg_.node_id; break;
    case GroupBy::job: key = job_; break;
    case GroupBy::ost: key = target; break;
    case GroupBy::server:
        if (cfg_.role == LustreRole::client && !target.empty()) {
            auto it = cfg_.server_of_target.find(target);
            key = it == cfg_.server_of_target.end() ? std::string() : it->second;
        } else {
            key = cfg_.node_id;
        }
        break;
    }
    // Node-level values (gauges) have no target to group by.
    if (spec.group_by != GroupBy::none && key.empty()) key = cfg_.node_id;
    if (keyed_by_fs(spec)) {
        std::string f = fs.empty() && !cfg_.filesystems.empty() ? cfg_.filesystems.front() : fs;
        key = spec.group_by == GroupBy::none ? f : f + "," + key;
    }
    return key;
}

bool Agent::key_selected(const StreamSpec& spec, const CounterKey& key) const
{
    if (!spec.fs.empty() && key.fs != spec.fs) return false;
    if (!spec.osts.empty() && std::find(spec.osts.begin(), spec.osts.end(), key.target) == spec.osts.end())
        return false;
    return true;
}

namespace {

struct Window {
    const SourceSnapshot* prev = nullptr;
    const SourceSnapshot* cur = nullptr;
    double dt = 0;
};

template <class Hist>
Window window(const Hist& hist, std::int64_t t, std::int64_t interval)
{
    Window w;
    std::int64_t t2 = 0, t1 = 0;
    for (const auto& e : hist) {
        if (e.t > t - interval && e.t <= t) {
            w.cur = e.snap.get();
            t2 = e.t;
        } else if (e.t <= t - interval) {
            w.prev = e.snap.get();
            t1 = e.t;
        }
    }
    if (w.cur && w.prev) w.dt = static_cast<double>(t2 - t1);
    return w;
}

}  // namespace

std::vector<Sample> Agent::round_samples(const Held& h, std::uint64_t round) const
{
    std::vector<Sample> out;
    const StreamSpec& spec = h.spec;
    if (!spec.job.empty() && job_ != spec.job) return out;
    const auto t = static_cast<std::int64_t>(round * spec.interval_secs);
    const auto I = static_cast<std::int64_t>(spec.interval_secs);

    auto make = [&](const MetricDef& def, const std::string& key, double value, std::uint64_t weight,
                    const std::string& fs, const std::string& target) {
        Sample s;
        s.node_id = cfg_.node_id;
        s.lustre_role = cfg_.role;
        s.fs_name = fs;
        s.job_id = job_;
        s.ost_id = spec.group_by == GroupBy::ost ? target : std::string();
        s.metric = def.name;
        s.round = round;
        s.window_secs = spec.interval_secs;
        s.value = value;
        s.weight = weight;
        s.group_key = key;
        out.push_back(std::move(s));
    };

    struct Acc {
        double a = 0, b = 0;
        std::string fs, target;
        bool mixed_fs = false;
        void note(const CounterKey& k)
        {
            if (fs.empty() && target.empty()) {
                fs = k.fs;
                target = k.target;
            } else if (fs != k.fs) {
                mixed_fs = true;
            }
        }
    };

    for (const MetricDef* defp : h.metrics) {
        const MetricDef& def = *defp;
        auto hit = history_.find(def.name);
        switch (def.derivation) {
        case Derivation::counter_rate:
        case Derivation::counter_ratio:
        case Derivation::active_clients: {
            if (hit == history_.end()) break;
            Window w = window(hit->second, t, I);
            if (!w.cur || !w.prev || w.dt <= 0) break;
            std::map<std::string, Acc> groups;
            bool reset = false;
            auto delta = [&](const CounterKey& k, double cur, double& d) {
                auto p = w.prev->counters.find(k);
                if (p == w.prev->counters.end()) return false;
                auto r = metrics::rate_from_counters(p->second, cur, 1.0);
                if (r.reset) {
                    reset = true;
                    return false;
                }
                d = *r.value;
                return true;
            };
            for (const auto& [k, cur] : w.cur->counters) {
                if (!key_selected(spec, k)) continue;
                bool num = false, den = false;
                if (def.derivation == Derivation::active_clients) num = k.name == "IO_RD_BYTES" || k.name == "IO_WR_BYTES";
                else num = k.name == def.counter;
                den = def.derivation == Derivation::counter_ratio && k.name == def.denominator;
                if (!num && !den) continue;
                double d = 0;
                if (!delta(k, cur, d)) continue;
                auto& acc = groups[group_key(spec, k.fs, k.target)];
                acc.note(k);
                if (num) acc.a += d;
                if (den) acc.b += d;
            }
            if (reset) {
                // The whole window is suppressed for this metric only.
                ++health_.counter_resets;
                break;
            }
            for (const auto& [key, acc] : groups) {
                std::string fs = acc.mixed_fs ? std::string() : acc.fs;
                if (def.derivation == Derivation::counter_rate) {
                    make(def, key, acc.a / w.dt, 1, fs, acc.target);
                } else if (def.derivation == Derivation::active_clients) {
                    if (acc.a > 0) make(def, key, 1, 1, fs, acc.target);
                } else {
                    auto weight = static_cast<std::uint64_t>(std::llround(acc.b));
                    if (weight > 0) make(def, key, acc.a / acc.b, weight, fs, acc.target);
                }
            }
            break;
        }
        case Derivation::gauge: {
            if (hit == history_.end() || !spec.osts.empty()) break;
            const SourceSnapshot* cur = nullptr;
            for (const auto& e : hit->second)
                if (e.t > t - I && e.t <= t) cur = e.snap.get();
            if (!cur) break;
            auto g = cur->gauges.find(def.counter);
            if (g == cur->gauges.end()) break;
            if (g->second < 0 || (def.unit == metrics::Unit::percent && g->second > 100)) {
                ++health_.invalid_gauges;
                break;
            }
            make(def, group_key(spec, spec.fs, ""), g->second, 1, spec.fs, "");
            break;
        }
        case Derivation::events: {
            std::map<std::string, std::uint64_t> tally;
            for (const auto& [et, evs] : events_) {
                if (et <= t - I || et > t) continue;
                for (const auto& e : evs) {
                    const std::string& field =
                        def.event_field == "op" ? e.op : def.event_field == "path" ? e.path : e.client;
                    if (!field.empty()) ++tally[field];
                }
            }
            for (const auto& [key, n] : tally) make(def, key, static_cast<double>(n), n, spec.fs, "");
            break;
        }
        }
    }
    return out;
}

}  // namespace melt::agent
