#pragma once

// Shared fixtures: a client that creates streams, small topologies, and
// random scenarios for property tests.

#include "melt/scenario.hpp"

#include <random>
#include <sstream>

namespace melt::testing {

/// Creates the given streams (optionally subscribing) and records replies.
class StreamClient : public session::ClientLogic {
public:
    explicit StreamClient(std::vector<StreamSpec> specs, bool subscribe = true)
        : specs_(std::move(specs)), subscribe_(subscribe)
    {
    }

    void start(session::Sender& out, std::int64_t) override
    {
        out_ = &out;
        out_->send(session::session_attach("test"));
        next();
    }
    void on_message(const wire::Message& msg, std::int64_t) override
    {
        if (const auto* c = std::get_if<wire::StreamCreated>(&msg)) {
            ids.push_back(c->stream_id);
            if (subscribe_) out_->send(wire::Subscribe{c->stream_id, wire::Direction::up_consumer});
            ++sent_;
            next();
        } else if (const auto* d = std::get_if<wire::Data>(&msg)) {
            data.push_back(*d);
        } else if (const auto* e = std::get_if<wire::ErrorMsg>(&msg)) {
            errors.push_back(*e);
            if (sent_ < specs_.size()) {
                ids.push_back(0);
                ++sent_;
                next();
            }
        } else if (const auto* a = std::get_if<wire::SubscribeAck>(&msg)) {
            acks.push_back(a->stream_id);
        }
    }
    void on_tick(std::int64_t) override {}
    void stop() override
    {
        if (out_ && !done_) out_->send(wire::Detach{"test"});
        done_ = true;
    }
    bool finished() const override { return done_; }

    void send(const wire::Message& msg) { out_->send(msg); }

    std::vector<std::uint64_t> ids;
    std::vector<wire::Data> data;
    std::vector<wire::ErrorMsg> errors;
    std::vector<std::uint64_t> acks;

private:
    void next()
    {
        if (sent_ < specs_.size()) out_->send(wire::CreateStream{specs_[sent_]});
    }

    std::vector<StreamSpec> specs_;
    bool subscribe_;
    session::Sender* out_ = nullptr;
    std::size_t sent_ = 0;
    bool done_ = false;
};

inline std::string numbered(const std::string& prefix, std::size_t n)
{
    std::vector<std::string> out;
    for (std::size_t i = 1; i <= n; ++i) out.push_back(prefix + std::to_string(i));
    return join(out, ",");
}

/// Client domains of the given sizes plus one oss and one mds domain, one
/// filesystem `fs1`.
inline std::string topology_text(const std::vector<std::size_t>& client_sizes, std::uint32_t fanout,
                                 std::size_t oss = 2, std::size_t mds = 1, std::size_t routers = 0)
{
    std::ostringstream t;
    std::vector<std::string> ring;
    for (std::size_t d = 0; d < client_sizes.size(); ++d) {
        std::string id = "c" + std::to_string(d);
        t << "[domain " << id << "]\nmanager=" << id << "-mgr\nmembers=" << numbered(id + "n", client_sizes[d])
          << "\nfanout=" << fanout << "\nrole=client\nfs=fs1\n\n";
        ring.push_back(id);
    }
    if (routers) {
        t << "[domain rt]\nmanager=rt-mgr\nmembers=" << numbered("rtr", routers) << "\nfanout=" << fanout
          << "\nrole=router\n\n";
        ring.push_back("rt");
    }
    if (oss) {
        t << "[domain os]\nmanager=os-mgr\nmembers=" << numbered("oss", oss) << "\nfanout=" << fanout
          << "\nrole=oss\nfs=fs1\n\n";
        ring.push_back("os");
    }
    if (mds) {
        t << "[domain md]\nmanager=md-mgr\nmembers=" << numbered("mds", mds) << "\nfanout=" << fanout
          << "\nrole=mds\nfs=fs1\n\n";
        ring.push_back("md");
    }
    t << "[ring]\norder=" << join(ring, ",") << "\nroot=rootnode\n";
    return t.str();
}

inline sim::ScenarioSpec scenario_from(const std::string& topo, const std::string& workload, std::int64_t duration,
                                       const std::string& extra = "")
{
    std::string text = topo + "\n[scenario]\nduration=" + std::to_string(duration) + "\nmeltmon=off\n" + extra;
    auto spec = sim::parse_scenario(text);
    spec.workload = std::make_shared<const sim::Workload>(sim::parse_workload(workload));
    sim::validate_scenario(spec);
    return spec;
}

inline StreamSpec make_stream(const std::string& name, Target target, std::vector<std::string> metrics,
                              GroupBy group = GroupBy::none, std::uint32_t interval = 10)
{
    StreamSpec s;
    s.name = name;
    s.target = std::move(target);
    s.metrics = std::move(metrics);
    s.group_by = group;
    s.interval_secs = interval;
    return s;
}

struct RandomScenario {
    sim::ScenarioSpec spec;
    std::vector<StreamSpec> streams;
    std::size_t leaves = 0;
};

/// A random multi-domain scenario with at most `max_leaves` agents, a random
/// workload, random streams, and sometimes a detach fault.
inline RandomScenario random_scenario(std::uint64_t seed, std::size_t max_leaves)
{
    std::mt19937_64 rng(seed);
    auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
    RandomScenario out;
    const std::size_t oss = pick(1, 6), mds = pick(1, 2), routers = pick(0, 3);
    std::size_t budget = max_leaves - oss - mds - routers;
    const std::size_t domains = pick(1, 4);
    std::vector<std::size_t> sizes;
    for (std::size_t d = 0; d < domains; ++d) sizes.push_back(pick(1, std::max<std::size_t>(1, budget / domains)));
    const auto fanout = static_cast<std::uint32_t>(pick(2, 8));
    std::string topo = topology_text(sizes, fanout, oss, mds, routers);
    for (auto s : sizes) out.leaves += s;
    out.leaves += oss + mds + routers;

    const std::int64_t duration = 40;
    std::ostringstream w;
    int jobs = 0;
    for (std::size_t d = 0; d < domains; ++d) {
        std::string base = "c" + std::to_string(d) + "n";
        std::size_t at = 1;
        while (at <= sizes[d]) {
            std::size_t n = pick(1, std::max<std::size_t>(1, sizes[d] / 2));
            std::size_t end = std::min(sizes[d], at + n - 1);
            if (pick(0, 3) > 0) {
                std::string job = "job." + std::to_string(++jobs);
                std::vector<std::string> nodes;
                for (std::size_t i = at; i <= end; ++i) nodes.push_back(base + std::to_string(i));
                auto t0 = static_cast<std::int64_t>(pick(0, 10)), t1 = static_cast<std::int64_t>(pick(20, 40));
                w << "job " << t0 << " " << t1 << " " << job << " " << join(nodes, ",") << "\n";
                w << "io " << t0 << " " << t1 << " " << job << " " << pick(0, 1) * pick(1, 1 << 30) << " "
                  << pick(0, 1 << 28) << " " << (pick(0, 2) == 0 ? "single:oss1" : "roundrobin") << "\n";
                if (pick(0, 1)) {
                    w << "meta " << t0 << " " << t1 << " " << job << " " << pick(1, 500)
                      << " open:3,close:3,getattr:" << pick(1, 9) << ",unlink:1\n";
                    w << "paths " << t0 << " " << t1 << " " << job << " /p/a:" << pick(1, 5) << ",/p/b:"
                      << pick(1, 5) << "\n";
                }
            }
            at = end + 1;
        }
    }
    if (routers) w << "load rtr1 0 40 " << pick(0, 100) << " " << pick(0, 100) << "\n";
    w << "load c0n1 5 35 " << pick(0, 100) << " " << pick(0, 100) << "\n";

    std::string extra = "seed=" + std::to_string(seed) + "\nnoise=0.05\njobmap=workload\npoll=5s\n";
    if (pick(0, 2) == 0) extra += "fault=" + std::to_string(pick(12, 30)) + " detach-agent c0n1\n";
    out.spec = scenario_from(topo, w.str(), duration, extra);
    out.spec.meltmon = true;

    const std::vector<GroupBy> groups = {GroupBy::none, GroupBy::client, GroupBy::job, GroupBy::ost, GroupBy::server};
    const std::vector<std::uint32_t> intervals = {5, 10, 20};
    auto interval = [&] { return intervals[pick(0, intervals.size() - 1)]; };
    int k = 0;
    auto name = [&] { return "r" + std::to_string(++k); };
    out.streams.push_back(make_stream(name(), {TargetKind::fs, "fs1"}, {"class:io"}, groups[pick(0, 4)], interval()));
    out.streams.push_back(make_stream(name(), {TargetKind::fs, ""}, {"class:meta", "class:rpc"}, groups[pick(0, 4)], interval()));
    out.streams.push_back(make_stream(name(), {TargetKind::fs, "fs1"}, {"class:lock"},
                                      pick(0, 1) ? GroupBy::server : GroupBy::ost, interval()));
    out.streams.push_back(make_stream(name(), {TargetKind::oss, "oss1"}, {"IO_RD_BW", "IO_WR_BW"},
                                      pick(0, 1) ? GroupBy::client : GroupBy::job, interval()));
    out.streams.push_back(make_stream(name(), {TargetKind::clnt, "c0n1"}, {"class:io", "class:load"}, GroupBy::none, interval()));
    auto counted = make_stream(name(), {TargetKind::mds, "mds1"}, {"MDS_TOP_OPS", "MDS_TOP_PATHS", "MDS_TOP_CLIENTS"});
    counted.aggregation = Aggregation::counted_key;
    counted.interval_secs = interval();
    out.streams.push_back(counted);
    auto hist = make_stream(name(), {TargetKind::fs, "fs1"}, {"IO_RD_BW"});
    hist.aggregation = Aggregation::histogram;
    hist.edges = {0, 1e6, 1e8, 1e9};
    out.streams.push_back(hist);
    if (routers)
        out.streams.push_back(make_stream(name(), {TargetKind::clnt, "rtr1"}, {"class:rpc", "class:load"}));
    return out;
}

}  // namespace melt::testing
