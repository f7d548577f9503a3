#include "support.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace melt;
using namespace melt::agent;
using melt::testing::make_stream;
using melt::testing::topology_text;

namespace {

// Counters and gauges given as functions of time.
class ScriptSource : public MetricSource {
public:
    std::function<void(std::int64_t, SourceSnapshot&)> fill;
    std::set<std::int64_t> fail_at;
    SourceSnapshot snapshot(std::int64_t now) override
    {
        if (fail_at.count(now)) throw SourceError("source unavailable");
        SourceSnapshot s;
        s.ts = now;
        fill(now, s);
        return s;
    }
};

struct Rig {
    overlay::OverlayTopology topo = overlay::parse_topology(topology_text({2}, 2, 1, 1, 1));
    ScriptSource source;
    std::unique_ptr<Agent> agent;
    std::uint64_t next_id = 1;

    explicit Rig(const std::string& node, std::map<metrics::MetricClass, std::uint32_t> intervals = {})
    {
        auto cfg = agent_config_for(topo, node);
        cfg.default_intervals = std::move(intervals);
        agent = std::make_unique<Agent>(cfg, source);
    }

    std::uint64_t add(StreamSpec s, std::int64_t now = 0)
    {
        overlay::resolve_stream(s, topo, nullptr);
        s.id = next_id++;
        agent->on_message(wire::CreateStream{s}, now);
        return s.id;
    }

    std::vector<StreamSample> run(std::int64_t from, std::int64_t to, std::vector<wire::Data>* records = nullptr)
    {
        std::vector<StreamSample> out;
        for (auto t = from; t <= to; ++t) {
            auto r = agent->tick(t);
            out.insert(out.end(), r.samples.begin(), r.samples.end());
            if (records) records->insert(records->end(), r.records.begin(), r.records.end());
        }
        return out;
    }
};

std::vector<double> values_of(const std::vector<StreamSample>& s, const std::string& metric)
{
    std::vector<double> out;
    for (const auto& x : s)
        if (x.sample.metric == metric) out.push_back(x.sample.value);
    return out;
}

}  // namespace

TEST(Agent, SteadyWriteRate)
{
    Rig rig("c0n1", {{metrics::MetricClass::io, 1}});
    rig.source.fill = [](std::int64_t t, SourceSnapshot& s) {
        s.counters[{"IO_WR_BYTES", "fs1", "fs1-OST0000"}] = 1048576.0 * static_cast<double>(t);
    };
    rig.add(make_stream("w", {TargetKind::fs, "fs1"}, {"IO_WR_BW"}, GroupBy::none, 2));
    auto v = values_of(rig.run(0, 20), "IO_WR_BW");
    ASSERT_EQ(v.size(), 10u);
    for (double x : v) EXPECT_DOUBLE_EQ(x, 1048576);
}

TEST(Agent, MetricNotDueIsNotSampled)
{
    Rig rig("c0n1");
    int calls = 0;
    rig.source.fill = [&](std::int64_t, SourceSnapshot&) { ++calls; };
    rig.add(make_stream("w", {TargetKind::fs, "fs1"}, {"IO_WR_BW"}));
    rig.agent->tick(3);
    EXPECT_EQ(rig.agent->effective_interval("IO_WR_BW"), 10u);
    EXPECT_EQ(calls, 0);
}

TEST(Agent, CounterResetSuppressesOnlyThatMetric)
{
    Rig rig("c0n1", {{metrics::MetricClass::io, 1}});
    rig.source.fill = [](std::int64_t t, SourceSnapshot& s) {
        double rd = t < 15 ? 1000.0 * static_cast<double>(t) : 1000.0 * static_cast<double>(t - 15);
        s.counters[{"IO_RD_BYTES", "fs1", "fs1-OST0000"}] = rd;
        s.counters[{"IO_WR_BYTES", "fs1", "fs1-OST0000"}] = 500.0 * static_cast<double>(t);
    };
    rig.add(make_stream("w", {TargetKind::fs, "fs1"}, {"IO_RD_BW", "IO_WR_BW"}));
    auto s = rig.run(0, 30);
    EXPECT_EQ(values_of(s, "IO_RD_BW").size(), 2u);  // rounds 1 and 3; round 2 saw the reset
    EXPECT_EQ(values_of(s, "IO_WR_BW").size(), 3u);
    EXPECT_EQ(rig.agent->health().counter_resets, 1u);
}

TEST(Agent, SourceFailureSkipsTick)
{
    Rig rig("c0n1", {{metrics::MetricClass::io, 1}});
    rig.source.fill = [](std::int64_t t, SourceSnapshot& s) {
        s.counters[{"IO_RD_BYTES", "fs1", "fs1-OST0000"}] = 10.0 * static_cast<double>(t);
    };
    rig.source.fail_at = {4};
    rig.add(make_stream("w", {TargetKind::fs, "fs1"}, {"IO_RD_BW"}));
    auto v = values_of(rig.run(0, 10), "IO_RD_BW");
    EXPECT_EQ(rig.agent->health().source_failures, 1u);
    ASSERT_EQ(v.size(), 1u);
    EXPECT_DOUBLE_EQ(v[0], 10);
}

TEST(Agent, LoadGauges)
{
    Rig rig("c0n1", {{metrics::MetricClass::load, 1}});
    rig.source.fill = [](std::int64_t t, SourceSnapshot& s) {
        s.gauges["LOAD_CPU_PCT"] = t < 10 ? 37.5 : 180;
        s.gauges["LOAD_MEM_PCT"] = 40;
    };
    rig.add(make_stream("l", {TargetKind::clnt, "c0n1"}, {"class:load"}, GroupBy::none, 5));
    auto s = rig.run(0, 10);
    EXPECT_EQ(values_of(s, "LOAD_CPU_PCT"), std::vector<double>{37.5});
    EXPECT_EQ(values_of(s, "LOAD_MEM_PCT"), (std::vector<double>{40, 40}));
    EXPECT_EQ(rig.agent->health().invalid_gauges, 1u);
}

TEST(Agent, RouterReportsLoad)
{
    Rig rig("rtr1", {{metrics::MetricClass::load, 1}});
    rig.source.fill = [](std::int64_t, SourceSnapshot& s) { s.gauges["LOAD_CPU_PCT"] = 20; };
    rig.add(make_stream("l", {TargetKind::clnt, "rtr1"}, {"class:load", "class:rpc"}, GroupBy::none, 5));
    auto s = rig.run(0, 5);
    EXPECT_EQ(values_of(s, "LOAD_CPU_PCT"), std::vector<double>{20});
    const auto allowed = metrics::catalog_for_role(LustreRole::router);
    for (const auto& x : s)
        EXPECT_TRUE(std::any_of(allowed.begin(), allowed.end(), [&](const auto& d) { return d.name == x.sample.metric; }));
}

TEST(Agent, RouterOnIoStreamProducesOnlyItsOwnClasses)
{
    Rig rig("rtr1", {{metrics::MetricClass::rpc, 1}});
    rig.source.fill = [](std::int64_t t, SourceSnapshot& s) {
        s.counters[{"RPC_REQS", "fs1", ""}] = 7.0 * static_cast<double>(t);
    };
    // The router holds the filesystem stream but has no io of its own to add.
    rig.add(make_stream("all", {TargetKind::fs, ""}, {"class:io", "class:rpc"}));
    EXPECT_EQ(rig.agent->streams().size(), 1u);
    EXPECT_TRUE(rig.run(0, 10).empty());
    // Its forwarded RPCs are reported on a stream aimed at the router itself.
    rig.add(make_stream("rtr", {TargetKind::clnt, "rtr1"}, {"class:io", "class:rpc"}), 10);
    auto s = rig.run(11, 20);
    ASSERT_FALSE(s.empty());
    for (const auto& x : s) EXPECT_EQ(metrics::metric(x.sample.metric).cls, metrics::MetricClass::rpc);
}

TEST(Agent, JobTagging)
{
    Rig rig("c0n1", {{metrics::MetricClass::io, 1}});
    rig.source.fill = [](std::int64_t t, SourceSnapshot& s) {
        s.counters[{"IO_RD_BYTES", "fs1", "fs1-OST0000"}] = static_cast<double>(t);
    };
    rig.add(make_stream("j", {TargetKind::fs, "fs1"}, {"IO_RD_BW"}, GroupBy::job));
    auto first = rig.run(0, 10);
    ASSERT_EQ(first.size(), 1u);
    EXPECT_EQ(first[0].sample.job_id, "unassigned");
    EXPECT_EQ(first[0].sample.group_key, "unassigned");
    rig.agent->on_message(wire::JobMapUpdate{7, {{"tait.1234", {"c0n1", "c0n2"}}}}, 11);
    auto second = rig.run(11, 20);
    ASSERT_EQ(second.size(), 1u);
    EXPECT_EQ(second[0].sample.job_id, "tait.1234");
    rig.agent->on_message(wire::JobMapUpdate{5, {{"old.1", {"c0n1"}}}}, 21);
    EXPECT_EQ(rig.agent->job(), "tait.1234");
    EXPECT_EQ(rig.agent->job_epoch(), 7u);
}

TEST(Agent, OverridesFollowStreamLifetime)
{
    Rig rig("c0n1");
    auto id = rig.add(make_stream("w", {TargetKind::fs, "fs1"}, {"IO_RD_BW"}));
    rig.agent->on_message(wire::SetRate{id, {"IO_RD_BW"}, 2, {}}, 1);
    rig.agent->on_message(wire::SetRate{99, {"IO_RD_BW"}, 5, {}}, 1);
    EXPECT_EQ(rig.agent->effective_interval("IO_RD_BW"), 2u);
    auto closed = make_stream("w", {TargetKind::fs, "fs1"}, {"IO_RD_BW"});
    closed.id = id;
    closed.closed = true;
    rig.agent->on_message(wire::CreateStream{closed}, 2);
    EXPECT_EQ(rig.agent->effective_interval("IO_RD_BW"), 5u);
    rig.agent->on_message(wire::SetRate{99, {"IO_RD_BW"}, 0, {}}, 3);
    EXPECT_EQ(rig.agent->effective_interval("IO_RD_BW"), 10u);
    // Longer than the default never lowers resolution.
    rig.agent->on_message(wire::SetRate{98, {"IO_RD_BW"}, 60, {}}, 3);
    EXPECT_EQ(rig.agent->effective_interval("IO_RD_BW"), 10u);
}

TEST(Agent, BadDefaultInterval)
{
    overlay::OverlayTopology topo = overlay::parse_topology(topology_text({1}, 2));
    ScriptSource src;
    auto cfg = agent_config_for(topo, "c0n1");
    cfg.default_intervals[metrics::MetricClass::io] = 0;
    EXPECT_THROW(Agent(cfg, src), ConfigError);
    EXPECT_THROW(agent_config_for(topo, "ghost"), ConfigError);
}

TEST(Agent, DeterministicSampleStream)
{
    auto topo = std::make_shared<const overlay::OverlayTopology>(overlay::parse_topology(topology_text({4}, 2)));
    auto wl = std::make_shared<const sim::Workload>(
        sim::parse_workload("job 0 60 j1 c0n1,c0n2\nio 0 60 j1 1048576 524288 roundrobin\nmeta 0 60 j1 10 open:1\n"));
    auto once = [&] {
        sim::SyntheticSource src(wl, topo, "c0n1", {7, 0.05});
        Agent a(agent_config_for(*topo, "c0n1"), src);
        auto s = make_stream("x", {TargetKind::fs, "fs1"}, {"class:io", "class:meta"}, GroupBy::job);
        overlay::resolve_stream(s, *topo, nullptr);
        s.id = 1;
        a.on_message(wire::CreateStream{s}, 0);
        std::string out;
        for (std::int64_t t = 0; t <= 60; ++t)
            for (const auto& r : a.tick(t).records) out += r.aggregate_body;
        return out;
    };
    auto a = once();
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, once());
}

TEST(Stats, Grammar)
{
    auto s = parse_stats("ts 100\nIO_RD_BYTES knot2 1048576\nIO_WR_BYTES knot2:knot2-OST0003 5\ngauge LOAD_CPU_PCT 37.5\n"
                         "event mkdir /proj/a c07\nevent open /proj/b\n");
    EXPECT_EQ(s.ts, 100);
    EXPECT_EQ((s.counters.at({"IO_RD_BYTES", "knot2", ""})), 1048576);
    EXPECT_EQ((s.counters.at({"IO_WR_BYTES", "knot2", "knot2-OST0003"})), 5);
    EXPECT_EQ(s.gauges.at("LOAD_CPU_PCT"), 37.5);
    ASSERT_EQ(s.events.size(), 2u);
    EXPECT_EQ(s.events[0], (MetaEvent{"mkdir", "/proj/a", "c07"}));
    EXPECT_EQ(s.events[1].client, "");
    EXPECT_EQ(parse_stats(format_stats(s)), s);
}

TEST(Stats, ErrorsNameTheLine)
{
    try {
        parse_stats("ts 1\nIO_RD_BYTES knot2 1\nIO_RD_BYTES knot2 2\n");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
    }
    EXPECT_THROW(parse_stats("IO_RD_BYTES knot2 1\n"), ConfigError);
    EXPECT_THROW(parse_stats("ts 1\nBOGUS knot2 1\n"), ConfigError);
    EXPECT_THROW(parse_stats("ts 1\nIO_RD_BYTES knot2 -4\n"), ConfigError);
}

TEST(Stats, FileSourceReportsEventsOnce)
{
    auto path = std::filesystem::temp_directory_path() / ("melt-stats-" + std::to_string(::getpid()));
    std::ofstream(path) << "ts 5\nIO_RD_BYTES knot2 10\nevent open /a\n";
    StatsFileSource src(path.string());
    EXPECT_EQ(src.snapshot(1).events.size(), 1u);
    EXPECT_EQ(src.snapshot(2).events.size(), 0u);
    std::ofstream(path) << "ts 6\nIO_RD_BYTES knot2 20\nevent open /a\n";
    EXPECT_EQ(src.snapshot(3).events.size(), 1u);
    std::ofstream(path) << "ts 7\ngarbage\n";
    EXPECT_THROW(src.snapshot(4), Error);
    std::filesystem::remove(path);
}
