#include "support.hpp"

#include <gtest/gtest.h>

using namespace melt;
using melt::testing::make_stream;
using melt::testing::scenario_from;
using melt::testing::StreamClient;
using melt::testing::topology_text;

namespace {

const std::string kDir = MELT_SCENARIO_DIR;

metrics::StreamAggregate body(const wire::Data& d) { return metrics::decode_body(d.aggregate_body); }

std::vector<wire::Data> records_of(const sim::Transcript& t, std::uint64_t id)
{
    std::vector<wire::Data> out;
    for (const auto& r : t.records)
        if (r.data.stream_id == id) out.push_back(r.data);
    return out;
}

}  // namespace

TEST(Topology, TestbedShape)
{
    auto topo = overlay::load_topology(kDir + "/testbed.topo");
    EXPECT_EQ(topo.domains.size(), 6u);
    EXPECT_EQ(topo.root_node, "skein");
    auto plan = overlay::plan_overlay(topo);
    EXPECT_EQ(plan.depth("euler"), 3);
    EXPECT_EQ(plan.depth("tait"), 2);
    EXPECT_EQ(plan.leaf_of_node.size(), 66u);
    EXPECT_EQ(topo.filesystems(), std::vector<std::string>{"knot2"});
    EXPECT_EQ(topo.mds_of_fs("knot2"), "mds1");
}

TEST(Topology, SmallestPlan)
{
    auto topo = overlay::parse_topology(topology_text({1}, 2, 0, 0));
    auto plan = overlay::plan_overlay(topo);
    const auto& mgr = plan.procs[static_cast<std::size_t>(plan.manager_of_domain.at("c0"))];
    ASSERT_EQ(mgr.children.size(), 1u);
    EXPECT_EQ(plan.procs[static_cast<std::size_t>(mgr.children[0])].role, overlay::ProcessRole::agent_leaf);
    EXPECT_EQ(plan.depth("c0"), 1);
    EXPECT_EQ(plan.internal_count("c0"), 0u);
}

TEST(Topology, FanoutBoundsChildren)
{
    for (std::size_t n : {5, 17, 64, 100}) {
        auto plan = overlay::plan_overlay(overlay::parse_topology(topology_text({n}, 4, 0, 0)));
        for (const auto& p : plan.procs) EXPECT_LE(p.children.size(), 4u) << p.id;
        EXPECT_EQ(plan.leaf_of_node.size(), n);
    }
}

TEST(Topology, Invalid)
{
    auto text = topology_text({2, 2}, 2, 0, 0);
    auto broken = text;
    broken.replace(broken.find("order=c0,c1"), 11, "order=c0");
    EXPECT_THROW(overlay::parse_topology(broken), ConfigError);
    broken = text;
    broken.replace(broken.find("members=c1n1,c1n2"), 17, "members=c0n1,c1n2");
    EXPECT_THROW(overlay::parse_topology(broken), ConfigError);
    broken = text;
    broken.replace(broken.find("fanout=2"), 8, "fanout=1");
    EXPECT_THROW(overlay::parse_topology(broken), ConfigError);
}

TEST(Topology, FormatRoundTrip)
{
    auto topo = overlay::load_topology(kDir + "/testbed.topo");
    EXPECT_EQ(overlay::parse_topology(overlay::format_topology(topo)), topo);
}

TEST(Resolve, RejectsUnattributable)
{
    auto topo = overlay::load_topology(kDir + "/testbed.topo");
    auto s = make_stream("x", {TargetKind::oss, "oss1"}, {"class:meta"});
    try {
        overlay::resolve_stream(s, topo, nullptr);
        FAIL();
    } catch (const overlay::StreamRejected& e) {
        EXPECT_EQ(e.code(), wire::kErrNotAttributable);
    }
    auto u = make_stream("y", {TargetKind::oss, "oss99"}, {"class:io"});
    try {
        overlay::resolve_stream(u, topo, nullptr);
        FAIL();
    } catch (const overlay::StreamRejected& e) {
        EXPECT_EQ(e.code(), wire::kErrUnknownTarget);
    }
    auto bad = make_stream("z", {TargetKind::fs, "knot2"}, {"NO_SUCH"});
    try {
        overlay::resolve_stream(bad, topo, nullptr);
        FAIL();
    } catch (const overlay::StreamRejected& e) {
        EXPECT_EQ(e.code(), wire::kErrUnknownMetric);
    }
}

TEST(Resolve, ProducerSelection)
{
    auto topo = overlay::load_topology(kDir + "/testbed.topo");
    auto s = make_stream("x", {TargetKind::oss, "oss3"}, {"class:io"});
    overlay::resolve_stream(s, topo, nullptr);
    EXPECT_EQ(s.roles, std::vector<LustreRole>{LustreRole::oss});
    EXPECT_EQ(s.node, "oss3");
    EXPECT_TRUE(is_producer(s, LustreRole::oss, "oss3"));
    EXPECT_FALSE(is_producer(s, LustreRole::oss, "oss4"));
    auto plan = overlay::plan_overlay(topo);
    auto counts = overlay::expected_contributors(plan, topo, s);
    EXPECT_EQ(counts[static_cast<std::size_t>(plan.root)], 1u);
}

TEST(Overlay, StreamCreation)
{
    auto spec = scenario_from(topology_text({4}, 2), "", 30);
    sim::ScenarioRunner runner(spec);
    StreamClient c({make_stream("a", {TargetKind::fs, "fs1"}, {"IO_RD_BW"}),
                    make_stream("b", {TargetKind::fs, "fs1"}, {"IO_WR_BW"}),
                    make_stream("a", {TargetKind::fs, "fs1"}, {"IO_RD_BW"}),
                    make_stream("zero", {TargetKind::fs, "fs1"}, {"IO_RD_BW"}, GroupBy::none, 0)},
                   false);
    runner.add_client(c, "c");
    ASSERT_EQ(c.ids.size(), 4u);
    EXPECT_LT(c.ids[0], c.ids[1]);
    EXPECT_EQ(c.ids[2], c.ids[0]);  // same name, same stream
    EXPECT_EQ(c.ids[3], 0u);
    ASSERT_EQ(c.errors.size(), 1u);
    EXPECT_EQ(c.errors[0].code, wire::kErrMalformedSpec);
}

TEST(Overlay, AttachUnknownNode)
{
    auto spec = scenario_from(topology_text({2}, 2), "", 10);
    overlay::Overlay ov(spec.topology);
    EXPECT_THROW(ov.attach_agent("ghost", LustreRole::client, nullptr), Error);
    EXPECT_THROW(ov.attach_agent("c0n1", LustreRole::oss, nullptr), Error);
}

TEST(Overlay, LateAgentReceivesOpenStreams)
{
    auto spec = scenario_from(topology_text({2}, 2), "job 0 60 j1 c0n1,c0n2\nio 0 60 j1 1048576 0 roundrobin\n", 60);
    sim::ScenarioRunner runner(spec);
    runner.detach_agent("c0n2");
    StreamClient c({make_stream("s", {TargetKind::fs, "fs1"}, {"IO_RD_BW"})}, true);
    runner.add_client(c, "c");
    runner.run_until(20);
    EXPECT_EQ(runner.agent("c0n1")->streams().size(), 1u);
}

TEST(Overlay, SingleChildIdentity)
{
    auto spec = scenario_from(topology_text({1}, 2, 1, 0), "job 0 30 j1 c0n1\nio 0 30 j1 1048576 0 roundrobin\n", 30);
    sim::ScenarioRunner runner(spec);
    StreamClient c({make_stream("s", {TargetKind::clnt, "c0n1"}, {"IO_RD_BW"})}, true);
    runner.add_client(c, "c");
    auto& t = runner.run();
    // The one leaf's record reaches the root with an identical body.
    auto recs = records_of(t, c.ids[0]);
    ASSERT_FALSE(recs.empty());
    for (const auto& r : recs) {
        EXPECT_EQ(r.expected_contributors, 1u);
        EXPECT_EQ(r.actual_contributors, 1u);
        EXPECT_EQ(body(r), sim::oracle_aggregate(t, r.stream_id, r.round));
    }
}

TEST(Overlay, JobGroupsMergeAcrossDomains)
{
    auto spec = scenario_from(topology_text({2, 2}, 2), "job 0 30 tait.1113 c0n1,c1n1\nio 0 30 tait.1113 1048576 0 roundrobin\n", 30);
    spec.meltmon = true;  // publishes the job map
    sim::ScenarioRunner runner(spec);
    StreamClient c({make_stream("s", {TargetKind::fs, "fs1"}, {"IO_RD_BW"}, GroupBy::job)}, true);
    runner.add_client(c, "c");
    auto& t = runner.run();
    auto recs = records_of(t, c.ids[0]);
    ASSERT_FALSE(recs.empty());
    const auto& g = std::get<metrics::GroupedAgg>(body(recs.back()).at("IO_RD_BW"));
    // The idle nodes report zero under the reserved key.
    ASSERT_EQ(g.groups.size(), 2u);
    EXPECT_EQ(g.groups.at("tait.1113").count, 2u);
    EXPECT_EQ(g.groups.at("unassigned").count, 2u);
    EXPECT_EQ(g.groups.at("unassigned").sum, 0);
    EXPECT_NEAR(g.groups.at("tait.1113").sum, 2 * 1048576.0, 1);
}

TEST(Overlay, DetachedAgentLowersActualByOne)
{
    auto spec = scenario_from(topology_text({6}, 2), "", 60);
    spec.faults.push_back({25, sim::Fault::Kind::detach_agent, "c0n3"});
    sim::ScenarioRunner runner(spec);
    StreamClient c({make_stream("s", {TargetKind::fs, "fs1"}, {"IO_RD_BW"})}, true);
    runner.add_client(c, "c");
    auto& t = runner.run();
    for (const auto& r : records_of(t, c.ids[0])) {
        EXPECT_EQ(r.expected_contributors, 6u);
        EXPECT_EQ(r.actual_contributors, r.round * 10 <= 25 ? 6u : 5u) << r.round;
        EXPECT_EQ(body(r), sim::oracle_aggregate(t, r.stream_id, r.round));
    }
}

TEST(Overlay, BrokenRingGivesPartialRecord)
{
    auto spec = scenario_from(topology_text({3, 3}, 2, 0, 0), "", 40);
    spec.faults.push_back({15, sim::Fault::Kind::drop_ring_link, "c0"});
    sim::ScenarioRunner runner(spec);
    StreamClient c({make_stream("s", {TargetKind::fs, "fs1"}, {"IO_RD_BW"})}, true);
    runner.add_client(c, "c");
    auto& t = runner.run();
    auto recs = records_of(t, c.ids[0]);
    ASSERT_GE(recs.size(), 3u);
    EXPECT_EQ(recs.front().actual_contributors, 6u);
    EXPECT_LT(recs.back().actual_contributors, recs.back().expected_contributors);
}

TEST(Overlay, ScopedSetRate)
{
    auto spec = scenario_from(topology_text({2}, 2, 2, 1), "", 30);
    sim::ScenarioRunner runner(spec);
    StreamClient c({make_stream("s", {TargetKind::fs, "fs1"}, {"class:rpc"})}, false);
    runner.add_client(c, "c");
    c.send(wire::SetRate{c.ids[0], {"RPC_REQ_RATE"}, 2, wire::Scope{wire::Scope::Kind::domain, "os"}});
    runner.step();
    EXPECT_EQ(runner.agent("oss1")->effective_interval("RPC_REQ_RATE"), 2u);
    EXPECT_EQ(runner.agent("oss2")->effective_interval("RPC_REQ_RATE"), 2u);
    EXPECT_NE(runner.agent("c0n1")->effective_interval("RPC_REQ_RATE"), 2u);
    c.send(wire::SetRate{c.ids[0], {"RPC_REQ_RATE"}, 0, wire::Scope{wire::Scope::Kind::domain, "os"}});
    runner.step();
    EXPECT_NE(runner.agent("oss1")->effective_interval("RPC_REQ_RATE"), 2u);
}

TEST(Overlay, MulticastWithoutAgents)
{
    auto spec = scenario_from(topology_text({2}, 2, 0, 0), "", 10);
    overlay::Overlay ov(spec.topology);
    struct Sink : overlay::Port {
        std::vector<wire::Message> got;
        void deliver(const wire::Message& m) override { got.push_back(m); }
    } sink;
    auto id = ov.attach_client("c", &sink);
    EXPECT_NO_THROW(ov.client_send(id, session::session_attach("c")));
    EXPECT_NO_THROW(ov.client_send(id, wire::SetRate{0, {"IO_RD_BW"}, 2, {}}));
}

TEST(Overlay, PassThroughLeavesBufferEmpty)
{
    auto spec = scenario_from(topology_text({2}, 2), "", 60);
    sim::ScenarioRunner runner(spec);
    auto s = make_stream("s", {TargetKind::fs, "fs1"}, {"IO_RD_BW"});
    s.buffer_capacity = 4;
    StreamClient c({s}, true);
    runner.add_client(c, "c");
    runner.run();
    EXPECT_TRUE(runner.overlay().stream(c.ids[0])->buffer.empty());
    EXPECT_EQ(c.data.size(), 6u);
}

TEST(Overlay, BufferedRoundsSurviveClientReattach)
{
    auto spec = scenario_from(topology_text({2}, 2), "", 100);
    sim::ScenarioRunner runner(spec);
    auto s = make_stream("persist", {TargetKind::fs, "fs1"}, {"IO_RD_BW"});
    StreamClient first({s}, true);
    auto& conn = runner.add_client(first, "first");
    runner.run_until(25);
    conn.disconnect();
    runner.remove_client(conn);
    runner.run_until(60);
    StreamClient second({s}, true);
    runner.add_client(second, "second");
    runner.run_until(80);
    std::vector<std::uint64_t> rounds;
    for (const auto& d : second.data) rounds.push_back(d.round);
    EXPECT_EQ(rounds, (std::vector<std::uint64_t>{3, 4, 5, 6, 7, 8}));
}

TEST(Overlay, TransientStreamClosesWithCreator)
{
    auto spec = scenario_from(topology_text({2}, 2), "", 60);
    sim::ScenarioRunner runner(spec);
    auto s = make_stream("temp", {TargetKind::fs, "fs1"}, {"IO_RD_BW"});
    s.transient = true;
    StreamClient c({s}, true);
    auto& conn = runner.add_client(c, "c");
    runner.run_until(5);
    EXPECT_EQ(runner.agent("c0n1")->streams().size(), 1u);
    conn.disconnect();
    runner.step();
    EXPECT_TRUE(runner.agent("c0n1")->streams().empty());
}

TEST(Overlay, JobMapUpdateReachesEveryAgent)
{
    auto spec = scenario_from(topology_text({5, 3}, 2), "", 30);
    spec.meltmon = true;
    spec.poll_secs = 5;
    spec.workload = std::make_shared<const sim::Workload>(sim::parse_workload("job 0 30 j1 c0n1,c1n2\n"));
    sim::ScenarioRunner runner(spec);
    runner.run_until(2);
    for (const auto& n : runner.agent_nodes()) EXPECT_EQ(runner.agent(n)->job_epoch(), runner.overlay().job_epoch()) << n;
    EXPECT_EQ(runner.agent("c1n2")->job(), "j1");
    EXPECT_EQ(runner.agent("c1n1")->job(), "unassigned");
    auto acc = sim::message_accounting(runner.transcript());
    for (const auto& [seq, links] : acc.multicasts)
        for (const auto& [edge, n] : links) EXPECT_EQ(n, 1u) << seq << " " << edge.first << "->" << edge.second;
}
