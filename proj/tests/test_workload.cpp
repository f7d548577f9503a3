#include "support.hpp"

#include <gtest/gtest.h>

using namespace melt;
using namespace melt::sim;

namespace {

std::string parse_error(std::string_view text)
{
    try {
        parse_workload(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

std::shared_ptr<const overlay::OverlayTopology> small_topo()
{
    return std::make_shared<overlay::OverlayTopology>(overlay::parse_topology(melt::testing::topology_text({4}, 4, 2, 1, 0)));
}

double sum_counter(const agent::SourceSnapshot& s, const std::string& name)
{
    double total = 0;
    for (const auto& [k, v] : s.counters)
        if (k.name == name) total += v;
    return total;
}

}  // namespace

TEST(Workload, ExpandNodes)
{
    EXPECT_EQ(expand_nodes("tait[01-03]"), (std::vector<std::string>{"tait01", "tait02", "tait03"}));
    EXPECT_EQ(expand_nodes("a,b[9-11]"), (std::vector<std::string>{"a", "b9", "b10", "b11"}));
    EXPECT_EQ(expand_nodes("n[8-10]"), (std::vector<std::string>{"n8", "n9", "n10"}));
    EXPECT_THROW(expand_nodes("a,,b"), ConfigError);
    EXPECT_THROW(expand_nodes("x[5-2]"), ConfigError);
    EXPECT_THROW(expand_nodes("x[a-b]"), ConfigError);
}

TEST(Workload, ParsesEveryDirective)
{
    auto w = parse_workload(
        "# comment\n"
        "job 0 60 j.1 c0n[0-1]\n"
        "io 0 60 j.1 1M 0 single:oss0\n"
        "meta 10 20 j.1 40 open:1,close:1\n"
        "paths 10 20 j.1 /a:2,/b:1\n"
        "load c0n0 0 30 50 25\n");
    ASSERT_EQ(w.jobs.size(), 1u);
    EXPECT_EQ(w.jobs[0].nodes, (std::vector<std::string>{"c0n0", "c0n1"}));
    EXPECT_EQ(w.io[0].read_bps, 1048576.0);
    EXPECT_EQ(w.io[0].single_oss, "oss0");
    EXPECT_EQ(w.meta[0].ops.size(), 2u);
    EXPECT_EQ(w.paths[0].paths[0], (std::pair<std::string, double>{"/a", 2.0}));
    EXPECT_EQ(w.load[0].cpu_pct, 50.0);
    EXPECT_EQ(w.io[0].line, 3);
}

TEST(Workload, ErrorsCarryLineNumbers)
{
    EXPECT_NE(parse_error("job 0 60 j c1\nfoo 1 2\n").find("line 2"), std::string::npos);
    EXPECT_NE(parse_error("job 10 10 j c1\n").find("end must be after start"), std::string::npos);
    EXPECT_NE(parse_error("job 0 10 j c1\nio 0 10 k 1 1 roundrobin\n").find("not declared"), std::string::npos);
    EXPECT_NE(parse_error("job 0 10 j c1\nio 0 10 j 1 1 sideways\n").find("sideways"), std::string::npos);
    EXPECT_NE(parse_error("job 0 10 j c1\nmeta 0 10 j 5 rename:1\n").find("rename"), std::string::npos);
    EXPECT_NE(parse_error("job 0 10 j c1\nmeta 0 10 j 5 open:0\n").find("positive"), std::string::npos);
    EXPECT_NE(parse_error("job 0 10 j c1\njob 0 10 j c2\n").find("twice"), std::string::npos);
    EXPECT_NE(parse_error("job 0 10 j c1\nio 0 10 j -5 0 roundrobin\n").find("negative"), std::string::npos);
    EXPECT_NE(parse_error("job -1 10 j c1\n").find("bad time"), std::string::npos);
}

TEST(Workload, ValidationAgainstTopology)
{
    auto topo = small_topo();
    auto w = parse_workload("job 0 30 a c0n[1-2]\njob 10 40 b c0n1\n");
    EXPECT_THROW(validate_workload(w, 60, topo.get()), ConfigError);
    EXPECT_NO_THROW(validate_workload(parse_workload("job 0 10 a c0n1\njob 10 40 b c0n1\n"), 60, topo.get()));
    EXPECT_THROW(validate_workload(parse_workload("job 0 90 a c0n1\n"), 60, nullptr), ConfigError);
    EXPECT_THROW(validate_workload(parse_workload("job 0 10 a oss1\n"), 60, topo.get()), ConfigError);
    EXPECT_THROW(validate_workload(parse_workload("job 0 10 a c0n1\nio 0 10 a 1 1 single:c0n2\n"), 60, topo.get()),
                 ConfigError);
    EXPECT_THROW(validate_workload(parse_workload("load nobody 0 10 1 1\n"), 60, topo.get()), ConfigError);
}

TEST(Workload, JobMapText)
{
    auto w = parse_workload("job 0 30 a c0n[1-2]\njob 10 40 b c0n3\n");
    EXPECT_EQ(job_map_text(w, 5), "a c0n1 c0n2\n");
    EXPECT_EQ(job_map_text(w, 30), "b c0n3\n");
    EXPECT_EQ(job_map_text(w, 40), "");
}

TEST(Synthetic, ByteCountersMatchRates)
{
    auto topo = small_topo();
    auto w = std::make_shared<Workload>(parse_workload("job 0 100 a c0n[1-2]\nio 10 50 a 2M 1M roundrobin\n"));
    SyntheticSource src(w, topo, "c0n1");
    auto s0 = src.snapshot(10);
    auto s1 = src.snapshot(30);
    EXPECT_DOUBLE_EQ(sum_counter(s1, "IO_RD_BYTES") - sum_counter(s0, "IO_RD_BYTES"), 20 * 2097152.0);
    EXPECT_DOUBLE_EQ(sum_counter(s1, "IO_WR_BYTES") - sum_counter(s0, "IO_WR_BYTES"), 20 * 1048576.0);
    auto s2 = src.snapshot(80);
    EXPECT_DOUBLE_EQ(sum_counter(s2, "IO_RD_BYTES"), 40 * 2097152.0);
    // A client outside the job sees nothing.
    SyntheticSource idle(w, topo, "c0n4");
    EXPECT_EQ(sum_counter(idle.snapshot(80), "IO_RD_BYTES"), 0.0);
}

TEST(Synthetic, SingleOssLandsOnOneServer)
{
    auto topo = small_topo();
    auto w = std::make_shared<Workload>(parse_workload("job 0 100 a c0n1\nio 0 100 a 1M 0 single:oss2\n"));
    SyntheticSource src(w, topo, "c0n1");
    auto s = src.snapshot(20);
    for (const auto& [k, v] : s.counters)
        if (k.name == "IO_RD_BYTES" && v > 0) EXPECT_NE(k.target.find("OST0001"), std::string::npos) << k.target;
    EXPECT_DOUBLE_EQ(sum_counter(s, "IO_RD_BYTES"), 20 * 1048576.0);
}

TEST(Synthetic, MetaEventsSplitAcrossClients)
{
    auto topo = small_topo();
    auto w = std::make_shared<Workload>(parse_workload("job 0 100 a c0n[1-2]\nmeta 0 100 a 10 open:1,close:1\n"));
    SyntheticSource src(w, topo, "c0n1");
    auto s = src.snapshot(60);
    EXPECT_NEAR(sum_counter(s, "META_OPEN") + sum_counter(s, "META_CLOSE"), 300.0, 1.0);
}

TEST(Synthetic, DeterministicUnderNoise)
{
    auto topo = small_topo();
    auto w = std::make_shared<Workload>(parse_workload("job 0 100 a c0n[1-2]\nio 0 100 a 2M 1M roundrobin\n"));
    SyntheticOptions o{7, 0.05};
    SyntheticSource a(w, topo, "c0n2", o), b(w, topo, "c0n2", o);
    for (std::int64_t t : {5, 17, 40}) EXPECT_EQ(a.snapshot(t), b.snapshot(t));
    SyntheticSource c(w, topo, "c0n2", {8, 0.05});
    EXPECT_NE(a.snapshot(60), c.snapshot(60));
}

TEST(Synthetic, UnknownNodeRejected)
{
    auto w = std::make_shared<Workload>();
    EXPECT_THROW(SyntheticSource(w, small_topo(), "ghost"), ConfigError);
}
