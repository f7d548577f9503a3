#include "support.hpp"

#include "melt/cli.hpp"
#include "melt/server.hpp"

#include <gtest/gtest.h>

#include <thread>

using namespace melt;
using namespace melt::sim;

namespace {

const std::string kDir = MELT_SCENARIO_DIR;

std::string scenario_error(const std::string& extra)
{
    try {
        melt::testing::scenario_from(melt::testing::topology_text({2}, 2, 1, 1, 0), "", 60, extra);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(Scenario, Keys)
{
    auto spec = melt::testing::scenario_from(melt::testing::topology_text({2}, 2, 1, 1, 0), "", 60,
                                       "seed=9\nnoise=0.1\npoll=30s\npid=77\nfault=20 detach-agent c0n1\n");
    EXPECT_EQ(spec.seed, 9u);
    EXPECT_EQ(spec.poll_secs, 30u);
    EXPECT_EQ(spec.pid, 77);
    EXPECT_EQ(spec.start, 1516015320);
    ASSERT_EQ(spec.faults.size(), 1u);
    EXPECT_EQ(spec.faults[0].kind, Fault::Kind::detach_agent);
}

TEST(Scenario, Rejections)
{
    EXPECT_NE(scenario_error("noise=1\n").find("noise"), std::string::npos);
    EXPECT_NE(scenario_error("bogus=1\n").find("bogus"), std::string::npos);
    EXPECT_NE(scenario_error("seed=1\nseed=2\n").find("duplicate"), std::string::npos);
    EXPECT_NE(scenario_error("fault=90 detach-agent c0n1\n").find("outside"), std::string::npos);
    EXPECT_NE(scenario_error("fault=10 detach-agent ghost\n").find("ghost"), std::string::npos);
    EXPECT_NE(scenario_error("fault=10 melt c0n1\n").find("melt"), std::string::npos);
    EXPECT_NE(scenario_error("jobmap=ldap\n").find("jobmap"), std::string::npos);
    EXPECT_THROW(parse_scenario("[domain x]\n"), ConfigError);
}

TEST(Scenario, EmptyWorkloadLogsZeros)
{
    auto spec = melt::testing::scenario_from(melt::testing::topology_text({3}, 2, 2, 1, 0), "", 30);
    spec.meltmon = true;
    auto t = run_scenario(spec);
    ASSERT_TRUE(t.logs.count("melt-fs1.log"));
    for (const auto& l : t.logs.at("melt-fs1.log"))
        if (l.find("IO_RD_BW=") != std::string::npos) EXPECT_NE(l.find("IO_RD_BW=0B/s"), std::string::npos) << l;
}

TEST(Scenario, TranscriptDeterministic)
{
    auto spec = load_scenario(kDir + "/joblog.cfg");
    auto a = run_scenario(spec), b = run_scenario(spec);
    EXPECT_EQ(a.text(), b.text());
    EXPECT_EQ(a.digest(), b.digest());
    spec.seed += 1;
    EXPECT_NE(run_scenario(spec).digest(), a.digest());
}

TEST(Scenario, RootMatchesOracleUnderDetach)
{
    auto spec = melt::testing::scenario_from(melt::testing::topology_text({4, 3}, 2, 2, 1, 0),
                                       "job 0 60 a c0n[1-4],c1n1\nio 0 60 a 1M 2M roundrobin\n", 60,
                                       "fault=25 detach-agent c0n2\n");
    ScenarioRunner runner(spec);
    melt::testing::StreamClient client({melt::testing::make_stream("s", {TargetKind::fs, "fs1"}, {"class:io"}, GroupBy::client, 10)});
    runner.add_client(client, "t");
    auto& t = runner.run();
    ASSERT_FALSE(client.data.empty());
    std::size_t partial = 0;
    for (const auto& d : client.data) {
        EXPECT_EQ(metrics::decode_body(d.aggregate_body), oracle_aggregate(t, d.stream_id, d.round)) << d.round;
        if (d.actual_contributors < d.expected_contributors) ++partial;
    }
    EXPECT_GT(partial, 0u);
}

TEST(Scenario, RingCarriesOneFramePerDomain)
{
    auto spec = melt::testing::scenario_from(melt::testing::topology_text({2, 2, 2}, 2, 1, 1, 0), "", 40);
    ScenarioRunner runner(spec);
    melt::testing::StreamClient client({melt::testing::make_stream("s", {TargetKind::fs, "fs1"}, {"class:rpc"})});
    runner.add_client(client, "t");
    auto acc = message_accounting(runner.run());
    ASSERT_FALSE(acc.rounds.empty());
    // three client domains, os and md
    for (const auto& [key, r] : acc.rounds) EXPECT_EQ(r.ring_frames, 5u);
}

TEST(Tcp, MeltOverLoopback)
{
    auto spec = load_scenario(kDir + "/jobstatus.cfg");
    ScenarioRunner runner(spec, true);
    RootServer server(runner, "127.0.0.1:0");
    ASSERT_GT(server.port(), 0);

    std::ostringstream out, err;
    cli::MeltClient melt(cli::parse_cli({"job=tait.1234", "status", "io", "-delay=10s", "-once", "-format=csv"}), out, err,
                         "melt", "skein", 1);
    std::atomic<bool> interrupted{false};
    std::thread client([&] {
        transport::MessageChannel ch(transport::tcp_connect("127.0.0.1:" + std::to_string(server.port())));
        session::run_over_channel(ch, melt, interrupted);
    });
    for (int i = 0; i < 200 && !melt.finished(); ++i) {
        server.serve_for(std::chrono::milliseconds(20));
        runner.step();
    }
    interrupted = true;
    for (int i = 0; i < 20; ++i) server.serve_for(std::chrono::milliseconds(10));
    client.join();
    EXPECT_TRUE(melt.finished());
    EXPECT_EQ(melt.exit_code(), cli::kExitOk);
    ASSERT_EQ(melt.frames().size(), 1u);
    EXPECT_NE(out.str().find("TIME,IO_RD_BW"), std::string::npos) << out.str() << err.str();
}
