// meltagent: one monitoring agent attached to a session root over TCP.

#include "melt/agent.hpp"
#include "melt/transport.hpp"
#include "melt/workload.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <ctime>
#include <iostream>

namespace {

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

}  // namespace

int main(int argc, char** argv)
{
    using namespace melt;
    CLI::App app{"MELT monitoring agent"};
    std::string node, domain, role, source, connect, config, workload;
    app.add_option("--node", node, "Node this agent runs on")->required();
    app.add_option("--domain", domain, "Domain id")->required();
    app.add_option("--role", role, "client, oss, mds, or router")->required();
    app.add_option("--source", source, "synthetic:<seed> or stats:<path>")->required();
    app.add_option("--connect", connect, "Session root endpoint host:port")->required();
    app.add_option("--config", config, "Topology file")->required()->check(CLI::ExistingFile);
    app.add_option("--workload", workload, "Workload script for the synthetic source")->check(CLI::ExistingFile);
    CLI11_PARSE(app, argc, argv);

    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    try {
        auto topo = std::make_shared<const overlay::OverlayTopology>(
            overlay::topology_from_sections(overlay::parse_sections(overlay::read_file(config)), {"scenario"}));
        overlay::validate(*topo);
        auto cfg = agent::agent_config_for(*topo, node);
        if (cfg.domain_id != domain) throw UsageError("node '" + node + "' is in domain '" + cfg.domain_id + "'");
        if (to_string(cfg.role) != role) throw UsageError("node '" + node + "' has role " + std::string(to_string(cfg.role)));

        std::unique_ptr<agent::MetricSource> src;
        if (starts_with(source, "synthetic:")) {
            auto seed = parse_u64(source.substr(10));
            if (!seed) throw UsageError("bad seed in --source '" + source + "'");
            auto w = std::make_shared<const sim::Workload>(workload.empty() ? sim::Workload{} : sim::load_workload(workload));
            src = std::make_unique<sim::SyntheticSource>(w, topo, node, sim::SyntheticOptions{*seed, 0});
        } else if (starts_with(source, "stats:") && source.size() > 6) {
            src = std::make_unique<agent::StatsFileSource>(source.substr(6));
        } else {
            throw UsageError("--source must be synthetic:<seed> or stats:<path>");
        }
        agent::Agent ag(cfg, *src);

        transport::MessageChannel ch(transport::tcp_connect(connect));
        ch.send(wire::Attach{node, domain, "agent", role});
        std::optional<std::int64_t> epoch;
        std::int64_t last = -1;
        while (!g_interrupted) {
            auto msg = ch.receive(std::chrono::milliseconds(100));
            const std::int64_t now = epoch ? static_cast<std::int64_t>(std::time(nullptr)) - *epoch : 0;
            if (msg) {
                if (const auto* ack = std::get_if<wire::AttachAck>(&*msg)) {
                    epoch = ack->session_epoch;
                    last = static_cast<std::int64_t>(std::time(nullptr)) - *epoch - 1;
                } else if (const auto* err = std::get_if<wire::ErrorMsg>(&*msg)) {
                    throw Error("root refused the agent: " + err->text);
                } else {
                    ag.on_message(*msg, now);
                }
            }
            if (!epoch) continue;
            while (last < now) {
                auto res = ag.tick(++last);
                for (const auto& rec : res.records) ch.send(rec);
            }
        }
        ch.send(wire::Detach{node});
        ch.close();
    } catch (const transport::ChannelClosed&) {
        std::cerr << "meltagent: session root closed the connection\n";
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "meltagent: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << "meltagent: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
