// meltmon: persistent daemon that keeps the default summary streams and
// writes the performance logs.

#include "melt/meltmon.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <iostream>
#include <thread>
#include <unistd.h>

namespace {

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

std::uint32_t poll_secs(const std::string& text)
{
    std::string_view v = text;
    std::uint64_t mult = 1;
    if (!v.empty() && (v.back() == 's' || v.back() == 'm' || v.back() == 'h')) {
        mult = v.back() == 's' ? 1 : v.back() == 'm' ? 60 : 3600;
        v.remove_suffix(1);
    }
    auto n = melt::parse_u64(v);
    if (!n || *n == 0) throw melt::UsageError("bad --poll value '" + text + "'");
    return static_cast<std::uint32_t>(*n * mult);
}

}  // namespace

int main(int argc, char** argv)
{
    using namespace melt;
    CLI::App app{"MELT monitoring daemon"};
    std::string connect, config, jobmap, log_dir, poll = "60s";
    app.add_option("--connect", connect, "Session root endpoint host:port")->required();
    app.add_option("--config", config, "Topology file")->required()->check(CLI::ExistingFile);
    app.add_option("--jobmap", jobmap, "file:<path> or cmd:<command>")->required();
    app.add_option("--log-dir", log_dir, "Directory for melt-<name>.log files")->required();
    app.add_option("--poll", poll, "Job-map poll interval");
    CLI11_PARSE(app, argc, argv);

    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    try {
        // Scenario files carry a [scenario] section the daemon does not need.
        auto topo = overlay::topology_from_sections(overlay::parse_sections(overlay::read_file(config)), {"scenario"});
        overlay::validate(topo);
        auto jobs = meltmon::make_job_adapter(jobmap);
        meltmon::DirectoryLogSink sink(log_dir);
        meltmon::Options opts;
        char host[256] = "localhost";
        ::gethostname(host, sizeof host - 1);
        opts.host = host;
        opts.pid = ::getpid();
        opts.poll_secs = poll_secs(poll);

        std::unique_ptr<transport::Channel> ch;
        for (int attempt = 0, delay_ms = 250;; ++attempt, delay_ms = std::min(delay_ms * 2, 8000)) {
            try {
                ch = transport::tcp_connect(connect);
                break;
            } catch (const transport::ConnectError& e) {
                if (attempt >= 8 || g_interrupted) throw;
                std::cerr << "meltmon: " << e.what() << "; retrying in " << delay_ms << " ms\n";
                std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
            }
        }
        meltmon::Meltmon daemon(topo, *jobs, sink, opts);
        transport::MessageChannel mc(std::move(ch));
        session::run_over_channel(mc, daemon, g_interrupted);
        if (daemon.failed()) {
            std::cerr << "meltmon: " << daemon.error() << "\n";
            return 1;
        }
        if (!daemon.finished()) {
            std::cerr << "meltmon: session root closed the connection\n";
            return 2;
        }
    } catch (const UsageError& e) {
        std::cerr << "meltmon: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << "meltmon: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
