// meltsim: run a scenario on the logical clock, or serve it over TCP.

#include "melt/scenario.hpp"
#include "melt/server.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

int run(const std::string& path, const std::string& transcript_path, const std::string& log_dir)
{
    auto spec = melt::sim::load_scenario(path);
    auto t = melt::sim::run_scenario(spec);
    if (!transcript_path.empty()) {
        std::ofstream out(transcript_path, std::ios::binary);
        if (!out) throw melt::Error("cannot write transcript '" + transcript_path + "'");
        out << t.text();
    }
    if (!log_dir.empty()) {
        melt::meltmon::DirectoryLogSink sink(log_dir);
        for (const auto& [file, lines] : t.logs)
            for (const auto& l : lines) sink.write(file, l);
    }
    std::cout << "duration " << spec.duration << " s, " << spec.topology.all_members().size() << " agents, "
              << t.streams.size() << " streams\n"
              << t.samples.size() << " samples, " << t.frames.size() << " frames, " << t.records.size()
              << " root records\n"
              << "transcript " << t.lines.size() << " lines, digest " << melt::hex64(t.digest()) << "\n";
    return 0;
}

int serve(const std::string& path, const std::string& listen, std::int64_t duration)
{
    auto spec = melt::sim::load_scenario(path);
    spec.start = static_cast<std::int64_t>(std::time(nullptr));
    melt::sim::ScenarioRunner runner(spec, true);
    melt::sim::RootServer server(runner, listen);
    std::cout << "serving session root on port " << server.port() << std::endl;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    while (!g_stop && (duration <= 0 || runner.now() < duration)) {
        const auto next = spec.start + runner.now() + 1;
        while (!g_stop && std::time(nullptr) < next) server.serve_for(std::chrono::milliseconds(50));
        runner.step();
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Deterministic MELT simulator"};
    app.require_subcommand(1);
    std::string scenario, transcript, logs, listen = "127.0.0.1:7070";
    std::int64_t duration = 0;

    auto* run_cmd = app.add_subcommand("run", "Run a scenario and report its transcript");
    run_cmd->add_option("scenario", scenario, "Scenario file")->required()->check(CLI::ExistingFile);
    run_cmd->add_option("--transcript", transcript, "Write the transcript to this file");
    run_cmd->add_option("--logs", logs, "Write meltmon logs into this directory");

    auto* serve_cmd = app.add_subcommand("serve", "Serve the scenario's session root over TCP in real time");
    serve_cmd->add_option("scenario", scenario, "Scenario file")->required()->check(CLI::ExistingFile);
    serve_cmd->add_option("--listen", listen, "host:port to listen on (port 0 picks one)");
    serve_cmd->add_option("--duration", duration, "Stop after this many seconds (0 = until interrupted)");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*run_cmd) return run(scenario, transcript, logs);
        return serve(scenario, listen, duration);
    } catch (const melt::Error& e) {
        std::cerr << "meltsim: " << e.what() << "\n";
        return 1;
    }
}
