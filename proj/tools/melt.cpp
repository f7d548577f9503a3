// melt: interactive status and top views of a MELT session.

#include "melt/cli.hpp"

#include <atomic>
#include <csignal>
#include <iostream>
#include <unistd.h>

namespace {

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

}  // namespace

int main(int argc, char** argv)
{
    using namespace melt;
    std::vector<std::string> args(argv + 1, argv + argc);
    if (args.empty() || args[0] == "-h" || args[0] == "--help") {
        std::cout << cli::usage();
        return args.empty() ? cli::kExitUsage : cli::kExitOk;
    }
    cli::CliInvocation inv;
    std::unique_ptr<cli::MeltClient> client;
    try {
        inv = cli::parse_cli(args);
        const std::string name = "melt" + std::to_string(::getpid());
        char host[256] = "localhost";
        ::gethostname(host, sizeof host - 1);
        client = std::make_unique<cli::MeltClient>(inv, std::cout, std::cerr, name, host, ::getpid());
    } catch (const UsageError& e) {
        std::cerr << "melt: " << e.what() << "\n";
        return cli::kExitUsage;
    }
    if (inv.connect.empty()) inv.connect = "127.0.0.1:7070";
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    try {
        transport::MessageChannel ch(transport::tcp_connect(inv.connect));
        session::run_over_channel(ch, *client, g_interrupted);
    } catch (const Error& e) {
        std::cerr << "melt: " << e.what() << "\n";
        return cli::kExitSession;
    }
    if (!client->finished()) {
        std::cerr << "melt: session root closed the connection\n";
        return cli::kExitSession;
    }
    return client->exit_code();
}
