#pragma once

// Serves a simulated session root over TCP so the real `melt` and `meltmon`
// binaries can attach to it. Agents stay in-process on the logical clock,
// which advances one step per wall-clock second.

#include "melt/scenario.hpp"
#include "melt/transport.hpp"

#include <chrono>
#include <memory>
#include <string>
#include <vector>

namespace melt::sim {

class RootServer {
public:
    RootServer(ScenarioRunner& runner, const std::string& endpoint);
    ~RootServer();

    int port() const { return listener_.port(); }
    std::size_t connections() const { return remotes_.size(); }

    /// Accepts new clients and relays traffic for up to `budget`.
    void serve_for(std::chrono::milliseconds budget);

private:
    struct Remote;
    void drop(Remote& r);
    /// First message decides whether the peer is an agent or a session client.
    bool greet(Remote& r, const wire::Message& first);

    ScenarioRunner& runner_;
    transport::TcpListener listener_;
    std::vector<std::unique_ptr<Remote>> remotes_;
    std::uint64_t seq_ = 0;
};

}  // namespace melt::sim
