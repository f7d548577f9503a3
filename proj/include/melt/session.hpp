#pragma once

// Session clients (meltmon, melt) are written as message-in, message-out
// state machines. The same logic runs against the in-process overlay in the
// simulator and over a framed TCP connection to a live session root.

#include "melt/overlay.hpp"
#include "melt/transport.hpp"
#include "melt/wire.hpp"

#include <atomic>
#include <cstdint>
#include <string>

namespace melt::session {

class Sender {
public:
    virtual ~Sender() = default;
    virtual void send(const wire::Message& msg) = 0;
};

class ClientLogic {
public:
    virtual ~ClientLogic() = default;
    /// Called once; the client sends its Attach here.
    virtual void start(Sender& out, std::int64_t now) = 0;
    virtual void on_message(const wire::Message& msg, std::int64_t now) = 0;
    /// Called once per logical second.
    virtual void on_tick(std::int64_t now) = 0;
    /// Clean shutdown: withdraw what the client set up, then Detach.
    virtual void stop() = 0;
    virtual bool finished() const = 0;
};

wire::Attach session_attach(const std::string& name);

/// Connects a client to an in-process overlay.
class SimClient : public overlay::Port, public Sender {
public:
    SimClient(overlay::Overlay& overlay, ClientLogic& logic, const std::string& name);
    ~SimClient() override;

    void start();
    void tick(std::int64_t now);
    /// Stops the logic if it is still running and drops the connection, the
    /// way a killed process would.
    void disconnect();
    bool connected() const { return connected_; }

    void deliver(const wire::Message& msg) override;
    void send(const wire::Message& msg) override;

private:
    overlay::Overlay& overlay_;
    ClientLogic& logic_;
    overlay::Overlay::ClientId id_ = 0;
    bool connected_ = false;
};

/// Runs a client over a message channel until it finishes, the peer closes,
/// or `interrupted` is set (which triggers a clean stop). Logical time is
/// wall-clock seconds since the session epoch from AttachAck.
void run_over_channel(transport::MessageChannel& channel, ClientLogic& logic, const std::atomic<bool>& interrupted);

}  // namespace melt::session
