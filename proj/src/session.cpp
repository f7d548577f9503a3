#include "melt/session.hpp"

#include <chrono>
#include <ctime>

namespace melt::session {

wire::Attach session_attach(const std::string& name)
{
    return wire::Attach{name, "", "session-client", ""};
}

SimClient::SimClient(overlay::Overlay& overlay, ClientLogic& logic, const std::string& name)
    : overlay_(overlay), logic_(logic)
{
    id_ = overlay_.attach_client(name, this);
    connected_ = true;
}

SimClient::~SimClient()
{
    if (connected_) overlay_.detach_client(id_);
}

void SimClient::start()
{
    logic_.start(*this, overlay_.now());
}

void SimClient::tick(std::int64_t now)
{
    if (connected_ && !logic_.finished()) logic_.on_tick(now);
}

void SimClient::disconnect()
{
    if (!connected_) return;
    connected_ = false;
    overlay_.detach_client(id_);
}

void SimClient::deliver(const wire::Message& msg)
{
    if (connected_) logic_.on_message(msg, overlay_.now());
}

void SimClient::send(const wire::Message& msg)
{
    if (!connected_) return;
    overlay_.client_send(id_, msg);
    if (std::holds_alternative<wire::Detach>(msg)) connected_ = false;
}

namespace {

class ChannelSender : public Sender {
public:
    explicit ChannelSender(transport::MessageChannel& ch) : ch_(ch) {}
    void send(const wire::Message& msg) override { ch_.send(msg); }

private:
    transport::MessageChannel& ch_;
};

}  // namespace

void run_over_channel(transport::MessageChannel& channel, ClientLogic& logic, const std::atomic<bool>& interrupted)
{
    ChannelSender out(channel);
    std::optional<std::int64_t> epoch;
    std::int64_t last_tick = 0;
    bool stopping = false;
    auto logical_now = [&epoch] {
        return epoch ? static_cast<std::int64_t>(std::time(nullptr)) - *epoch : 0;
    };
    logic.start(out, 0);
    while (!logic.finished()) {
        if (interrupted.load() && !stopping) {
            stopping = true;
            logic.stop();
            continue;
        }
        std::optional<wire::Message> msg;
        try {
            msg = channel.receive(std::chrono::milliseconds(100));
        } catch (const transport::ChannelClosed&) {
            break;
        }
        if (msg) {
            if (auto* ack = std::get_if<wire::AttachAck>(&*msg); ack && !epoch) {
                epoch = ack->session_epoch;
                last_tick = logical_now();
            }
            logic.on_message(*msg, logical_now());
        }
        if (epoch)
            for (auto now = logical_now(); last_tick < now && !logic.finished();) logic.on_tick(++last_tick);
    }
    channel.close();
}

}  // namespace melt::session
