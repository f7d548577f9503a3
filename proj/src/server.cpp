#include "melt/server.hpp"

#include <algorithm>

namespace melt::sim {

struct RootServer::Remote : overlay::Port {
    explicit Remote(std::unique_ptr<transport::Channel> ch) : channel(std::move(ch)) {}
    void deliver(const wire::Message& msg) override
    {
        if (closed) return;
        try {
            channel.send(msg);
        } catch (const Error&) {
            closed = true;
        }
    }

    transport::MessageChannel channel;
    overlay::Overlay::ClientId id = 0;
    std::string agent_node;  // set once a remote agent has attached
    bool closed = false;
};

RootServer::RootServer(ScenarioRunner& runner, const std::string& endpoint) : runner_(runner), listener_(endpoint) {}

RootServer::~RootServer()
{
    for (auto& r : remotes_) drop(*r);
}

void RootServer::drop(Remote& r)
{
    if (r.id) runner_.overlay().detach_client(r.id);
    if (!r.agent_node.empty()) runner_.overlay().detach_agent(r.agent_node);
    r.agent_node.clear();
    r.id = 0;
    r.closed = true;
    r.channel.close();
}

bool RootServer::greet(Remote& r, const wire::Message& first)
{
    const auto* a = std::get_if<wire::Attach>(&first);
    if (a && a->process_role == "agent") {
        auto role = parse_lustre_role(a->lustre_role);
        try {
            if (!role) throw Error("bad lustre role '" + a->lustre_role + "'");
            runner_.release_agent(a->node_id);
            r.deliver(wire::AttachAck{runner_.overlay().session_epoch()});
            runner_.overlay().attach_agent(a->node_id, *role, &r);
            r.agent_node = a->node_id;
        } catch (const Error& e) {
            r.deliver(wire::ErrorMsg{wire::kErrUnknownTarget, e.what()});
            drop(r);
            return false;
        }
        return true;
    }
    r.id = runner_.overlay().attach_client("tcp" + std::to_string(++seq_), &r);
    return true;
}

void RootServer::serve_for(std::chrono::milliseconds budget)
{
    using clock = std::chrono::steady_clock;
    const auto deadline = clock::now() + budget;
    while (clock::now() < deadline) {
        if (auto ch = listener_.accept(std::chrono::milliseconds(5))) {
            remotes_.push_back(std::make_unique<Remote>(std::move(ch)));
        }
        for (auto& r : remotes_) {
            while (!r->closed) {
                std::optional<wire::Message> msg;
                try {
                    msg = r->channel.receive(std::chrono::milliseconds(0));
                } catch (const Error&) {
                    drop(*r);
                    break;
                }
                if (!msg) break;
                if (!r->id && r->agent_node.empty()) {
                    if (!greet(*r, *msg)) break;
                    if (!r->agent_node.empty()) continue;
                }
                if (!r->agent_node.empty()) {
                    runner_.overlay().agent_send(r->agent_node, *msg);
                    continue;
                }
                const bool detach = std::holds_alternative<wire::Detach>(*msg);
                runner_.overlay().client_send(r->id, *msg);
                if (detach) {
                    r->id = 0;
                    drop(*r);
                }
            }
            if (r->closed && r->id) drop(*r);
        }
        remotes_.erase(std::remove_if(remotes_.begin(), remotes_.end(), [](const auto& r) { return r->closed; }),
                       remotes_.end());
    }
}

}  // namespace melt::sim
