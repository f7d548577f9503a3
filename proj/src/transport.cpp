#include "melt/transport.hpp"

#include <cerrno>
#include <cstring>

#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

namespace melt::transport {

namespace {

// One direction of a simulated link.
struct Pipe {
    std::deque<std::uint8_t> bytes;
    bool closed = false;
};

struct SimLink {
    std::mutex mu;
    std::condition_variable cv;
    Pipe dir[2];
};

class SimChannel final : public Channel {
public:
    SimChannel(std::shared_ptr<SimLink> link, int side, std::string peer)
        : link_(std::move(link)), side_(side), peer_(std::move(peer)) {}
    ~SimChannel() override { close(); }

    void write(std::span<const std::uint8_t> bytes) override
    {
        std::lock_guard lock(link_->mu);
        Pipe& out = link_->dir[side_];
        Pipe& in = link_->dir[1 - side_];
        if (out.closed || in.closed) throw ChannelClosed("simulated channel to " + peer_ + " is closed");
        out.bytes.insert(out.bytes.end(), bytes.begin(), bytes.end());
        link_->cv.notify_all();
    }

    std::vector<std::uint8_t> read_some(std::chrono::milliseconds timeout) override
    {
        std::unique_lock lock(link_->mu);
        Pipe& in = link_->dir[1 - side_];
        link_->cv.wait_for(lock, timeout, [&] { return !in.bytes.empty() || in.closed; });
        if (in.bytes.empty() && in.closed) throw ChannelClosed("simulated channel from " + peer_ + " closed");
        std::vector<std::uint8_t> out(in.bytes.begin(), in.bytes.end());
        in.bytes.clear();
        return out;
    }

    void close() override
    {
        std::lock_guard lock(link_->mu);
        link_->dir[side_].closed = true;
        link_->cv.notify_all();
    }

    std::string peer() const override { return peer_; }

private:
    std::shared_ptr<SimLink> link_;
    int side_;
    std::string peer_;
};

class TcpChannel final : public Channel {
public:
    TcpChannel(int fd, std::string peer) : fd_(fd), peer_(std::move(peer)) {}
    ~TcpChannel() override
    {
        if (fd_ >= 0) ::close(fd_);
    }

    void write(std::span<const std::uint8_t> bytes) override
    {
        std::size_t off = 0;
        while (off < bytes.size()) {
            if (fd_ < 0) throw ChannelClosed("tcp channel to " + peer_ + " is closed");
            auto n = ::send(fd_, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw ChannelClosed("tcp write to " + peer_ + ": " + std::strerror(errno));
            }
            off += static_cast<std::size_t>(n);
        }
    }

    std::vector<std::uint8_t> read_some(std::chrono::milliseconds timeout) override
    {
        if (fd_ < 0) throw ChannelClosed("tcp channel to " + peer_ + " is closed");
        pollfd p{fd_, POLLIN, 0};
        int rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
        if (rc == 0) return {};
        if (rc < 0) {
            if (errno == EINTR) return {};
            throw ChannelClosed("tcp poll: " + std::string(std::strerror(errno)));
        }
        std::vector<std::uint8_t> buf(64 * 1024);
        auto n = ::recv(fd_, buf.data(), buf.size(), 0);
        if (n == 0) throw ChannelClosed("tcp peer " + peer_ + " closed");
        if (n < 0) {
            if (errno == EINTR || errno == EAGAIN) return {};
            throw ChannelClosed("tcp read from " + peer_ + ": " + std::strerror(errno));
        }
        buf.resize(static_cast<std::size_t>(n));
        return buf;
    }

    void close() override
    {
        if (fd_ >= 0) {
            ::shutdown(fd_, SHUT_RDWR);
            ::close(fd_);
            fd_ = -1;
        }
    }

    std::string peer() const override { return peer_; }

private:
    int fd_;
    std::string peer_;
};

std::pair<std::string, std::string> split_endpoint(const std::string& endpoint)
{
    auto colon = endpoint.rfind(':');
    if (colon == std::string::npos || colon + 1 == endpoint.size())
        throw ConnectError("endpoint '" + endpoint + "' is not host:port");
    return {endpoint.substr(0, colon), endpoint.substr(colon + 1)};
}

}  // namespace

// -- simulated ---------------------------------------------------------------

std::unique_ptr<Channel> SimListener::accept(std::chrono::milliseconds timeout)
{
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, timeout, [&] { return !pending_.empty(); });
    if (pending_.empty()) return nullptr;
    auto ch = std::move(pending_.front());
    pending_.pop_front();
    return ch;
}

std::shared_ptr<SimListener> SimNetwork::listen(const std::string& name)
{
    std::lock_guard lock(mu_);
    if (endpoints_.count(name)) throw ConnectError("endpoint '" + name + "' already registered");
    auto listener = std::make_shared<SimListener>();
    endpoints_[name] = listener;
    return listener;
}

void SimNetwork::unregister(const std::string& name)
{
    std::lock_guard lock(mu_);
    endpoints_.erase(name);
}

std::unique_ptr<Channel> SimNetwork::connect(const std::string& name)
{
    std::shared_ptr<SimListener> listener;
    std::string client;
    {
        std::lock_guard lock(mu_);
        auto it = endpoints_.find(name);
        if (it == endpoints_.end()) throw ConnectError("unknown endpoint '" + name + "'");
        listener = it->second;
        client = "client" + std::to_string(next_client_++);
    }
    auto [mine, theirs] = pair(client, name);
    {
        std::lock_guard lock(listener->mu_);
        listener->pending_.push_back(std::move(theirs));
    }
    listener->cv_.notify_all();
    return std::move(mine);
}

std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> SimNetwork::pair(const std::string& a,
                                                                               const std::string& b)
{
    auto link = std::make_shared<SimLink>();
    // Side 0 belongs to `a`, so its peer is `b`.
    return {std::make_unique<SimChannel>(link, 0, b), std::make_unique<SimChannel>(link, 1, a)};
}

// -- tcp ---------------------------------------------------------------------

std::unique_ptr<Channel> tcp_connect(const std::string& endpoint)
{
    auto [host, port] = split_endpoint(endpoint);
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &res);
    if (rc != 0) throw ConnectError("cannot resolve '" + endpoint + "': " + gai_strerror(rc));
    std::string last = "no addresses";
    for (auto* ai = res; ai; ai = ai->ai_next) {
        int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
        if (fd < 0) continue;
        if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) {
            int one = 1;
            ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
            ::freeaddrinfo(res);
            return std::make_unique<TcpChannel>(fd, endpoint);
        }
        last = std::strerror(errno);
        ::close(fd);
    }
    ::freeaddrinfo(res);
    throw ConnectError("connect to " + endpoint + " failed: " + last);
}

TcpListener::TcpListener(const std::string& endpoint)
{
    auto [host, port] = split_endpoint(endpoint);
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    hints.ai_flags = AI_PASSIVE;
    addrinfo* res = nullptr;
    int rc = ::getaddrinfo(host.empty() ? nullptr : host.c_str(), port.c_str(), &hints, &res);
    if (rc != 0) throw ConnectError("cannot resolve '" + endpoint + "': " + gai_strerror(rc));
    fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
    if (fd_ < 0) {
        ::freeaddrinfo(res);
        throw ConnectError("socket: " + std::string(std::strerror(errno)));
    }
    int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(fd_, res->ai_addr, res->ai_addrlen) != 0 || ::listen(fd_, 16) != 0) {
        std::string err = std::strerror(errno);
        ::freeaddrinfo(res);
        ::close(fd_);
        fd_ = -1;
        throw ConnectError("cannot listen on " + endpoint + ": " + err);
    }
    ::freeaddrinfo(res);
    sockaddr_in addr{};
    socklen_t len = sizeof addr;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener()
{
    if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<Channel> TcpListener::accept(std::chrono::milliseconds timeout)
{
    pollfd p{fd_, POLLIN, 0};
    if (::poll(&p, 1, static_cast<int>(timeout.count())) <= 0) return nullptr;
    int fd = ::accept(fd_, nullptr, nullptr);
    if (fd < 0) return nullptr;
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return std::make_unique<TcpChannel>(fd, "tcp-peer");
}

std::unique_ptr<Channel> transport_connect(const std::string& endpoint, Kind kind, SimNetwork* net)
{
    if (kind == Kind::tcp) return tcp_connect(endpoint);
    if (!net) throw ConnectError("simulated connect without a network");
    return net->connect(endpoint);
}

// -- message layer -----------------------------------------------------------

void MessageChannel::send(const wire::Message& msg)
{
    auto bytes = wire::encode_message(msg);
    channel_->write(bytes);
}

std::optional<wire::Message> MessageChannel::receive(std::chrono::milliseconds timeout)
{
    if (auto msg = reader_.next()) return msg;
    auto deadline = std::chrono::steady_clock::now() + timeout;
    while (true) {
        std::vector<std::uint8_t> bytes;
        try {
            auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
                deadline - std::chrono::steady_clock::now());
            bytes = channel_->read_some(std::max(left, std::chrono::milliseconds(0)));
        } catch (const ChannelClosed&) {
            if (reader_.buffered() > 0)
                throw IncompleteFrame("channel closed mid-frame (" + std::to_string(reader_.buffered()) +
                                      " bytes pending)");
            throw;
        }
        if (!bytes.empty()) {
            reader_.feed(bytes);
            if (auto msg = reader_.next()) return msg;
        }
        if (std::chrono::steady_clock::now() >= deadline) return std::nullopt;
    }
}

}  // namespace melt::transport
