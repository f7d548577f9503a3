#pragma once

// Byte channels for overlay traffic. TCP sockets for deployment and an
// in-process simulated network share one contract: ordered, reliable,
// bidirectional bytes.

#include "melt/common.hpp"
#include "melt/wire.hpp"

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

namespace melt::transport {

class ConnectError : public Error {
public:
    using Error::Error;
};

class ChannelClosed : public Error {
public:
    using Error::Error;
};

/// Raised when the peer closes the channel with a partial frame buffered.
class IncompleteFrame : public Error {
public:
    using Error::Error;
};

class Channel {
public:
    virtual ~Channel() = default;
    /// Throws ChannelClosed if the peer has gone away.
    virtual void write(std::span<const std::uint8_t> bytes) = 0;
    /// Waits up to `timeout` for bytes. Empty result means nothing arrived;
    /// throws ChannelClosed once the peer closed and everything was read.
    virtual std::vector<std::uint8_t> read_some(std::chrono::milliseconds timeout) = 0;
    virtual void close() = 0;
    virtual std::string peer() const = 0;
};

enum class Kind { tcp, simulated };

class SimNetwork;

/// Opens a channel to `endpoint`. For tcp, endpoint is `host:port`; for
/// simulated it is a name registered on `net`.
std::unique_ptr<Channel> transport_connect(const std::string& endpoint, Kind kind,
                                           SimNetwork* net = nullptr);

// -- simulated transport ----------------------------------------------------

class SimListener {
public:
    /// Next pending connection, waiting up to `timeout`.
    std::unique_ptr<Channel> accept(std::chrono::milliseconds timeout);

private:
    friend class SimNetwork;
    std::mutex mu_;
    std::condition_variable cv_;
    std::deque<std::unique_ptr<Channel>> pending_;
};

class SimNetwork {
public:
    /// Registers `name`. Throws ConnectError if it is already taken.
    std::shared_ptr<SimListener> listen(const std::string& name);
    std::unique_ptr<Channel> connect(const std::string& name);
    void unregister(const std::string& name);

    /// A connected pair with no registry involvement.
    static std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> pair(
        const std::string& a = "a", const std::string& b = "b");

private:
    std::mutex mu_;
    std::map<std::string, std::shared_ptr<SimListener>> endpoints_;
    std::uint64_t next_client_ = 0;
};

// -- tcp transport -----------------------------------------------------------

std::unique_ptr<Channel> tcp_connect(const std::string& endpoint);

class TcpListener {
public:
    /// Binds `host:port`; port 0 picks an ephemeral port.
    explicit TcpListener(const std::string& endpoint);
    ~TcpListener();
    TcpListener(const TcpListener&) = delete;
    TcpListener& operator=(const TcpListener&) = delete;

    std::unique_ptr<Channel> accept(std::chrono::milliseconds timeout);
    int port() const { return port_; }

private:
    int fd_ = -1;
    int port_ = 0;
};

// -- message layer -----------------------------------------------------------

/// Frames messages over a Channel.
class MessageChannel {
public:
    explicit MessageChannel(std::unique_ptr<Channel> channel) : channel_(std::move(channel)) {}

    void send(const wire::Message& msg);
    /// Next message within `timeout`, or nullopt. Throws ChannelClosed on a
    /// clean close and IncompleteFrame when the peer vanished mid-frame.
    std::optional<wire::Message> receive(std::chrono::milliseconds timeout);
    void close() { channel_->close(); }
    Channel& channel() { return *channel_; }

private:
    std::unique_ptr<Channel> channel_;
    wire::FrameReader reader_;
};

}  // namespace melt::transport
