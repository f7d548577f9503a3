#pragma once

// Framed message protocol spoken between overlay processes.
//
// Frame layout: 'M' 'L' | version (0x01) | msg_type | payload_len (u32 BE) |
// payload. The payload is UTF-8 text, one `key=value` per LF-terminated line,
// in a fixed key order per message type.

#include "melt/common.hpp"
#include "melt/stream.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace melt::wire {

inline constexpr std::uint8_t kMagic0 = 0x4D;
inline constexpr std::uint8_t kMagic1 = 0x4C;
inline constexpr std::uint8_t kVersion = 0x01;
inline constexpr std::size_t kHeaderSize = 8;

class ProtocolError : public Error {
public:
    explicit ProtocolError(const std::string& what, int code = 0) : Error(what), code_(code) {}
    /// Offending msg_type for unknown-type errors, else 0.
    int code() const { return code_; }

private:
    int code_;
};

class EncodeError : public Error {
public:
    using Error::Error;
};

enum class MsgType : std::uint8_t {
    attach = 1,
    attach_ack = 2,
    create_stream = 3,
    stream_created = 4,
    subscribe = 5,
    subscribe_ack = 6,
    data = 7,
    set_rate = 8,
    job_map_update = 9,
    detach = 10,
    error = 11,
};

struct Attach {
    std::string node_id;
    std::string domain_id;
    std::string process_role;
    std::string lustre_role;
    friend bool operator==(const Attach&, const Attach&) = default;
};

struct AttachAck {
    /// Unix time of logical second zero on the session root's clock.
    std::int64_t session_epoch = 0;
    friend bool operator==(const AttachAck&, const AttachAck&) = default;
};

struct CreateStream {
    StreamSpec spec;
    friend bool operator==(const CreateStream&, const CreateStream&) = default;
};

struct StreamCreated {
    std::uint64_t stream_id = 0;
    friend bool operator==(const StreamCreated&, const StreamCreated&) = default;
};

enum class Direction { up_consumer, agent_producer };

struct Subscribe {
    std::uint64_t stream_id = 0;
    Direction direction = Direction::up_consumer;
    friend bool operator==(const Subscribe&, const Subscribe&) = default;
};

struct SubscribeAck {
    std::uint64_t stream_id = 0;
    friend bool operator==(const SubscribeAck&, const SubscribeAck&) = default;
};

struct Data {
    std::uint64_t stream_id = 0;
    std::uint64_t round = 0;
    std::uint32_t window_secs = 0;
    std::uint64_t expected_contributors = 0;
    std::uint64_t actual_contributors = 0;
    std::string aggregate_body;
    friend bool operator==(const Data&, const Data&) = default;
};

/// Multicast scope: every agent, one domain, or one Lustre role.
struct Scope {
    enum class Kind { all, domain, role } kind = Kind::all;
    std::string value;
    friend bool operator==(const Scope&, const Scope&) = default;
};

std::string to_string(const Scope& scope);
Scope parse_scope(std::string_view text);

/// interval_secs == 0 withdraws the override for the listed metrics.
struct SetRate {
    std::uint64_t stream_id = 0;
    std::vector<std::string> metric_names;
    std::uint32_t interval_secs = 0;
    Scope scope;
    friend bool operator==(const SetRate&, const SetRate&) = default;
};

struct JobEntry {
    std::string job_id;
    std::vector<std::string> nodes;
    friend bool operator==(const JobEntry&, const JobEntry&) = default;
};

struct JobMapUpdate {
    std::uint64_t epoch = 0;
    std::vector<JobEntry> entries;
    friend bool operator==(const JobMapUpdate&, const JobMapUpdate&) = default;
};

struct Detach {
    std::string node_id;
    friend bool operator==(const Detach&, const Detach&) = default;
};

struct ErrorMsg {
    std::int32_t code = 0;
    std::string text;
    friend bool operator==(const ErrorMsg&, const ErrorMsg&) = default;
};

// Error codes carried in ErrorMsg.
inline constexpr int kErrMalformedSpec = 1;
inline constexpr int kErrUnknownMetric = 2;
inline constexpr int kErrUnknownTarget = 3;
inline constexpr int kErrStreamFault = 4;
inline constexpr int kErrProtocol = 5;
inline constexpr int kErrUnknownStream = 6;
inline constexpr int kErrNotAttributable = 7;

using Message = std::variant<Attach, AttachAck, CreateStream, StreamCreated, Subscribe,
                             SubscribeAck, Data, SetRate, JobMapUpdate, Detach, ErrorMsg>;

MsgType type_of(const Message& msg);
std::string_view type_name(MsgType type);

std::vector<std::uint8_t> encode_message(const Message& msg);

/// Payload text only (no frame header).
std::string encode_payload(const Message& msg);
Message decode_payload(MsgType type, std::string_view payload);

enum class DecodeStatus { ok, incomplete };

struct DecodeResult {
    DecodeStatus status = DecodeStatus::incomplete;
    Message message;
    /// Bytes consumed from the input; zero unless status == ok.
    std::size_t consumed = 0;
};

/// Parses one frame from the front of `bytes`. Returns incomplete (without
/// consuming) on a valid prefix; throws ProtocolError on malformed input.
DecodeResult decode_frame(std::span<const std::uint8_t> bytes);

/// Incremental frame reassembly over a byte stream.
class FrameReader {
public:
    void feed(std::span<const std::uint8_t> bytes);
    /// Next complete message, if one is buffered.
    std::optional<Message> next();
    std::size_t buffered() const { return buf_.size() - pos_; }

private:
    std::vector<std::uint8_t> buf_;
    std::size_t pos_ = 0;
};

}  // namespace melt::wire
