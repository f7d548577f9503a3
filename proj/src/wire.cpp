#include "melt/wire.hpp"

#include <limits>
#include <utility>

namespace melt::wire {

namespace {

std::string escape(std::string_view value)
{
    std::string out;
    out.reserve(value.size());
    for (char c : value) {
        if (c == '\\') out += "\\\\";
        else if (c == '\n') out += "\\n";
        else out += c;
    }
    return out;
}

std::string unescape(std::string_view value)
{
    std::string out;
    out.reserve(value.size());
    for (std::size_t i = 0; i < value.size(); ++i) {
        char c = value[i];
        if (c != '\\') {
            out += c;
            continue;
        }
        if (i + 1 >= value.size()) throw ProtocolError("dangling escape in payload value");
        char n = value[++i];
        if (n == '\\') out += '\\';
        else if (n == 'n') out += '\n';
        else throw ProtocolError(std::string("unknown escape \\") + n + " in payload value");
    }
    return out;
}

class PayloadWriter {
public:
    void put(std::string_view key, std::string_view value)
    {
        text_ += key;
        text_ += '=';
        text_ += escape(value);
        text_ += '\n';
    }
    void put(std::string_view key, std::uint64_t value) { put(key, std::to_string(value)); }
    void put_signed(std::string_view key, std::int64_t value) { put(key, std::to_string(value)); }
    void put_bool(std::string_view key, bool value) { put(key, value ? "1" : "0"); }

    template <class T, class F>
    void put_list(std::string_view prefix, const std::vector<T>& items, F&& fmt)
    {
        for (std::size_t i = 0; i < items.size(); ++i)
            put(std::string(prefix) + "." + std::to_string(i), fmt(items[i]));
    }

    std::string take() { return std::move(text_); }

private:
    std::string text_;
};

class PayloadReader {
public:
    explicit PayloadReader(std::string_view payload)
    {
        std::size_t start = 0;
        while (start < payload.size()) {
            auto nl = payload.find('\n', start);
            if (nl == std::string_view::npos) throw ProtocolError("payload line not LF-terminated");
            std::string_view line = payload.substr(start, nl - start);
            auto eq = line.find('=');
            if (eq == std::string_view::npos) throw ProtocolError("payload line without '='");
            lines_.emplace_back(std::string(line.substr(0, eq)), unescape(line.substr(eq + 1)));
            start = nl + 1;
        }
    }

    std::string take(std::string_view key)
    {
        if (pos_ >= lines_.size() || lines_[pos_].first != key)
            throw ProtocolError("missing mandatory key '" + std::string(key) + "'");
        return std::move(lines_[pos_++].second);
    }

    std::uint64_t take_u64(std::string_view key)
    {
        auto text = take(key);
        auto v = parse_u64(text);
        if (!v) throw ProtocolError("key '" + std::string(key) + "' is not an unsigned integer");
        return *v;
    }

    std::uint32_t take_u32(std::string_view key)
    {
        auto v = take_u64(key);
        if (v > std::numeric_limits<std::uint32_t>::max())
            throw ProtocolError("key '" + std::string(key) + "' out of range");
        return static_cast<std::uint32_t>(v);
    }

    std::int64_t take_i64(std::string_view key)
    {
        auto text = take(key);
        auto v = parse_i64(text);
        if (!v) throw ProtocolError("key '" + std::string(key) + "' is not an integer");
        return *v;
    }

    bool take_bool(std::string_view key)
    {
        auto text = take(key);
        if (text == "1") return true;
        if (text == "0") return false;
        throw ProtocolError("key '" + std::string(key) + "' is not 0 or 1");
    }

    std::vector<std::string> take_list(std::string_view prefix)
    {
        std::vector<std::string> out;
        while (pos_ < lines_.size() &&
               lines_[pos_].first == std::string(prefix) + "." + std::to_string(out.size()))
            out.push_back(std::move(lines_[pos_++].second));
        return out;
    }

    bool at(std::string_view key) const { return pos_ < lines_.size() && lines_[pos_].first == key; }

    void finish() const
    {
        if (pos_ != lines_.size())
            throw ProtocolError("unexpected key '" + lines_[pos_].first + "'");
    }

private:
    std::vector<std::pair<std::string, std::string>> lines_;
    std::size_t pos_ = 0;
};

std::string_view direction_text(Direction d)
{
    return d == Direction::up_consumer ? "up-consumer" : "agent-producer";
}

void check_node_name(const std::string& node)
{
    if (node.empty()) throw EncodeError("job map node id is empty");
    if (node.find(',') != std::string::npos)
        throw EncodeError("job map node id '" + node + "' contains ','");
}

void write_spec(PayloadWriter& w, const StreamSpec& s)
{
    auto same = [](const std::string& v) { return v; };
    w.put("spec.id", s.id);
    w.put("spec.name", s.name);
    w.put("spec.target", to_string(s.target));
    w.put_list("spec.metrics", s.metrics, same);
    w.put("spec.agg", to_string(s.aggregation));
    w.put_list("spec.edges", s.edges, [](double d) { return format_double(d); });
    w.put("spec.group", to_string(s.group_by));
    w.put("spec.interval", std::uint64_t{s.interval_secs});
    w.put("spec.capacity", std::uint64_t{s.buffer_capacity});
    w.put_bool("spec.transient", s.transient);
    w.put_bool("spec.closed", s.closed);
    w.put_list("spec.roles", s.roles, [](LustreRole r) { return std::string(to_string(r)); });
    w.put("spec.fs", s.fs);
    w.put("spec.node", s.node);
    w.put("spec.job", s.job);
    w.put_list("spec.osts", s.osts, same);
}

StreamSpec read_spec(PayloadReader& r)
{
    StreamSpec s;
    s.id = r.take_u64("spec.id");
    s.name = r.take("spec.name");
    try {
        s.target = parse_target(r.take("spec.target"));
    } catch (const UsageError& e) {
        throw ProtocolError(std::string("bad spec.target: ") + e.what());
    }
    s.metrics = r.take_list("spec.metrics");
    auto agg = parse_aggregation(r.take("spec.agg"));
    if (!agg) throw ProtocolError("bad spec.agg");
    s.aggregation = *agg;
    for (auto& e : r.take_list("spec.edges")) {
        auto d = parse_double(e);
        if (!d) throw ProtocolError("bad histogram edge '" + e + "'");
        s.edges.push_back(*d);
    }
    auto group = parse_group_by(r.take("spec.group"));
    if (!group) throw ProtocolError("bad spec.group");
    s.group_by = *group;
    s.interval_secs = r.take_u32("spec.interval");
    s.buffer_capacity = r.take_u32("spec.capacity");
    s.transient = r.take_bool("spec.transient");
    s.closed = r.take_bool("spec.closed");
    for (auto& role : r.take_list("spec.roles")) {
        auto parsed = parse_lustre_role(role);
        if (!parsed) throw ProtocolError("bad role '" + role + "'");
        s.roles.push_back(*parsed);
    }
    s.fs = r.take("spec.fs");
    s.node = r.take("spec.node");
    s.job = r.take("spec.job");
    s.osts = r.take_list("spec.osts");
    return s;
}

}  // namespace

std::string to_string(const Scope& scope)
{
    switch (scope.kind) {
    case Scope::Kind::all: return "all";
    case Scope::Kind::domain: return "domain:" + scope.value;
    case Scope::Kind::role: return "role:" + scope.value;
    }
    return "all";
}

Scope parse_scope(std::string_view text)
{
    if (text == "all") return {};
    if (starts_with(text, "domain:") && text.size() > 7)
        return {Scope::Kind::domain, std::string(text.substr(7))};
    if (starts_with(text, "role:") && parse_lustre_role(text.substr(5)))
        return {Scope::Kind::role, std::string(text.substr(5))};
    throw ProtocolError("bad multicast scope '" + std::string(text) + "'");
}

MsgType type_of(const Message& msg)
{
    return static_cast<MsgType>(msg.index() + 1);
}

std::string_view type_name(MsgType type)
{
    switch (type) {
    case MsgType::attach: return "Attach";
    case MsgType::attach_ack: return "AttachAck";
    case MsgType::create_stream: return "CreateStream";
    case MsgType::stream_created: return "StreamCreated";
    case MsgType::subscribe: return "Subscribe";
    case MsgType::subscribe_ack: return "SubscribeAck";
    case MsgType::data: return "Data";
    case MsgType::set_rate: return "SetRate";
    case MsgType::job_map_update: return "JobMapUpdate";
    case MsgType::detach: return "Detach";
    case MsgType::error: return "Error";
    }
    return "?";
}

std::string encode_payload(const Message& msg)
{
    PayloadWriter w;
    std::visit(
        [&w](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, Attach>) {
                w.put("node_id", m.node_id);
                w.put("domain_id", m.domain_id);
                w.put("process_role", m.process_role);
                w.put("lustre_role", m.lustre_role);
            } else if constexpr (std::is_same_v<T, AttachAck>) {
                w.put_signed("session_epoch", m.session_epoch);
            } else if constexpr (std::is_same_v<T, CreateStream>) {
                write_spec(w, m.spec);
            } else if constexpr (std::is_same_v<T, StreamCreated>) {
                w.put("stream_id", m.stream_id);
            } else if constexpr (std::is_same_v<T, Subscribe>) {
                w.put("stream_id", m.stream_id);
                w.put("direction", direction_text(m.direction));
            } else if constexpr (std::is_same_v<T, SubscribeAck>) {
                w.put("stream_id", m.stream_id);
            } else if constexpr (std::is_same_v<T, Data>) {
                w.put("stream_id", m.stream_id);
                w.put("round", m.round);
                w.put("window_secs", std::uint64_t{m.window_secs});
                w.put("expected", m.expected_contributors);
                w.put("actual", m.actual_contributors);
                w.put("body", m.aggregate_body);
            } else if constexpr (std::is_same_v<T, SetRate>) {
                w.put("stream_id", m.stream_id);
                w.put_list("metric", m.metric_names, [](const std::string& s) { return s; });
                w.put("interval_secs", std::uint64_t{m.interval_secs});
                w.put("scope", to_string(m.scope));
            } else if constexpr (std::is_same_v<T, JobMapUpdate>) {
                w.put("epoch", m.epoch);
                for (std::size_t i = 0; i < m.entries.size(); ++i) {
                    const auto& e = m.entries[i];
                    for (const auto& n : e.nodes) check_node_name(n);
                    auto prefix = "job." + std::to_string(i);
                    w.put(prefix + ".id", e.job_id);
                    w.put(prefix + ".nodes", join(e.nodes, ","));
                }
            } else if constexpr (std::is_same_v<T, Detach>) {
                w.put("node_id", m.node_id);
            } else if constexpr (std::is_same_v<T, ErrorMsg>) {
                w.put_signed("code", m.code);
                w.put("text", m.text);
            }
        },
        msg);
    return w.take();
}

Message decode_payload(MsgType type, std::string_view payload)
{
    PayloadReader r(payload);
    Message out;
    switch (type) {
    case MsgType::attach: {
        Attach m;
        m.node_id = r.take("node_id");
        m.domain_id = r.take("domain_id");
        m.process_role = r.take("process_role");
        m.lustre_role = r.take("lustre_role");
        out = std::move(m);
        break;
    }
    case MsgType::attach_ack:
        out = AttachAck{r.take_i64("session_epoch")};
        break;
    case MsgType::create_stream:
        out = CreateStream{read_spec(r)};
        break;
    case MsgType::stream_created:
        out = StreamCreated{r.take_u64("stream_id")};
        break;
    case MsgType::subscribe: {
        Subscribe m;
        m.stream_id = r.take_u64("stream_id");
        auto d = r.take("direction");
        if (d == "up-consumer") m.direction = Direction::up_consumer;
        else if (d == "agent-producer") m.direction = Direction::agent_producer;
        else throw ProtocolError("bad subscribe direction '" + d + "'");
        out = m;
        break;
    }
    case MsgType::subscribe_ack:
        out = SubscribeAck{r.take_u64("stream_id")};
        break;
    case MsgType::data: {
        Data m;
        m.stream_id = r.take_u64("stream_id");
        m.round = r.take_u64("round");
        m.window_secs = r.take_u32("window_secs");
        m.expected_contributors = r.take_u64("expected");
        m.actual_contributors = r.take_u64("actual");
        m.aggregate_body = r.take("body");
        out = std::move(m);
        break;
    }
    case MsgType::set_rate: {
        SetRate m;
        m.stream_id = r.take_u64("stream_id");
        m.metric_names = r.take_list("metric");
        m.interval_secs = r.take_u32("interval_secs");
        m.scope = parse_scope(r.take("scope"));
        out = std::move(m);
        break;
    }
    case MsgType::job_map_update: {
        JobMapUpdate m;
        m.epoch = r.take_u64("epoch");
        for (std::size_t i = 0;; ++i) {
            auto prefix = "job." + std::to_string(i);
            if (!r.at(prefix + ".id")) break;
            JobEntry e;
            e.job_id = r.take(prefix + ".id");
            e.nodes = split(r.take(prefix + ".nodes"), ',');
            m.entries.push_back(std::move(e));
        }
        out = std::move(m);
        break;
    }
    case MsgType::detach:
        out = Detach{r.take("node_id")};
        break;
    case MsgType::error: {
        ErrorMsg m;
        auto code = r.take_i64("code");
        if (code < std::numeric_limits<std::int32_t>::min() || code > std::numeric_limits<std::int32_t>::max())
            throw ProtocolError("error code out of range");
        m.code = static_cast<std::int32_t>(code);
        m.text = r.take("text");
        out = std::move(m);
        break;
    }
    default:
        throw ProtocolError("unknown msg_type " + std::to_string(static_cast<int>(type)),
                            static_cast<int>(type));
    }
    r.finish();
    return out;
}

std::vector<std::uint8_t> encode_message(const Message& msg)
{
    std::string payload = encode_payload(msg);
    if (payload.size() > std::numeric_limits<std::uint32_t>::max())
        throw EncodeError("payload exceeds 2^32-1 bytes");
    auto len = static_cast<std::uint32_t>(payload.size());
    std::vector<std::uint8_t> out;
    out.reserve(kHeaderSize + payload.size());
    out.push_back(kMagic0);
    out.push_back(kMagic1);
    out.push_back(kVersion);
    out.push_back(static_cast<std::uint8_t>(type_of(msg)));
    out.push_back(static_cast<std::uint8_t>(len >> 24));
    out.push_back(static_cast<std::uint8_t>(len >> 16));
    out.push_back(static_cast<std::uint8_t>(len >> 8));
    out.push_back(static_cast<std::uint8_t>(len));
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

DecodeResult decode_frame(std::span<const std::uint8_t> bytes)
{
    // Validate whatever header bytes are present before waiting for more.
    if (bytes.size() >= 1 && bytes[0] != kMagic0) throw ProtocolError("bad frame magic");
    if (bytes.size() >= 2 && bytes[1] != kMagic1) throw ProtocolError("bad frame magic");
    if (bytes.size() >= 3 && bytes[2] != kVersion)
        throw ProtocolError("unsupported protocol version " + std::to_string(bytes[2]));
    if (bytes.size() >= 4 && (bytes[3] < 1 || bytes[3] > 11))
        throw ProtocolError("unknown msg_type " + std::to_string(bytes[3]), bytes[3]);
    if (bytes.size() < kHeaderSize) return {};
    std::uint32_t len = (std::uint32_t{bytes[4]} << 24) | (std::uint32_t{bytes[5]} << 16) |
                        (std::uint32_t{bytes[6]} << 8) | std::uint32_t{bytes[7]};
    if (bytes.size() - kHeaderSize < len) return {};
    std::string_view payload(reinterpret_cast<const char*>(bytes.data() + kHeaderSize), len);
    DecodeResult result;
    result.status = DecodeStatus::ok;
    result.message = decode_payload(static_cast<MsgType>(bytes[3]), payload);
    result.consumed = kHeaderSize + len;
    return result;
}

void FrameReader::feed(std::span<const std::uint8_t> bytes)
{
    if (pos_ > 0 && pos_ == buf_.size()) {
        buf_.clear();
        pos_ = 0;
    }
    buf_.insert(buf_.end(), bytes.begin(), bytes.end());
}

std::optional<Message> FrameReader::next()
{
    auto result = decode_frame(std::span(buf_).subspan(pos_));
    if (result.status != DecodeStatus::ok) return std::nullopt;
    pos_ += result.consumed;
    if (pos_ > 4096 && pos_ * 2 > buf_.size()) {
        buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(pos_));
        pos_ = 0;
    }
    return std::move(result.message);
}

}  // namespace melt::wire
