#include "melt/stream.hpp"

#include <algorithm>

namespace melt {

std::string_view to_string(TargetKind kind)
{
    switch (kind) {
    case TargetKind::fs: return "fs";
    case TargetKind::job: return "job";
    case TargetKind::oss: return "oss";
    case TargetKind::mds: return "mds";
    case TargetKind::clnt: return "clnt";
    }
    return "?";
}

std::string to_string(const Target& target)
{
    std::string out(to_string(target.kind));
    if (!target.name.empty()) {
        out += '=';
        out += target.name;
    }
    return out;
}

Target parse_target(std::string_view text)
{
    auto eq = text.find('=');
    std::string_view kind = text.substr(0, eq);
    std::string name = eq == std::string_view::npos ? std::string() : std::string(text.substr(eq + 1));
    Target target;
    if (kind == "fs") target.kind = TargetKind::fs;
    else if (kind == "job") target.kind = TargetKind::job;
    else if (kind == "oss") target.kind = TargetKind::oss;
    else if (kind == "mds") target.kind = TargetKind::mds;
    else if (kind == "clnt") target.kind = TargetKind::clnt;
    else throw UsageError("unknown target '" + std::string(text) + "' (expected fs, job, oss, mds, or clnt)");
    if (eq != std::string_view::npos && name.empty())
        throw UsageError("target '" + std::string(text) + "' has an empty name");
    if (target.kind != TargetKind::fs && name.empty())
        throw UsageError("target '" + std::string(kind) + "' requires a name, e.g. " + std::string(kind) + "=<name>");
    target.name = std::move(name);
    return target;
}

std::string_view to_string(Aggregation agg)
{
    switch (agg) {
    case Aggregation::summary: return "summary";
    case Aggregation::histogram: return "histogram";
    case Aggregation::counted_key: return "counted-key";
    }
    return "?";
}

std::string_view to_string(GroupBy group)
{
    switch (group) {
    case GroupBy::none: return "none";
    case GroupBy::client: return "client";
    case GroupBy::job: return "job";
    case GroupBy::ost: return "ost";
    case GroupBy::server: return "server";
    }
    return "?";
}

std::optional<Aggregation> parse_aggregation(std::string_view text)
{
    if (text == "summary") return Aggregation::summary;
    if (text == "histogram") return Aggregation::histogram;
    if (text == "counted-key") return Aggregation::counted_key;
    return std::nullopt;
}

std::optional<GroupBy> parse_group_by(std::string_view text)
{
    if (text == "none") return GroupBy::none;
    if (text == "client") return GroupBy::client;
    if (text == "job") return GroupBy::job;
    if (text == "ost") return GroupBy::ost;
    if (text == "server") return GroupBy::server;
    return std::nullopt;
}

void validate_spec_shape(const StreamSpec& spec)
{
    if (spec.name.empty()) throw ConfigError("stream name is empty");
    if (spec.interval_secs == 0) throw ConfigError("stream interval must be > 0 seconds");
    if (spec.buffer_capacity == 0) throw ConfigError("stream buffer capacity must be > 0");
    if (spec.metrics.empty()) throw ConfigError("stream selects no metrics");
    if (spec.aggregation == Aggregation::histogram) {
        if (spec.edges.empty()) throw ConfigError("histogram stream needs bucket edges");
        for (std::size_t i = 1; i < spec.edges.size(); ++i)
            if (!(spec.edges[i - 1] < spec.edges[i]))
                throw ConfigError("histogram edges must be strictly increasing");
        if (spec.group_by != GroupBy::none) throw ConfigError("histogram streams cannot be grouped");
    } else if (!spec.edges.empty()) {
        throw ConfigError("bucket edges given for a non-histogram stream");
    }
}

bool keyed_by_fs(const StreamSpec& spec)
{
    return spec.target.kind == TargetKind::fs && spec.target.name.empty() && spec.aggregation == Aggregation::summary;
}

bool is_grouped(const StreamSpec& spec)
{
    return spec.aggregation == Aggregation::summary && (spec.group_by != GroupBy::none || keyed_by_fs(spec));
}

bool is_producer(const StreamSpec& spec, LustreRole role, std::string_view node)
{
    if (std::find(spec.roles.begin(), spec.roles.end(), role) == spec.roles.end()) return false;
    return spec.node.empty() || spec.node == node;
}

}  // namespace melt
