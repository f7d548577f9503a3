#pragma once

// Stream descriptions shared by the overlay, the agents, and the session
// clients. A stream is published once at the session root and outlives the
// client that created it unless it is marked transient.

#include "melt/common.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace melt {

enum class TargetKind { fs, job, oss, mds, clnt };

/// What a stream (or a `melt` invocation) looks at. An fs target with an
/// empty name means every filesystem.
struct Target {
    TargetKind kind = TargetKind::fs;
    std::string name;

    friend bool operator==(const Target&, const Target&) = default;
};

std::string to_string(const Target& target);
Target parse_target(std::string_view text);  // throws UsageError
std::string_view to_string(TargetKind kind);

enum class Aggregation { summary, histogram, counted_key };
enum class GroupBy { none, client, job, ost, server };

std::string_view to_string(Aggregation agg);
std::string_view to_string(GroupBy group);
std::optional<Aggregation> parse_aggregation(std::string_view text);
std::optional<GroupBy> parse_group_by(std::string_view text);

inline constexpr std::uint32_t kDefaultBufferCapacity = 1024;

struct StreamSpec {
    std::uint64_t id = 0;  // assigned by the session root
    std::string name;
    Target target;
    /// Catalog metric names, or class selectors of the form `class:io`.
    std::vector<std::string> metrics;
    Aggregation aggregation = Aggregation::summary;
    std::vector<double> edges;  // histogram bucket boundaries
    GroupBy group_by = GroupBy::none;
    std::uint32_t interval_secs = 10;
    std::uint32_t buffer_capacity = kDefaultBufferCapacity;
    /// Transient streams close when the creating client leaves.
    bool transient = false;
    bool closed = false;

    // Producer selection, filled in by the session root when the stream is
    // published. Agents only read these.
    std::vector<LustreRole> roles;
    std::string fs;
    std::string node;
    std::string job;
    std::vector<std::string> osts;

    friend bool operator==(const StreamSpec&, const StreamSpec&) = default;
};

/// Checks the structural invariants (interval, edges, names). Throws
/// ConfigError describing the first violation.
void validate_spec_shape(const StreamSpec& spec);

/// Summary streams over every filesystem carry one group per filesystem:
/// keys are `<fs>` when ungrouped, else `<fs>,<key>`.
bool keyed_by_fs(const StreamSpec& spec);
/// True when the stream's summaries are split into named groups.
bool is_grouped(const StreamSpec& spec);

/// True when an agent with this role and node is a producer for the stream.
bool is_producer(const StreamSpec& spec, LustreRole role, std::string_view node);

}  // namespace melt
