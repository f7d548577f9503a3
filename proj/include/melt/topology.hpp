#pragma once

// Overlay topology: which nodes exist, how each domain's tree is shaped, the
// manager ring, and where the session root lives.

#include "melt/common.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace melt::overlay {

struct DomainSpec {
    std::string id;
    std::string manager_node;
    std::vector<std::string> members;  // agent hosts, in config order
    std::uint32_t fanout = 2;
    LustreRole role = LustreRole::client;
    std::vector<std::string> filesystems;
    /// OSS node -> OSTs it serves (oss domains only).
    std::map<std::string, std::vector<std::string>> osts;

    friend bool operator==(const DomainSpec&, const DomainSpec&) = default;
};

struct OverlayTopology {
    std::vector<DomainSpec> domains;
    std::vector<std::string> ring_order;
    std::string root_node;

    const DomainSpec* domain(std::string_view id) const;
    const DomainSpec* domain_of_node(std::string_view node) const;
    std::vector<std::string> filesystems() const;
    /// OSS serving an OST, or empty.
    std::string oss_of_ost(std::string_view ost) const;
    std::string fs_of_ost(std::string_view ost) const;
    /// First MDS member of an mds domain serving `fs`, or empty.
    std::string mds_of_fs(std::string_view fs) const;
    /// Server node behind an OST or MDT name, or empty.
    std::string server_of_target(std::string_view target) const;
    /// MDT names served by an MDS node.
    std::vector<std::string> mdts_of(std::string_view mds) const;
    std::vector<std::string> all_members() const;

    friend bool operator==(const OverlayTopology&, const OverlayTopology&) = default;
};

/// Metadata target name of a filesystem (one MDT per filesystem).
std::string mdt_name(std::string_view fs);

/// Throws ConfigError on any invariant violation.
void validate(const OverlayTopology& topo);

// Line-oriented config sections: `[kind arg]` followed by `key=value` lines.
struct ConfigEntry {
    std::string key;
    std::string value;
    int line = 0;
};

struct ConfigSection {
    std::string kind;
    std::string arg;
    int line = 0;
    std::vector<ConfigEntry> entries;
};

std::vector<ConfigSection> parse_sections(std::string_view text);
std::string read_file(const std::string& path);

/// Builds a topology from the `[domain <id>]` and `[ring]` sections. Other
/// section kinds listed in `ignore` are skipped; anything else is rejected.
OverlayTopology topology_from_sections(const std::vector<ConfigSection>& sections,
                                       const std::vector<std::string>& ignore = {});
OverlayTopology parse_topology(std::string_view text);
OverlayTopology load_topology(const std::string& path);
std::string format_topology(const OverlayTopology& topo);

// -- process graph -----------------------------------------------------------

enum class ProcessRole { session_root, domain_manager, tree_internal, agent_leaf, session_client };
std::string_view to_string(ProcessRole role);

struct ProcessNode {
    std::string id;
    ProcessRole role = ProcessRole::agent_leaf;
    std::string host;
    std::string domain;  // empty for the session root
    int parent = -1;     // tree parent; -1 for managers and the root
    std::vector<int> children;
    int depth = 0;       // 0 at the manager
};

struct OverlayPlan {
    std::vector<ProcessNode> procs;
    int root = -1;
    std::map<std::string, int> manager_of_domain;
    std::map<std::string, int> leaf_of_node;

    /// Longest manager-to-leaf path in a domain.
    int depth(std::string_view domain) const;
    std::size_t internal_count(std::string_view domain) const;
};

/// Members become leaves; while a level has more than `fanout` entries they
/// are split, in order, into ceil(n / fanout) balanced groups under new
/// internal processes.
OverlayPlan plan_overlay(const OverlayTopology& topo);

}  // namespace melt::overlay
