#include "melt/topology.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace melt::overlay {

const DomainSpec* OverlayTopology::domain(std::string_view id) const
{
    for (const auto& d : domains)
        if (d.id == id) return &d;
    return nullptr;
}

const DomainSpec* OverlayTopology::domain_of_node(std::string_view node) const
{
    for (const auto& d : domains)
        if (std::find(d.members.begin(), d.members.end(), node) != d.members.end()) return &d;
    return nullptr;
}

std::vector<std::string> OverlayTopology::filesystems() const
{
    std::vector<std::string> out;
    for (const auto& d : domains)
        for (const auto& fs : d.filesystems)
            if (std::find(out.begin(), out.end(), fs) == out.end()) out.push_back(fs);
    return out;
}

std::string OverlayTopology::oss_of_ost(std::string_view ost) const
{
    for (const auto& d : domains)
        for (const auto& [oss, list] : d.osts)
            if (std::find(list.begin(), list.end(), ost) != list.end()) return oss;
    return {};
}

std::string OverlayTopology::fs_of_ost(std::string_view ost) const
{
    auto pos = ost.find("-OST");
    if (pos != std::string_view::npos && pos > 0) return std::string(ost.substr(0, pos));
    for (const auto& d : domains)
        for (const auto& [oss, list] : d.osts)
            if (std::find(list.begin(), list.end(), ost) != list.end() && !d.filesystems.empty())
                return d.filesystems.front();
    return {};
}

std::string OverlayTopology::mds_of_fs(std::string_view fs) const
{
    for (const auto& d : domains)
        if (d.role == LustreRole::mds && std::find(d.filesystems.begin(), d.filesystems.end(), fs) != d.filesystems.end())
            return d.members.front();
    return {};
}

std::string OverlayTopology::server_of_target(std::string_view target) const
{
    auto pos = target.find("-MDT");
    if (pos != std::string_view::npos) return mds_of_fs(target.substr(0, pos));
    return oss_of_ost(target);
}

std::vector<std::string> OverlayTopology::mdts_of(std::string_view mds) const
{
    std::vector<std::string> out;
    for (const auto& fs : filesystems())
        if (mds_of_fs(fs) == mds) out.push_back(mdt_name(fs));
    return out;
}

std::string mdt_name(std::string_view fs)
{
    return std::string(fs) + "-MDT0000";
}

std::vector<std::string> OverlayTopology::all_members() const
{
    std::vector<std::string> out;
    for (const auto& d : domains) out.insert(out.end(), d.members.begin(), d.members.end());
    return out;
}

namespace {

void check_name(const std::string& name, std::string_view what)
{
    if (name.empty()) throw ConfigError(std::string(what) + " name is empty");
    for (char c : name)
        if (c == ',' || c == '=' || c == ' ' || c == '\t' || c == '\n' || c == ':' || c == '/')
            throw ConfigError(std::string(what) + " name '" + name + "' contains a reserved character");
}

}  // namespace

void validate(const OverlayTopology& topo)
{
    if (topo.domains.empty()) throw ConfigError("topology has no domains");
    std::set<std::string> ids;
    std::map<std::string, std::string> owner;  // node -> domain
    for (const auto& d : topo.domains) {
        check_name(d.id, "domain");
        if (!ids.insert(d.id).second) throw ConfigError("duplicate domain '" + d.id + "'");
        if (d.fanout < 2) throw ConfigError("domain '" + d.id + "': fanout must be >= 2");
        if (d.members.empty()) throw ConfigError("domain '" + d.id + "' has no members");
        check_name(d.manager_node, "manager node");
        for (const auto& m : d.members) {
            check_name(m, "node");
            auto [it, fresh] = owner.emplace(m, d.id);
            if (!fresh) throw ConfigError("duplicate node '" + m + "' (domains '" + it->second + "' and '" + d.id + "')");
        }
        if (d.role != LustreRole::router && d.filesystems.empty())
            throw ConfigError("domain '" + d.id + "' lists no filesystems");
        if (!d.osts.empty() && d.role != LustreRole::oss)
            throw ConfigError("domain '" + d.id + "': osts given for a non-oss domain");
        for (const auto& [oss, list] : d.osts) {
            if (std::find(d.members.begin(), d.members.end(), oss) == d.members.end())
                throw ConfigError("domain '" + d.id + "': OSTs assigned to non-member '" + oss + "'");
            for (const auto& ost : list) check_name(ost, "OST");
        }
    }
    for (const auto& d : topo.domains) {
        auto it = owner.find(d.manager_node);
        if (it != owner.end() && it->second != d.id)
            throw ConfigError("manager node '" + d.manager_node + "' of domain '" + d.id + "' belongs to domain '" +
                              it->second + "'");
        for (const auto& e : topo.domains)
            if (&e != &d && e.manager_node == d.manager_node)
                throw ConfigError("node '" + d.manager_node + "' manages two domains");
    }
    std::vector<std::string> ring = topo.ring_order, all(ids.begin(), ids.end());
    std::sort(ring.begin(), ring.end());
    if (ring != all) throw ConfigError("ring order must list every domain exactly once");
    check_name(topo.root_node, "root");
    if (owner.count(topo.root_node)) throw ConfigError("root node '" + topo.root_node + "' must not host an agent");
}

std::vector<ConfigSection> parse_sections(std::string_view text)
{
    std::vector<ConfigSection> out;
    int lineno = 0;
    for (const auto& raw : split(text, '\n')) {
        ++lineno;
        auto line = trim(raw);
        if (line.empty() || line.front() == '#') continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": unterminated section header");
            auto words = split_ws(line.substr(1, line.size() - 2));
            if (words.empty() || words.size() > 2)
                throw ConfigError("line " + std::to_string(lineno) + ": bad section header");
            out.push_back({words[0], words.size() == 2 ? words[1] : "", lineno, {}});
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
        if (out.empty()) throw ConfigError("line " + std::to_string(lineno) + ": key outside of a section");
        out.back().entries.push_back({std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))), lineno});
    }
    return out;
}

std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

namespace {

std::string where(const ConfigEntry& e)
{
    return "line " + std::to_string(e.line) + ": ";
}

std::vector<std::string> list_value(const ConfigEntry& e)
{
    std::vector<std::string> out;
    for (auto& item : split(e.value, ',')) {
        auto t = std::string(trim(item));
        if (t.empty()) throw ConfigError(where(e) + "empty item in list '" + e.key + "'");
        out.push_back(t);
    }
    return out;
}

std::string ost_name(const std::string& fs, std::size_t idx)
{
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04zx", idx);
    return fs + "-OST" + buf;
}

DomainSpec parse_domain(const ConfigSection& s)
{
    DomainSpec d;
    d.id = s.arg;
    if (d.id.empty()) throw ConfigError("line " + std::to_string(s.line) + ": [domain] needs an id");
    std::set<std::string> seen;
    std::vector<std::string> osts;
    bool have_role = false, have_manager = false, have_members = false, have_osts = false;
    for (const auto& e : s.entries) {
        if (!seen.insert(e.key).second) throw ConfigError(where(e) + "duplicate key '" + e.key + "'");
        if (e.key == "manager") {
            d.manager_node = e.value;
            have_manager = true;
        } else if (e.key == "members") {
            d.members = list_value(e);
            have_members = true;
        } else if (e.key == "fanout") {
            auto v = parse_u64(e.value);
            if (!v || *v > 1'000'000) throw ConfigError(where(e) + "bad fanout '" + e.value + "'");
            d.fanout = static_cast<std::uint32_t>(*v);
        } else if (e.key == "role") {
            auto r = parse_lustre_role(e.value);
            if (!r) throw ConfigError(where(e) + "bad role '" + e.value + "' (client|oss|mds|router)");
            d.role = *r;
            have_role = true;
        } else if (e.key == "fs") {
            d.filesystems = list_value(e);
        } else if (e.key == "osts") {
            osts = list_value(e);
            have_osts = true;
        } else {
            throw ConfigError(where(e) + "unknown key '" + e.key + "' in [domain " + d.id + "]");
        }
    }
    if (!have_manager || !have_members || !have_role)
        throw ConfigError("[domain " + d.id + "] needs manager=, members=, and role=");
    if (have_osts && d.role != LustreRole::oss)
        throw ConfigError("[domain " + d.id + "]: osts= is only valid for oss domains");
    if (d.role == LustreRole::oss) {
        if (have_osts) {
            if (osts.size() % d.members.size() != 0)
                throw ConfigError("[domain " + d.id + "]: OST count must be a multiple of the member count");
            std::size_t per = osts.size() / d.members.size();
            for (std::size_t i = 0; i < d.members.size(); ++i)
                d.osts[d.members[i]] = std::vector<std::string>(osts.begin() + static_cast<long>(i * per),
                                                                osts.begin() + static_cast<long>((i + 1) * per));
        } else {
            for (const auto& fs : d.filesystems)
                for (std::size_t i = 0; i < d.members.size(); ++i) d.osts[d.members[i]].push_back(ost_name(fs, i));
        }
    }
    return d;
}

}  // namespace

OverlayTopology topology_from_sections(const std::vector<ConfigSection>& sections, const std::vector<std::string>& ignore)
{
    OverlayTopology topo;
    bool have_ring = false;
    for (const auto& s : sections) {
        if (s.kind == "domain") {
            topo.domains.push_back(parse_domain(s));
        } else if (s.kind == "ring") {
            if (have_ring) throw ConfigError("line " + std::to_string(s.line) + ": duplicate [ring] section");
            have_ring = true;
            for (const auto& e : s.entries) {
                if (e.key == "order") topo.ring_order = list_value(e);
                else if (e.key == "root") topo.root_node = e.value;
                else throw ConfigError(where(e) + "unknown key '" + e.key + "' in [ring]");
            }
        } else if (std::find(ignore.begin(), ignore.end(), s.kind) == ignore.end()) {
            throw ConfigError("line " + std::to_string(s.line) + ": unknown section [" + s.kind + "]");
        }
    }
    if (!have_ring) throw ConfigError("topology has no [ring] section");
    validate(topo);
    return topo;
}

OverlayTopology parse_topology(std::string_view text)
{
    return topology_from_sections(parse_sections(text));
}

OverlayTopology load_topology(const std::string& path)
{
    return parse_topology(read_file(path));
}

std::string format_topology(const OverlayTopology& topo)
{
    std::ostringstream out;
    for (const auto& d : topo.domains) {
        out << "[domain " << d.id << "]\n";
        out << "manager=" << d.manager_node << "\n";
        out << "members=" << join(d.members, ",") << "\n";
        out << "fanout=" << d.fanout << "\n";
        out << "role=" << to_string(d.role) << "\n";
        if (!d.filesystems.empty()) out << "fs=" << join(d.filesystems, ",") << "\n";
        if (!d.osts.empty()) {
            std::vector<std::string> all;
            for (const auto& m : d.members) {
                auto it = d.osts.find(m);
                if (it != d.osts.end()) all.insert(all.end(), it->second.begin(), it->second.end());
            }
            out << "osts=" << join(all, ",") << "\n";
        }
        out << "\n";
    }
    out << "[ring]\norder=" << join(topo.ring_order, ",") << "\nroot=" << topo.root_node << "\n";
    return out.str();
}

std::string_view to_string(ProcessRole role)
{
    switch (role) {
    case ProcessRole::session_root: return "session-root";
    case ProcessRole::domain_manager: return "domain-manager";
    case ProcessRole::tree_internal: return "tree-internal";
    case ProcessRole::agent_leaf: return "agent-leaf";
    case ProcessRole::session_client: return "session-client";
    }
    return "?";
}

int OverlayPlan::depth(std::string_view domain) const
{
    int d = 0;
    for (const auto& p : procs)
        if (p.domain == domain) d = std::max(d, p.depth);
    return d;
}

std::size_t OverlayPlan::internal_count(std::string_view domain) const
{
    return static_cast<std::size_t>(std::count_if(procs.begin(), procs.end(), [&](const ProcessNode& p) {
        return p.domain == domain && p.role == ProcessRole::tree_internal;
    }));
}

OverlayPlan plan_overlay(const OverlayTopology& topo)
{
    validate(topo);
    OverlayPlan plan;
    auto add = [&plan](ProcessNode node) {
        plan.procs.push_back(std::move(node));
        return static_cast<int>(plan.procs.size() - 1);
    };
    plan.root = add({"root", ProcessRole::session_root, topo.root_node, "", -1, {}, 0});

    for (const auto& dom_id : topo.ring_order) {
        const DomainSpec& d = *topo.domain(dom_id);
        int mgr = add({"mgr:" + d.id, ProcessRole::domain_manager, d.manager_node, d.id, -1, {}, 0});
        plan.manager_of_domain[d.id] = mgr;

        std::vector<int> level;
        for (const auto& m : d.members) {
            int leaf = add({"agent:" + m, ProcessRole::agent_leaf, m, d.id, -1, {}, 0});
            plan.leaf_of_node[m] = leaf;
            level.push_back(leaf);
        }
        int tier = 0;
        while (level.size() > d.fanout) {
            std::size_t groups = (level.size() + d.fanout - 1) / d.fanout;
            std::vector<int> next;
            std::size_t at = 0;
            for (std::size_t g = 0; g < groups; ++g) {
                // Balanced split: the first (n % groups) groups take one extra.
                std::size_t size = level.size() / groups + (g < level.size() % groups ? 1 : 0);
                std::string host = plan.procs[static_cast<std::size_t>(level[at])].host;
                int internal = add({"int:" + d.id + ":" + std::to_string(tier) + "." + std::to_string(g),
                                    ProcessRole::tree_internal, host, d.id, -1, {}, 0});
                for (std::size_t i = 0; i < size; ++i, ++at) {
                    plan.procs[static_cast<std::size_t>(level[at])].parent = internal;
                    plan.procs[static_cast<std::size_t>(internal)].children.push_back(level[at]);
                }
                next.push_back(internal);
            }
            level = std::move(next);
            ++tier;
        }
        for (int child : level) {
            plan.procs[static_cast<std::size_t>(child)].parent = mgr;
            plan.procs[static_cast<std::size_t>(mgr)].children.push_back(child);
        }
        // Depths from the manager downward.
        std::vector<int> stack{mgr};
        while (!stack.empty()) {
            int p = stack.back();
            stack.pop_back();
            for (int c : plan.procs[static_cast<std::size_t>(p)].children) {
                plan.procs[static_cast<std::size_t>(c)].depth = plan.procs[static_cast<std::size_t>(p)].depth + 1;
                stack.push_back(c);
            }
        }
    }
    return plan;
}

}  // namespace melt::overlay
