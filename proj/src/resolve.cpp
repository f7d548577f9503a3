#include "melt/overlay.hpp"

#include <algorithm>

namespace melt::overlay {

using metrics::MetricClass;

namespace {

bool has_member(const OverlayTopology& topo, const std::string& node, LustreRole role)
{
    const DomainSpec* d = topo.domain_of_node(node);
    return d && d->role == role;
}

std::string role_list(const std::vector<LustreRole>& roles)
{
    std::vector<std::string> out;
    for (auto r : roles) out.emplace_back(to_string(r));
    return join(out, "/");
}

}  // namespace

void resolve_stream(StreamSpec& spec, const OverlayTopology& topo, const std::set<std::string>* known_jobs)
{
    try {
        validate_spec_shape(spec);
    } catch (const ConfigError& e) {
        throw StreamRejected(wire::kErrMalformedSpec, e.what());
    }
    std::vector<std::string> names;
    try {
        names = metrics::expand_metric_selection(spec.metrics);
    } catch (const ConfigError& e) {
        throw StreamRejected(wire::kErrUnknownMetric, e.what());
    }

    std::set<MetricClass> classes;
    bool events = false, plain = false;
    for (const auto& n : names) {
        const auto& def = metrics::metric(n);
        classes.insert(def.cls);
        (def.derivation == metrics::Derivation::events ? events : plain) = true;
    }
    if (events && plain)
        throw StreamRejected(wire::kErrMalformedSpec, "metadata event tallies cannot share a stream with rates");
    if (events != (spec.aggregation == Aggregation::counted_key))
        throw StreamRejected(wire::kErrMalformedSpec,
                             events ? "metadata event metrics need counted-key aggregation"
                                    : "counted-key aggregation only applies to metadata event metrics");
    if (events && spec.group_by != GroupBy::none)
        throw StreamRejected(wire::kErrMalformedSpec, "counted-key streams are keyed by the event field, not grouped");

    auto not_attributable = [&](const std::string& why) {
        throw StreamRejected(wire::kErrNotAttributable, "stream '" + spec.name + "': " + why);
    };
    auto unknown_target = [&](const std::string& why) { throw StreamRejected(wire::kErrUnknownTarget, why); };

    const bool lock = classes.count(MetricClass::lock) > 0;
    const bool by_client = spec.group_by == GroupBy::client || spec.group_by == GroupBy::job;
    const std::string& name = spec.target.name;
    spec.roles.clear();
    spec.fs.clear();
    spec.node.clear();
    spec.job.clear();
    spec.osts.clear();

    switch (spec.target.kind) {
    case TargetKind::fs: {
        auto fss = topo.filesystems();
        if (!name.empty() && std::find(fss.begin(), fss.end(), name) == fss.end())
            unknown_target("unknown filesystem '" + name + "'");
        if (events) not_attributable("metadata event tallies are only available from an mds target");
        if (lock) {
            if (classes.size() > 1) not_attributable("lock metrics come from servers and cannot share a stream with client-side classes");
            if (by_client) not_attributable("lock metrics are server-side and cannot be grouped by " + std::string(to_string(spec.group_by)));
            spec.roles = {LustreRole::oss, LustreRole::mds};
        } else {
            spec.roles = {LustreRole::client};
        }
        spec.fs = name;
        break;
    }
    case TargetKind::job:
        if (known_jobs && !known_jobs->count(name)) unknown_target("unknown job '" + name + "'");
        if (lock || events) not_attributable("only client-side classes can be attributed to a job");
        spec.roles = {LustreRole::client};
        spec.job = name;
        break;
    case TargetKind::oss: {
        if (!has_member(topo, name, LustreRole::oss)) unknown_target("unknown oss '" + name + "'");
        if (events) not_attributable("metadata event tallies are only available from an mds target");
        if (by_client) {
            if (lock) not_attributable("lock metrics are server-side and cannot be grouped by " + std::string(to_string(spec.group_by)));
            spec.roles = {LustreRole::client};
            spec.osts = topo.domain_of_node(name)->osts.at(name);
        } else {
            spec.roles = {LustreRole::oss};
            spec.node = name;
        }
        break;
    }
    case TargetKind::mds:
        if (!has_member(topo, name, LustreRole::mds)) unknown_target("unknown mds '" + name + "'");
        if (by_client) {
            if (lock || events) not_attributable("server-side metrics cannot be grouped by " + std::string(to_string(spec.group_by)));
            spec.roles = {LustreRole::client};
            spec.osts = topo.mdts_of(name);
        } else {
            spec.roles = {LustreRole::mds};
            spec.node = name;
        }
        break;
    case TargetKind::clnt: {
        const DomainSpec* d = topo.domain_of_node(name);
        if (!d || (d->role != LustreRole::client && d->role != LustreRole::router))
            unknown_target("unknown client '" + name + "'");
        if (lock || events) not_attributable("clients produce no lock or metadata event metrics");
        spec.roles = {d->role};
        spec.node = name;
        break;
    }
    }

    bool any = false;
    for (const auto& n : names) {
        const auto& def = metrics::metric(n);
        bool ok = std::any_of(spec.roles.begin(), spec.roles.end(), [&](LustreRole r) { return metrics::produces(def, r); });
        any = any || ok;
        bool explicit_name = std::find(spec.metrics.begin(), spec.metrics.end(), n) != spec.metrics.end();
        if (!ok && explicit_name)
            not_attributable("metric " + n + " is not produced by " + role_list(spec.roles) + " nodes");
    }
    if (!any) not_attributable("no selected metric is produced by " + role_list(spec.roles) + " nodes");
}

std::vector<LustreRole> producer_roles(const StreamSpec& spec)
{
    bool lock = false, events = false;
    for (const auto& n : metrics::expand_metric_selection(spec.metrics)) {
        const auto& def = metrics::metric(n);
        lock = lock || def.cls == MetricClass::lock;
        events = events || def.derivation == metrics::Derivation::events;
    }
    const bool by_client = spec.group_by == GroupBy::client || spec.group_by == GroupBy::job;
    switch (spec.target.kind) {
    case TargetKind::fs:
        if (lock) return {LustreRole::oss, LustreRole::mds};
        return {LustreRole::client};
    case TargetKind::oss: return by_client ? std::vector{LustreRole::client} : std::vector{LustreRole::oss};
    case TargetKind::mds:
        return by_client && !lock && !events ? std::vector{LustreRole::client} : std::vector{LustreRole::mds};
    case TargetKind::job:
    case TargetKind::clnt: return {LustreRole::client};
    }
    return {};
}

std::vector<std::uint64_t> expected_contributors(const OverlayPlan& plan, const OverlayTopology& topo,
                                                 const StreamSpec& spec)
{
    std::vector<std::uint64_t> out(plan.procs.size(), 0);
    for (const auto& [node, leaf] : plan.leaf_of_node) {
        const DomainSpec* d = topo.domain_of_node(node);
        if (d && is_producer(spec, d->role, node)) out[static_cast<std::size_t>(leaf)] = 1;
    }
    // Leaves were planned before the internal processes above them, and
    // managers before their leaves, so walk each manager's subtree explicitly.
    std::function<std::uint64_t(int)> sum = [&](int p) -> std::uint64_t {
        const auto& node = plan.procs[static_cast<std::size_t>(p)];
        if (node.role == ProcessRole::agent_leaf) return out[static_cast<std::size_t>(p)];
        std::uint64_t total = 0;
        for (int c : node.children) total += sum(c);
        out[static_cast<std::size_t>(p)] = total;
        return total;
    };
    std::uint64_t all = 0;
    for (const auto& [dom, mgr] : plan.manager_of_domain) all += sum(mgr);
    out[static_cast<std::size_t>(plan.root)] = all;
    return out;
}

}  // namespace melt::overlay
