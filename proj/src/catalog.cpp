#include "melt/metrics.hpp"

#include <algorithm>
#include <sstream>

namespace melt::metrics {

namespace {

using enum LustreRole;

constexpr std::uint32_t kIoInterval = 10;
constexpr std::uint32_t kMetaInterval = 10;
constexpr std::uint32_t kLoadInterval = 30;

MetricDef rate(std::string name, MetricClass cls, Unit unit, std::string label, std::vector<LustreRole> roles,
               std::uint32_t interval, std::string counter)
{
    return {std::move(name), cls, MetricKind::rate, unit, std::move(label), std::move(roles), interval,
            Derivation::counter_rate, std::move(counter), "", Reduce::sum, ""};
}

MetricDef ratio(std::string name, MetricClass cls, Unit unit, std::string label, std::vector<LustreRole> roles,
                std::string num, std::string den)
{
    return {std::move(name), cls, MetricKind::gauge, unit, std::move(label), std::move(roles), kIoInterval,
            Derivation::counter_ratio, std::move(num), std::move(den), Reduce::mean, ""};
}

MetricDef gauge(std::string name, MetricClass cls, Unit unit, std::string label, std::vector<LustreRole> roles,
                std::uint32_t interval, Reduce reduce)
{
    std::string counter = name;
    return {std::move(name), cls, MetricKind::gauge, unit, std::move(label), std::move(roles), interval,
            Derivation::gauge, std::move(counter), "", reduce, ""};
}

MetricDef events(std::string name, MetricClass cls, std::string label, std::string field)
{
    return {std::move(name), cls, MetricKind::count, Unit::count, std::move(label), {mds}, kMetaInterval,
            Derivation::events, "", "", Reduce::sum, std::move(field)};
}

std::vector<MetricDef> build_catalog()
{
    using C = MetricClass;
    using U = Unit;
    std::vector<MetricDef> c;
    // io
    c.push_back(rate("IO_RD_BW", C::io, U::bytes_per_sec, "RD_BW", {client, oss}, kIoInterval, "IO_RD_BYTES"));
    c.push_back(rate("IO_WR_BW", C::io, U::bytes_per_sec, "WR_BW", {client, oss}, kIoInterval, "IO_WR_BYTES"));
    c.push_back({"IO_CLNT_NUM", C::io, MetricKind::count, U::count, "CLNT_NUM", {client}, kIoInterval,
                 Derivation::active_clients, "", "", Reduce::sum, ""});
    c.push_back(gauge("IO_CLNT_DIRTY", C::io, U::bytes, "DIRTY", {client}, kIoInterval, Reduce::sum));
    c.push_back(ratio("IO_CLNT_AVG_RD_SZ", C::io, U::bytes, "RD_SZ", {client}, "IO_RD_BYTES", "IO_RD_OPS"));
    c.push_back(ratio("IO_CLNT_AVG_WR_SZ", C::io, U::bytes, "WR_SZ", {client}, "IO_WR_BYTES", "IO_WR_OPS"));
    c.push_back(ratio("IO_CLNT_AVG_RD_TIME", C::io, U::seconds, "RD_TIME", {client}, "IO_RD_TIME", "IO_RD_OPS"));
    c.push_back(ratio("IO_CLNT_AVG_WR_TIME", C::io, U::seconds, "WR_TIME", {client}, "IO_WR_TIME", "IO_WR_OPS"));
    // lock
    c.push_back(rate("LOCK_GRANT_RATE", C::lock, U::ops_per_sec, "GRANT_RATE", {oss, mds}, kIoInterval, "LOCK_GRANTS"));
    c.push_back(rate("LOCK_CANCEL_RATE", C::lock, U::ops_per_sec, "CANCEL_RATE", {oss, mds}, kIoInterval, "LOCK_CANCELS"));
    c.push_back(gauge("LOCK_COUNT", C::lock, U::count, "LOCKS", {oss, mds}, kIoInterval, Reduce::sum));
    // meta
    c.push_back(rate("META_OP_RATE", C::meta, U::ops_per_sec, "MD_RATE", {client, mds}, kMetaInterval, "META_OPS"));
    for (std::string op : {"open", "close", "getattr", "setattr", "mkdir", "unlink"}) {
        std::string upper = op;
        std::transform(upper.begin(), upper.end(), upper.begin(), ::toupper);
        c.push_back(rate("META_" + upper + "_RATE", C::meta, U::ops_per_sec, upper + "_RATE", {client, mds},
                         kMetaInterval, "META_" + upper));
    }
    // rpc
    c.push_back(rate("RPC_REQ_RATE", C::rpc, U::ops_per_sec, "REQ_RATE", {client, oss, router}, kIoInterval, "RPC_REQS"));
    c.push_back(ratio("RPC_AVG_WAIT", C::rpc, U::seconds, "WAIT", {client, oss, router}, "RPC_WAIT_TIME", "RPC_REQS"));
    // load
    c.push_back(gauge("LOAD_CPU_PCT", C::load, U::percent, "CPU", {client, router}, kLoadInterval, Reduce::mean));
    c.push_back(gauge("LOAD_MEM_PCT", C::load, U::percent, "MEM", {client, router}, kLoadInterval, Reduce::mean));
    // metadata event tallies on the MDS
    c.push_back(events("MDS_TOP_OPS", C::op, "OP", "op"));
    c.push_back(events("MDS_TOP_PATHS", C::path, "PATH", "path"));
    c.push_back(events("MDS_TOP_CLIENTS", C::client, "CLIENT", "client"));
    return c;
}

}  // namespace

std::string_view to_string(MetricClass cls)
{
    switch (cls) {
    case MetricClass::io: return "io";
    case MetricClass::lock: return "lock";
    case MetricClass::meta: return "meta";
    case MetricClass::rpc: return "rpc";
    case MetricClass::load: return "load";
    case MetricClass::op: return "op";
    case MetricClass::path: return "path";
    case MetricClass::client: return "client";
    }
    return "?";
}

std::optional<MetricClass> parse_metric_class(std::string_view text)
{
    for (auto cls : {MetricClass::io, MetricClass::lock, MetricClass::meta, MetricClass::rpc, MetricClass::load,
                     MetricClass::op, MetricClass::path, MetricClass::client})
        if (to_string(cls) == text) return cls;
    return std::nullopt;
}

std::string_view to_string(MetricKind kind)
{
    switch (kind) {
    case MetricKind::rate: return "rate";
    case MetricKind::gauge: return "gauge";
    case MetricKind::count: return "count";
    }
    return "?";
}

std::string_view to_string(Unit unit)
{
    switch (unit) {
    case Unit::bytes_per_sec: return "bytes_per_sec";
    case Unit::bytes: return "bytes";
    case Unit::ops_per_sec: return "ops_per_sec";
    case Unit::seconds: return "seconds";
    case Unit::percent: return "percent";
    case Unit::count: return "count";
    }
    return "?";
}

const std::vector<MetricDef>& catalog()
{
    static const std::vector<MetricDef> c = build_catalog();
    return c;
}

const MetricDef* find_metric(std::string_view name)
{
    for (const auto& def : catalog())
        if (def.name == name) return &def;
    return nullptr;
}

const MetricDef& metric(std::string_view name)
{
    if (auto* def = find_metric(name)) return *def;
    throw ConfigError("unknown metric '" + std::string(name) + "'");
}

bool produces(const MetricDef& def, LustreRole role)
{
    return std::find(def.roles.begin(), def.roles.end(), role) != def.roles.end();
}

std::vector<MetricDef> catalog_for_role(LustreRole role)
{
    std::vector<MetricDef> out;
    for (const auto& def : catalog())
        if (produces(def, role)) out.push_back(def);
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
    return out;
}

std::vector<std::string> class_metrics(MetricClass cls)
{
    std::vector<std::string> out;
    for (const auto& def : catalog())
        if (def.cls == cls) out.push_back(def.name);
    return out;
}

bool role_has_class(LustreRole role, MetricClass cls)
{
    for (const auto& def : catalog())
        if (def.cls == cls && produces(def, role)) return true;
    return false;
}

std::vector<std::string> expand_metric_selection(const std::vector<std::string>& names)
{
    std::vector<std::string> out;
    auto add = [&out](const std::string& n) {
        if (std::find(out.begin(), out.end(), n) == out.end()) out.push_back(n);
    };
    for (const auto& n : names) {
        if (starts_with(n, "class:")) {
            auto cls = parse_metric_class(std::string_view(n).substr(6));
            if (!cls) throw ConfigError("unknown metric class in selector '" + n + "'");
            for (auto& m : class_metrics(*cls)) add(m);
        } else {
            metric(n);
            add(n);
        }
    }
    return out;
}

std::string catalog_table()
{
    std::ostringstream out;
    out << "NAME\tCLASS\tKIND\tUNIT\tLABEL\tROLES\n";
    for (const auto& def : catalog()) {
        std::vector<std::string> roles;
        for (auto r : def.roles) roles.emplace_back(to_string(r));
        out << def.name << '\t' << to_string(def.cls) << '\t' << to_string(def.kind) << '\t'
            << to_string(def.unit) << '\t' << def.label << '\t' << join(roles, ",") << '\n';
    }
    return out.str();
}

RateResult rate_from_counters(double prev, double cur, double dt)
{
    if (!(dt > 0)) throw Error("rate window must be positive");
    if (cur < prev) return {std::nullopt, true};
    return {(cur - prev) / dt, false};
}

}  // namespace melt::metrics
