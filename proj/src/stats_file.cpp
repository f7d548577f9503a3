#include "melt/agent.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace melt::agent {

const std::vector<std::string>& raw_counter_names()
{
    static const std::vector<std::string> names = [] {
        std::set<std::string> out;
        for (const auto& def : metrics::catalog()) {
            if (def.derivation != metrics::Derivation::counter_rate &&
                def.derivation != metrics::Derivation::counter_ratio)
                continue;
            out.insert(def.counter);
            if (!def.denominator.empty()) out.insert(def.denominator);
        }
        out.insert("IO_RD_OPS");
        out.insert("IO_WR_OPS");
        return std::vector<std::string>(out.begin(), out.end());
    }();
    return names;
}

namespace {

bool is_gauge(std::string_view name)
{
    const auto* def = metrics::find_metric(name);
    return def && def->derivation == metrics::Derivation::gauge;
}

}  // namespace

SourceSnapshot parse_stats(std::string_view text)
{
    SourceSnapshot snap;
    bool have_ts = false;
    int lineno = 0;
    auto fail = [&lineno](const std::string& why) {
        throw ConfigError("stats line " + std::to_string(lineno) + ": " + why);
    };
    for (const auto& raw : split(text, '\n')) {
        ++lineno;
        auto words = split_ws(raw);
        if (words.empty()) continue;
        if (!have_ts) {
            if (words.size() != 2 || words[0] != "ts") fail("expected header 'ts <unix-seconds>'");
            auto ts = parse_i64(words[1]);
            if (!ts) fail("bad timestamp '" + words[1] + "'");
            snap.ts = *ts;
            have_ts = true;
            continue;
        }
        if (words[0] == "ts") fail("duplicate ts header");
        if (words[0] == "gauge") {
            if (words.size() != 3) fail("expected 'gauge <metric> <value>'");
            if (!is_gauge(words[1])) fail("unknown gauge '" + words[1] + "'");
            auto v = parse_double(words[2]);
            if (!v) fail("bad value '" + words[2] + "'");
            if (!snap.gauges.emplace(words[1], *v).second) fail("duplicate gauge " + words[1]);
            continue;
        }
        if (words[0] == "event") {
            if (words.size() != 3 && words.size() != 4) fail("expected 'event <op> <path> [<client>]'");
            snap.events.push_back({words[1], words[2], words.size() == 4 ? words[3] : ""});
            continue;
        }
        if (words.size() != 3) fail("expected '<metric> <fs>[:<ost>] <value>'");
        const auto& names = raw_counter_names();
        if (!std::binary_search(names.begin(), names.end(), words[0])) fail("unknown counter '" + words[0] + "'");
        CounterKey key{words[0], words[1], ""};
        if (auto colon = words[1].find(':'); colon != std::string::npos) {
            key.fs = words[1].substr(0, colon);
            key.target = words[1].substr(colon + 1);
            if (key.target.empty()) fail("empty target after ':'");
        }
        if (key.fs.empty()) fail("empty filesystem name");
        auto v = parse_double(words[2]);
        if (!v || *v < 0) fail("bad counter value '" + words[2] + "'");
        if (!snap.counters.emplace(key, *v).second)
            fail("duplicate counter " + key.name + " " + words[1]);
    }
    if (!have_ts) throw ConfigError("stats snapshot has no 'ts' header");
    return snap;
}

SourceSnapshot read_stats_file(const std::string& path)
{
    return parse_stats(overlay::read_file(path));
}

std::string format_stats(const SourceSnapshot& snap)
{
    std::ostringstream out;
    out << "ts " << snap.ts << "\n";
    for (const auto& [key, v] : snap.counters) {
        out << key.name << ' ' << key.fs;
        if (!key.target.empty()) out << ':' << key.target;
        out << ' ' << format_double(v) << "\n";
    }
    for (const auto& [name, v] : snap.gauges) out << "gauge " << name << ' ' << format_double(v) << "\n";
    for (const auto& e : snap.events) {
        out << "event " << e.op << ' ' << e.path;
        if (!e.client.empty()) out << ' ' << e.client;
        out << "\n";
    }
    return out.str();
}

SourceSnapshot StatsFileSource::snapshot(std::int64_t)
{
    SourceSnapshot snap;
    try {
        snap = read_stats_file(path_);
    } catch (const ConfigError& e) {
        throw SourceError(e.what());
    }
    if (last_ts_ && *last_ts_ == snap.ts) snap.events.clear();
    last_ts_ = snap.ts;
    return snap;
}

}  // namespace melt::agent
