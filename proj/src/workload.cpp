#include "melt/workload.hpp"

#include "melt/humanize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

namespace melt::sim {

const JobLine* Workload::job(std::string_view id) const
{
    for (const auto& j : jobs)
        if (j.job_id == id) return &j;
    return nullptr;
}

std::vector<std::string> expand_nodes(std::string_view text)
{
    std::vector<std::string> out;
    for (const auto& item : split(text, ',')) {
        auto t = std::string(trim(item));
        if (t.empty()) throw ConfigError("empty node name in list '" + std::string(text) + "'");
        auto lb = t.find('[');
        if (lb == std::string::npos) {
            out.push_back(t);
            continue;
        }
        auto dash = t.find('-', lb);
        auto rb = t.find(']', lb);
        if (dash == std::string::npos || rb == std::string::npos || rb != t.size() - 1 || dash > rb)
            throw ConfigError("bad node range '" + t + "' (expected name[NN-MM])");
        std::string lo_s = t.substr(lb + 1, dash - lb - 1), hi_s = t.substr(dash + 1, rb - dash - 1);
        auto lo = parse_u64(lo_s), hi = parse_u64(hi_s);
        if (!lo || !hi || *lo > *hi) throw ConfigError("bad node range '" + t + "'");
        std::size_t width = lo_s.size();
        for (auto i = *lo; i <= *hi; ++i) {
            std::string num = std::to_string(i);
            if (num.size() < width) num.insert(0, width - num.size(), '0');
            out.push_back(t.substr(0, lb) + num);
        }
    }
    return out;
}

namespace {

const std::vector<std::string> kMetaOps = {"open", "close", "getattr", "setattr", "mkdir", "unlink"};

struct LineParser {
    int line;
    std::vector<std::string> words;

    [[noreturn]] void fail(const std::string& why) const
    {
        throw ConfigError("workload line " + std::to_string(line) + ": " + why);
    }

    std::int64_t secs(std::size_t i) const
    {
        auto v = parse_i64(words[i]);
        if (!v || *v < 0) fail("bad time '" + words[i] + "'");
        return *v;
    }

    double number(std::size_t i) const
    {
        if (auto v = parse_double(words[i])) {
            if (*v < 0) fail("negative value '" + words[i] + "'");
            return *v;
        }
        try {
            return metrics::parse_human(words[i]).value;
        } catch (const metrics::ParseError&) {
            fail("bad value '" + words[i] + "'");
        }
    }

    Weights weights(std::size_t i) const
    {
        Weights out;
        for (const auto& item : split(words[i], ',')) {
            auto colon = item.rfind(':');
            if (colon == std::string::npos || colon == 0) fail("expected name:weight, got '" + item + "'");
            auto w = parse_double(std::string_view(item).substr(colon + 1));
            if (!w || !(*w > 0)) fail("weight in '" + item + "' must be positive");
            out.emplace_back(item.substr(0, colon), *w);
        }
        return out;
    }

    void span(std::int64_t start, std::int64_t end) const
    {
        if (end <= start) fail("end must be after start");
    }
};

}  // namespace

Workload parse_workload(std::string_view text)
{
    Workload w;
    int lineno = 0;
    for (const auto& raw : split(text, '\n')) {
        ++lineno;
        auto body = trim(raw);
        if (body.empty() || body.front() == '#') continue;
        LineParser p{lineno, split_ws(body)};
        const auto& kw = p.words[0];
        auto need = [&p](std::size_t n, const char* usage) {
            if (p.words.size() != n) p.fail(std::string("expected '") + usage + "'");
        };
        if (kw == "job") {
            if (p.words.size() < 5) p.fail("expected 'job <start> <end> <job_id> <nodes>'");
            JobLine j{p.secs(1), p.secs(2), p.words[3], {}, lineno};
            p.span(j.start, j.end);
            std::vector<std::string> rest(p.words.begin() + 4, p.words.end());
            j.nodes = expand_nodes(join(rest, ","));
            if (w.job(j.job_id)) p.fail("job '" + j.job_id + "' declared twice");
            w.jobs.push_back(std::move(j));
        } else if (kw == "io") {
            need(7, "io <start> <end> <job_id> <read_Bps> <write_Bps> roundrobin|single:<oss>");
            IoLine io{p.secs(1), p.secs(2), p.words[3], p.number(4), p.number(5), "", lineno};
            p.span(io.start, io.end);
            if (starts_with(p.words[6], "single:")) {
                io.single_oss = p.words[6].substr(7);
                if (io.single_oss.empty()) p.fail("single: needs an oss name");
            } else if (p.words[6] != "roundrobin") {
                p.fail("unknown spread '" + p.words[6] + "' (roundrobin|single:<oss>)");
            }
            w.io.push_back(std::move(io));
        } else if (kw == "meta") {
            need(6, "meta <start> <end> <job_id> <ops_per_s> <op:weight,...>");
            MetaLine m{p.secs(1), p.secs(2), p.words[3], p.number(4), p.weights(5), lineno};
            p.span(m.start, m.end);
            for (const auto& [op, wt] : m.ops)
                if (std::find(kMetaOps.begin(), kMetaOps.end(), op) == kMetaOps.end())
                    p.fail("unknown metadata op '" + op + "'");
            w.meta.push_back(std::move(m));
        } else if (kw == "paths") {
            need(5, "paths <start> <end> <job_id> <path:weight,...>");
            PathsLine pl{p.secs(1), p.secs(2), p.words[3], p.weights(4), lineno};
            p.span(pl.start, pl.end);
            w.paths.push_back(std::move(pl));
        } else if (kw == "load") {
            need(6, "load <node> <start> <end> <cpu_pct> <mem_pct>");
            LoadLine l{p.words[1], p.secs(2), p.secs(3), p.number(4), p.number(5), lineno};
            p.span(l.start, l.end);
            w.load.push_back(std::move(l));
        } else {
            p.fail("unknown directive '" + kw + "'");
        }
    }
    auto declared = [&w](const std::string& id, int line) {
        if (!w.job(id))
            throw ConfigError("workload line " + std::to_string(line) + ": job '" + id + "' is not declared");
    };
    for (const auto& l : w.io) declared(l.job_id, l.line);
    for (const auto& l : w.meta) declared(l.job_id, l.line);
    for (const auto& l : w.paths) declared(l.job_id, l.line);
    return w;
}

Workload load_workload(const std::string& path)
{
    return parse_workload(overlay::read_file(path));
}

void validate_workload(const Workload& w, std::int64_t duration, const overlay::OverlayTopology* topo)
{
    auto check = [&](std::int64_t end, int line) {
        if (end > duration)
            throw ConfigError("workload line " + std::to_string(line) + ": span ends after the scenario duration (" +
                              std::to_string(duration) + " s)");
    };
    for (const auto& l : w.jobs) check(l.end, l.line);
    for (const auto& l : w.io) check(l.end, l.line);
    for (const auto& l : w.meta) check(l.end, l.line);
    for (const auto& l : w.paths) check(l.end, l.line);
    for (const auto& l : w.load) check(l.end, l.line);
    if (!topo) return;
    auto fail = [](int line, const std::string& why) {
        throw ConfigError("workload line " + std::to_string(line) + ": " + why);
    };
    for (const auto& j : w.jobs) {
        for (const auto& n : j.nodes) {
            const auto* d = topo->domain_of_node(n);
            if (!d || d->role != LustreRole::client) fail(j.line, "'" + n + "' is not a client node");
        }
    }
    // Disjoint membership among concurrently running jobs.
    for (std::size_t a = 0; a < w.jobs.size(); ++a)
        for (std::size_t b = a + 1; b < w.jobs.size(); ++b) {
            const auto &x = w.jobs[a], &y = w.jobs[b];
            if (x.start >= y.end || y.start >= x.end) continue;
            for (const auto& n : x.nodes)
                if (std::find(y.nodes.begin(), y.nodes.end(), n) != y.nodes.end())
                    fail(y.line, "node '" + n + "' also runs job '" + x.job_id + "' at the same time");
        }
    for (const auto& l : w.io) {
        if (l.single_oss.empty()) continue;
        const auto* d = topo->domain_of_node(l.single_oss);
        if (!d || d->role != LustreRole::oss) fail(l.line, "'" + l.single_oss + "' is not an oss node");
    }
    for (const auto& l : w.load)
        if (!topo->domain_of_node(l.node)) fail(l.line, "unknown node '" + l.node + "'");
}

std::string job_map_text(const Workload& w, std::int64_t t)
{
    std::string out;
    for (const auto& j : w.jobs) {
        if (t < j.start || t >= j.end) continue;
        out += j.job_id;
        for (const auto& n : j.nodes) out += " " + n;
        out += "\n";
    }
    return out;
}

// -- synthetic source ---------------------------------------------------------

namespace {

bool active(std::int64_t start, std::int64_t end, std::int64_t s)
{
    return s >= start && s < end;
}

std::uint64_t splitmix(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double total_weight(const Weights& w)
{
    double t = 0;
    for (const auto& [k, v] : w) t += v;
    return t;
}

std::string upper(std::string s)
{
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return s;
}

}  // namespace

SyntheticSource::SyntheticSource(std::shared_ptr<const Workload> workload,
                                 std::shared_ptr<const overlay::OverlayTopology> topo, std::string node,
                                 SyntheticOptions opts)
    : w_(std::move(workload)), topo_(std::move(topo)), node_(std::move(node)), opts_(opts)
{
    const auto* d = topo_->domain_of_node(node_);
    if (!d) throw ConfigError("node '" + node_ + "' is not in the topology");
    role_ = d->role;
    for (const auto& dom : topo_->domains)
        if (dom.role == LustreRole::router) routers_ += dom.members.size();
    for (const auto& j : w_->jobs)
        if (std::find(j.nodes.begin(), j.nodes.end(), node_) != j.nodes.end()) my_jobs_.insert(j.job_id);
    auto osts_of_fs = [this](const std::string& fs) {
        std::vector<std::string> out;
        for (const auto& dom : topo_->domains)
            for (const auto& [oss, list] : dom.osts)
                for (const auto& ost : list)
                    if (topo_->fs_of_ost(ost) == fs) out.push_back(ost);
        return out;
    };
    static const std::vector<std::string> io_counters = {"IO_RD_BYTES", "IO_WR_BYTES", "IO_RD_OPS", "IO_WR_OPS",
                                                         "IO_RD_TIME",  "IO_WR_TIME",  "RPC_REQS",  "RPC_WAIT_TIME"};
    std::vector<std::string> meta_counters = {"META_OPS", "RPC_REQS", "RPC_WAIT_TIME"};
    for (const auto& op : kMetaOps) meta_counters.push_back("META_" + upper(op));
    switch (role_) {
    case LustreRole::client:
        for (const auto& fs : d->filesystems) {
            for (const auto& ost : osts_of_fs(fs))
                for (const auto& c : io_counters) counters_[{c, fs, ost}] = 0;
            for (const auto& c : meta_counters) counters_[{c, fs, overlay::mdt_name(fs)}] = 0;
        }
        gauges_["IO_CLNT_DIRTY"] = 0;
        break;
    case LustreRole::oss:
        if (auto it = d->osts.find(node_); it != d->osts.end())
            for (const auto& ost : it->second) {
                auto fs = topo_->fs_of_ost(ost);
                for (const auto& c : {"IO_RD_BYTES", "IO_WR_BYTES", "RPC_REQS", "RPC_WAIT_TIME", "LOCK_GRANTS",
                                      "LOCK_CANCELS"})
                    counters_[{c, fs, ost}] = 0;
            }
        gauges_["LOCK_COUNT"] = 0;
        break;
    case LustreRole::mds:
        for (const auto& mdt : topo_->mdts_of(node_)) {
            auto fs = mdt.substr(0, mdt.find("-MDT"));
            for (const auto& c : meta_counters)
                if (c != "RPC_REQS" && c != "RPC_WAIT_TIME") counters_[{c, fs, mdt}] = 0;
            counters_[{"LOCK_GRANTS", fs, mdt}] = 0;
            counters_[{"LOCK_CANCELS", fs, mdt}] = 0;
        }
        gauges_["LOCK_COUNT"] = 0;
        break;
    case LustreRole::router:
        for (const auto& fs : topo_->filesystems()) {
            counters_[{"RPC_REQS", fs, ""}] = 0;
            counters_[{"RPC_WAIT_TIME", fs, ""}] = 0;
        }
        break;
    }
}

double SyntheticSource::jitter(const std::string& node, std::int64_t s) const
{
    if (opts_.noise <= 0) return 1.0;
    std::uint64_t h = splitmix(opts_.seed ^ fnv1a64(node) ^ splitmix(static_cast<std::uint64_t>(s)));
    double u = static_cast<double>(h >> 11) / 9007199254740992.0;  // [0, 1)
    return 1.0 + opts_.noise * (2 * u - 1);
}

std::string SyntheticSource::fs_of(const std::string& client) const
{
    const auto* d = topo_->domain_of_node(client);
    return d && !d->filesystems.empty() ? d->filesystems.front() : std::string();
}

std::vector<std::string> SyntheticSource::targets_for(const std::string& client, const IoLine& io) const
{
    auto fs = fs_of(client);
    std::vector<std::string> out;
    for (const auto& dom : topo_->domains)
        for (const auto& [oss, list] : dom.osts) {
            if (!io.single_oss.empty() && oss != io.single_oss) continue;
            for (const auto& ost : list)
                if (topo_->fs_of_ost(ost) == fs) out.push_back(ost);
        }
    return out;
}

void SyntheticSource::step(std::int64_t s)
{
    double dirty = 0;
    std::set<std::pair<std::string, std::string>> lock_pairs;
    std::uint64_t meta_clients = 0;
    const std::size_t routers = routers_;
    const std::vector<std::string> self{node_};
    // A client only simulates its own share of each job.
    auto nodes_of = [&](const JobLine& job) -> const std::vector<std::string>& {
        return role_ == LustreRole::client ? self : job.nodes;
    };

    for (const auto& io : w_->io) {
        if (!active(io.start, io.end, s)) continue;
        const JobLine* job = w_->job(io.job_id);
        if (!job || !active(job->start, job->end, s)) continue;
        if (role_ == LustreRole::client && !my_jobs_.count(job->job_id)) continue;
        for (const auto& c : nodes_of(*job)) {
            bool mine = role_ == LustreRole::client && c == node_;
            if (role_ == LustreRole::client && !mine) continue;
            auto targets = targets_for(c, io);
            if (targets.empty()) continue;
            double f = jitter(c, s);
            double n = static_cast<double>(targets.size());
            double rd = io.read_bps * f / n, wr = io.write_bps * f / n;
            double reqs = (rd + wr) / kRequestSize;
            auto fs = fs_of(c);
            if (mine) dirty += io.write_bps * f * 0.5;
            if (role_ == LustreRole::router) {
                if (routers == 0) continue;
                counters_[{"RPC_REQS", fs, ""}] += reqs * n / static_cast<double>(routers);
                counters_[{"RPC_WAIT_TIME", fs, ""}] += reqs * n * kRpcWait / static_cast<double>(routers);
                continue;
            }
            for (const auto& ost : targets) {
                if (role_ == LustreRole::oss && topo_->oss_of_ost(ost) != node_) continue;
                if (role_ == LustreRole::mds) continue;
                counters_[{"IO_RD_BYTES", fs, ost}] += rd;
                counters_[{"IO_WR_BYTES", fs, ost}] += wr;
                counters_[{"RPC_REQS", fs, ost}] += reqs;
                counters_[{"RPC_WAIT_TIME", fs, ost}] += reqs * kRpcWait;
                if (role_ == LustreRole::client) {
                    counters_[{"IO_RD_OPS", fs, ost}] += rd / kRequestSize;
                    counters_[{"IO_WR_OPS", fs, ost}] += wr / kRequestSize;
                    if (rd > 0) counters_[{"IO_RD_TIME", fs, ost}] += 1.0 / n;
                    if (wr > 0) counters_[{"IO_WR_TIME", fs, ost}] += 1.0 / n;
                } else {
                    counters_[{"LOCK_GRANTS", fs, ost}] += reqs * 0.25;
                    counters_[{"LOCK_CANCELS", fs, ost}] += reqs * 0.25;
                    lock_pairs.emplace(c, ost);
                }
            }
        }
    }

    for (const auto& m : w_->meta) {
        if (!active(m.start, m.end, s)) continue;
        const JobLine* job = w_->job(m.job_id);
        if (!job || !active(job->start, job->end, s) || job->nodes.empty()) continue;
        if (role_ == LustreRole::oss || role_ == LustreRole::router) continue;
        if (role_ == LustreRole::client && !my_jobs_.count(job->job_id)) continue;
        const PathsLine* paths = nullptr;
        for (const auto& p : w_->paths)
            if (p.job_id == m.job_id && active(p.start, p.end, s)) paths = &p;
        double per_client = m.ops_per_sec / static_cast<double>(job->nodes.size());
        double op_total = total_weight(m.ops);
        for (const auto& c : nodes_of(*job)) {
            auto fs = fs_of(c);
            auto mdt = overlay::mdt_name(fs);
            if (role_ == LustreRole::client && c != node_) continue;
            if (role_ == LustreRole::mds && topo_->mds_of_fs(fs) != node_) continue;
            if (role_ == LustreRole::oss || role_ == LustreRole::router) continue;
            counters_[{"META_OPS", fs, mdt}] += per_client;
            for (const auto& [op, wt] : m.ops) counters_[{"META_" + upper(op), fs, mdt}] += per_client * wt / op_total;
            if (role_ == LustreRole::client) {
                counters_[{"RPC_REQS", fs, mdt}] += per_client;
                counters_[{"RPC_WAIT_TIME", fs, mdt}] += per_client * kRpcWait;
                continue;
            }
            counters_[{"LOCK_GRANTS", fs, mdt}] += per_client * 0.5;
            counters_[{"LOCK_CANCELS", fs, mdt}] += per_client * 0.5;
            ++meta_clients;
            for (const auto& [op, wt] : m.ops) {
                double ops = per_client * wt / op_total;
                if (paths) {
                    double pt = total_weight(paths->paths);
                    for (const auto& [path, pw] : paths->paths) tallies_[{c, op, path}] += ops * pw / pt;
                } else {
                    tallies_[{c, op, "/"}] += ops;
                }
            }
        }
    }

    if (role_ == LustreRole::client) gauges_["IO_CLNT_DIRTY"] = dirty;
    if (role_ == LustreRole::oss) gauges_["LOCK_COUNT"] = static_cast<double>(lock_pairs.size());
    if (role_ == LustreRole::mds) gauges_["LOCK_COUNT"] = static_cast<double>(meta_clients);

    gauges_.erase("LOAD_CPU_PCT");
    gauges_.erase("LOAD_MEM_PCT");
    if (role_ == LustreRole::client || role_ == LustreRole::router)
        for (const auto& l : w_->load)
            if (l.node == node_ && active(l.start, l.end, s)) {
                gauges_["LOAD_CPU_PCT"] = l.cpu_pct;
                gauges_["LOAD_MEM_PCT"] = l.mem_pct;
            }
}

void SyntheticSource::advance_to(std::int64_t now)
{
    while (t_ < now) step(t_++);
}

agent::SourceSnapshot SyntheticSource::snapshot(std::int64_t now)
{
    advance_to(now);
    agent::SourceSnapshot snap;
    snap.ts = now;
    snap.counters = counters_;
    snap.gauges = gauges_;
    for (const auto& [key, cum] : tallies_) {
        auto whole = static_cast<std::uint64_t>(std::floor(cum + 1e-9));
        auto& done = emitted_[key];
        for (; done < whole; ++done)
            snap.events.push_back({std::get<1>(key), std::get<2>(key), std::get<0>(key)});
    }
    return snap;
}

}  // namespace melt::sim
