#include "melt/cli.hpp"

#include "melt/meltmon.hpp"
#include "melt/overlay.hpp"

#include <algorithm>
#include <set>

namespace melt::cli {

using metrics::MetricClass;

std::string_view to_string(Mode mode) { return mode == Mode::status ? "status" : "top"; }

const std::vector<MatrixRow>& matrix()
{
    using C = MetricClass;
    using G = GroupBy;
    static const std::vector<MatrixRow> rows = {
        {TargetKind::fs, Mode::status, {C::io, C::lock, C::meta, C::rpc}, {G::server, G::job}},
        {TargetKind::fs, Mode::top, {C::io, C::lock, C::meta, C::rpc}, {G::server, G::job}},
        {TargetKind::job, Mode::status, {C::io, C::meta}, {G::server}},
        {TargetKind::job, Mode::top, {C::io, C::meta}, {G::server}},
        {TargetKind::oss, Mode::status, {C::io, C::lock, C::rpc}, {G::client, G::job, G::ost}},
        {TargetKind::oss, Mode::top, {C::io, C::lock, C::rpc}, {G::client, G::job, G::ost}},
        {TargetKind::mds, Mode::status, {C::lock, C::meta}, {G::client, G::job}},
        {TargetKind::mds, Mode::top, {C::client, C::op, C::path}, {}},
        {TargetKind::clnt, Mode::status, {C::io, C::meta, C::load, C::rpc}, {G::server, G::job}},
        {TargetKind::clnt, Mode::top, {C::io, C::meta, C::load, C::rpc}, {G::server, G::job}},
    };
    return rows;
}

const MatrixRow& matrix_row(TargetKind target, Mode mode)
{
    for (const auto& r : matrix())
        if (r.target == target && r.mode == mode) return r;
    throw Error("no matrix row");  // every pair has a row
}

namespace {

std::string row_name(const MatrixRow& row)
{
    return std::string(to_string(row.target)) + " " + std::string(to_string(row.mode));
}

std::string class_list(const std::vector<MetricClass>& classes)
{
    std::vector<std::string> out;
    for (auto c : classes) out.emplace_back(metrics::to_string(c));
    return join(out, ", ");
}

std::string group_list(const std::vector<GroupBy>& groups)
{
    std::vector<std::string> out;
    for (auto g : groups) out.emplace_back(to_string(g));
    return out.empty() ? "none" : join(out, ", ");
}

bool has(const std::vector<MetricClass>& v, MetricClass c) { return std::find(v.begin(), v.end(), c) != v.end(); }

std::string upper(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return out;
}

std::string option_value(const std::string& arg, std::string_view flag)
{
    auto v = arg.substr(flag.size());
    if (v.empty()) throw UsageError("option " + std::string(flag) + " needs a value");
    return v;
}

}  // namespace

std::uint32_t parse_duration(std::string_view text)
{
    if (text.size() < 2) throw UsageError("bad duration '" + std::string(text) + "' (expected <int><s|m|h>)");
    std::uint64_t mult = 0;
    switch (text.back()) {
    case 's': mult = 1; break;
    case 'm': mult = 60; break;
    case 'h': mult = 3600; break;
    default: throw UsageError("bad duration '" + std::string(text) + "' (expected <int><s|m|h>)");
    }
    auto n = parse_u64(text.substr(0, text.size() - 1));
    if (!n || *n == 0 || *n * mult > 86400 * 7)
        throw UsageError("bad duration '" + std::string(text) + "' (expected a positive <int><s|m|h>)");
    return static_cast<std::uint32_t>(*n * mult);
}

CliInvocation parse_cli(const std::vector<std::string>& args)
{
    CliInvocation inv;
    std::vector<std::string> pos;
    bool topk = false;
    for (const auto& a : args) {
        if (a.size() < 2 || a[0] != '-') {
            pos.push_back(a);
        } else if (starts_with(a, "-group=")) {
            auto g = parse_group_by(option_value(a, "-group="));
            if (!g || *g == GroupBy::none)
                throw UsageError("bad -group value '" + a.substr(7) + "' (expected client, job, ost, or server)");
            inv.group = g;
        } else if (starts_with(a, "-format=")) {
            auto f = render::parse_format(option_value(a, "-format="));
            if (!f) throw UsageError("bad -format value '" + a.substr(8) + "' (expected human, csv, kv, or log)");
            inv.format = *f;
        } else if (starts_with(a, "-delay=")) {
            inv.delay_secs = parse_duration(option_value(a, "-delay="));
        } else if (starts_with(a, "-topk=")) {
            auto k = parse_u64(option_value(a, "-topk="));
            if (!k || *k == 0) throw UsageError("bad -topk value '" + a.substr(6) + "' (expected an integer >= 1)");
            inv.topk = static_cast<std::size_t>(*k);
            topk = true;
        } else if (starts_with(a, "-topmetric=")) {
            inv.topmetric = option_value(a, "-topmetric=");
        } else if (starts_with(a, "-metrics=")) {
            inv.metrics = split(option_value(a, "-metrics="), ',');
        } else if (a == "-once") {
            inv.once = true;
        } else if (starts_with(a, "--connect=")) {
            inv.connect = option_value(a, "--connect=");
        } else {
            throw UsageError("unknown option '" + a + "'");
        }
    }
    if (pos.size() != 3)
        throw UsageError("expected: target mode classes (got " + std::to_string(pos.size()) + " positional arguments)");
    inv.target = parse_target(pos[0]);
    if (pos[1] == "status") inv.mode = Mode::status;
    else if (pos[1] == "top") inv.mode = Mode::top;
    else throw UsageError("unknown mode '" + pos[1] + "' (expected status or top)");

    const MatrixRow& row = matrix_row(inv.target.kind, inv.mode);
    if (pos[2] == "all") {
        if (inv.mode != Mode::status) throw UsageError("class keyword 'all' is only accepted in status mode");
        inv.classes = row.classes;
    } else {
        for (const auto& name : split(pos[2], ',')) {
            auto cls = metrics::parse_metric_class(name);
            if (!cls || !has(row.classes, *cls))
                throw UsageError("class '" + name + "' is not valid for " + row_name(row) + " (valid: " +
                                 class_list(row.classes) + ")");
            if (has(inv.classes, *cls)) throw UsageError("class '" + name + "' given twice");
            inv.classes.push_back(*cls);
        }
    }
    if (inv.group && std::find(row.groups.begin(), row.groups.end(), *inv.group) == row.groups.end())
        throw UsageError("-group=" + std::string(to_string(*inv.group)) + " is not valid for " + row_name(row) +
                         " (valid: " + group_list(row.groups) + ")");
    if (inv.mode == Mode::status && (topk || !inv.topmetric.empty()))
        throw UsageError("-topk and -topmetric apply to top mode only");

    for (const auto& m : inv.metrics) {
        const auto* def = metrics::find_metric(m);
        if (!def) throw UsageError("unknown metric '" + m + "' in -metrics");
        if (!has(inv.classes, def->cls))
            throw UsageError("metric " + m + " belongs to class " + std::string(metrics::to_string(def->cls)) +
                             ", which is not selected");
    }
    std::set<std::string> uniq(inv.metrics.begin(), inv.metrics.end());
    if (uniq.size() != inv.metrics.size()) throw UsageError("-metrics lists a metric twice");
    if (!inv.topmetric.empty()) {
        const auto* def = metrics::find_metric(inv.topmetric);
        if (!def) throw UsageError("unknown metric '" + inv.topmetric + "' in -topmetric");
        if (!has(inv.classes, def->cls))
            throw UsageError("-topmetric " + inv.topmetric + " is outside the selected classes (" +
                             class_list(inv.classes) + ")");
    }
    return inv;
}

std::string usage()
{
    std::string out =
        "usage: melt [options] target mode classes [mode-opts]\n"
        "  target   fs[=name] | job=id | oss=name | mds=name | clnt=name\n"
        "  mode     status | top\n"
        "  options  -group=client|job|ost|server  -format=human|csv|kv|log  --connect=host:port\n"
        "  mode-opts  -delay=<int><s|m|h>  -topk=N  -topmetric=NAME  -metrics=A,B,...  -once\n"
        "valid combinations:\n";
    for (const auto& r : matrix())
        out += "  " + row_name(r) + ": " + class_list(r.classes) + "  (group: " + group_list(r.groups) + ")\n";
    return out;
}

GroupBy default_group(const CliInvocation& inv)
{
    if (inv.group) return *inv.group;
    if (inv.mode == Mode::status) return GroupBy::none;
    switch (inv.target.kind) {
    case TargetKind::fs:
    case TargetKind::job:
    case TargetKind::clnt: return GroupBy::server;
    case TargetKind::oss: return has(inv.classes, MetricClass::lock) ? GroupBy::ost : GroupBy::client;
    case TargetKind::mds: return GroupBy::none;
    }
    return GroupBy::none;
}

SessionPlan plan_session(const CliInvocation& inv, const std::string& session_name)
{
    SessionPlan plan;
    const GroupBy group = default_group(inv);
    plan.counted = inv.target.kind == TargetKind::mds && inv.mode == Mode::top;

    // Lock metrics come from servers; the other fs classes from clients.
    std::vector<std::vector<MetricClass>> buckets;
    if (inv.target.kind == TargetKind::fs && has(inv.classes, MetricClass::lock) && inv.classes.size() > 1) {
        std::vector<MetricClass> rest;
        for (auto c : inv.classes)
            if (c != MetricClass::lock) rest.push_back(c);
        buckets = {rest, {MetricClass::lock}};
    } else {
        buckets = {inv.classes};
    }

    std::string topmetric = inv.topmetric;
    if (topmetric.empty() && plan.counted) topmetric = metrics::class_metrics(inv.classes.front()).front();

    for (std::size_t k = 0; k < buckets.size(); ++k) {
        const auto& classes = buckets[k];
        std::vector<std::string> named;
        for (const auto& m : inv.metrics)
            if (has(classes, metrics::metric(m).cls)) named.push_back(m);
        std::vector<std::string> carried = named;
        if (!named.empty() && !topmetric.empty() && has(classes, metrics::metric(topmetric).cls) &&
            std::find(named.begin(), named.end(), topmetric) == named.end())
            carried.push_back(topmetric);
        if (!inv.metrics.empty() && carried.empty()) continue;

        StreamPlan sp;
        const MetricClass first = classes.front();
        if (inv.target.kind == TargetKind::fs && !inv.target.name.empty() && classes.size() == 1 && !plan.counted &&
            has(meltmon::fs_classes(), first) && group == meltmon::fs_group(first) &&
            inv.delay_secs == meltmon::kInterval) {
            sp.spec = meltmon::fs_stream(inv.target.name, first);
            sp.shared = true;
        } else {
            StreamSpec& s = sp.spec;
            s.name = "melt." + session_name + "." + std::to_string(k);
            s.target = inv.target;
            if (carried.empty())
                for (auto c : classes) s.metrics.push_back("class:" + std::string(metrics::to_string(c)));
            else
                s.metrics = carried;
            s.aggregation = plan.counted ? Aggregation::counted_key : Aggregation::summary;
            s.group_by = plan.counted ? GroupBy::none : group;
            s.interval_secs = inv.delay_secs;
            s.transient = true;
        }
        auto roles = overlay::producer_roles(sp.spec);
        auto producible = [&](const std::string& name) {
            const auto& def = metrics::metric(name);
            return std::any_of(roles.begin(), roles.end(), [&](LustreRole r) { return metrics::produces(def, r); });
        };
        std::vector<std::string> selected;
        if (carried.empty()) {
            for (const auto& name : metrics::expand_metric_selection(sp.spec.metrics))
                if (producible(name) && has(classes, metrics::metric(name).cls)) selected.push_back(name);
        } else {
            selected = carried;
        }
        sp.columns = named.empty() ? selected : named;
        if (!sp.shared)
            for (const auto& name : selected)
                if (metrics::metric(name).default_interval_secs > inv.delay_secs) sp.boost.push_back(name);
        plan.streams.push_back(std::move(sp));
    }

    if (plan.counted) {
        const auto& def = metrics::metric(topmetric);
        plan.key_names = {def.label};
        plan.columns = {{"COUNT", "COUNT", metrics::Unit::count}};
        plan.topmetric = topmetric;
        return plan;
    }

    std::vector<std::string> cols;
    if (!inv.metrics.empty()) {
        cols = inv.metrics;
    } else {
        std::set<std::string> all;
        for (const auto& sp : plan.streams) all.insert(sp.columns.begin(), sp.columns.end());
        for (const auto& def : metrics::catalog())
            if (all.count(def.name)) cols.push_back(def.name);
    }
    if (cols.empty()) throw UsageError("no selected metric is produced for " + to_string(inv.target));
    for (const auto& c : cols) {
        const auto& def = metrics::metric(c);
        plan.columns.push_back({def.name, def.label, def.unit});
    }
    if (keyed_by_fs(plan.streams.front().spec)) plan.key_names.push_back("FS");
    if (group != GroupBy::none) plan.key_names.push_back(upper(to_string(group)));
    plan.topmetric = topmetric.empty() ? cols.front() : topmetric;
    return plan;
}

MeltClient::MeltClient(CliInvocation inv, std::ostream& out, std::ostream& err, std::string name, std::string host,
                       long pid)
    : inv_(std::move(inv)), out_(out), err_(err), name_(std::move(name)), host_(std::move(host)), pid_(pid),
      plan_(plan_session(inv_, name_))
{
    if (inv_.once) max_frames_ = 1;
}

void MeltClient::start(session::Sender& out, std::int64_t now)
{
    sender_ = &out;
    started_ = now;
    sender_->send(session::session_attach(name_));
}

void MeltClient::create_next()
{
    if (!ready()) sender_->send(wire::CreateStream{plan_.streams[ids_.size()].spec});
}

void MeltClient::fail(int code, const std::string& text)
{
    switch (code) {
    case wire::kErrUnknownTarget: exit_code_ = kExitUnknownTarget; break;
    case wire::kErrMalformedSpec:
    case wire::kErrUnknownMetric:
    case wire::kErrNotAttributable: exit_code_ = kExitUsage; break;
    default: exit_code_ = kExitSession;
    }
    err_ << "melt: " << text << "\n";
    stop();
}

void MeltClient::on_message(const wire::Message& msg, std::int64_t)
{
    if (finished_) return;
    if (const auto* ack = std::get_if<wire::AttachAck>(&msg)) {
        epoch_ = ack->session_epoch;
        create_next();
    } else if (const auto* created = std::get_if<wire::StreamCreated>(&msg)) {
        if (ready()) return;
        index_of_[created->stream_id] = ids_.size();
        ids_.push_back(created->stream_id);
        sender_->send(wire::Subscribe{created->stream_id, wire::Direction::up_consumer});
        if (!ready()) {
            create_next();
            return;
        }
        for (std::size_t i = 0; i < plan_.streams.size(); ++i) {
            const auto& sp = plan_.streams[i];
            if (sp.boost.empty()) continue;
            sender_->send(wire::SetRate{ids_[i], sp.boost, inv_.delay_secs, {}});
            boosted_ = true;
        }
    } else if (const auto* data = std::get_if<wire::Data>(&msg)) {
        auto it = index_of_.find(data->stream_id);
        if (it == index_of_.end() || data->round <= last_emitted_) return;
        // A shared stream drains its backlog on subscribe; only show rounds from now on.
        const auto interval = plan_.streams[it->second].spec.interval_secs;
        if (static_cast<std::int64_t>(data->round * interval) < started_) return;
        auto& slots = pending_[data->round];
        slots.resize(plan_.streams.size());
        try {
            slots[it->second] = metrics::decode_body(data->aggregate_body);
        } catch (const Error& e) {
            err_ << "melt: warning: bad record for round " << data->round << ": " << e.what() << "\n";
            slots[it->second] = metrics::StreamAggregate{};
        }
        try_emit();
    } else if (const auto* err = std::get_if<wire::ErrorMsg>(&msg)) {
        if (!ready()) fail(err->code, err->text);
        else if (err->code == wire::kErrStreamFault) err_ << "melt: warning: " << err->text << "\n";
        else fail(err->code, err->text);
    }
}

void MeltClient::try_emit()
{
    // Newest complete round wins; older incomplete ones are abandoned.
    std::optional<std::uint64_t> complete;
    for (const auto& [round, slots] : pending_)
        if (std::all_of(slots.begin(), slots.end(), [](const auto& s) { return s.has_value(); })) complete = round;
    if (!complete) return;
    std::vector<std::uint64_t> rounds;
    for (const auto& [round, slots] : pending_)
        if (round <= *complete && std::all_of(slots.begin(), slots.end(), [](const auto& s) { return s.has_value(); }))
            rounds.push_back(round);
    for (auto r : rounds) {
        auto frame = build(r);
        bool first = frames_.empty();
        bool header = inv_.mode == Mode::top ? (inv_.format == render::Format::human || first) : first;
        if (!first && inv_.mode == Mode::top && inv_.format == render::Format::human) out_ << "\n";
        out_ << render::render(frame, inv_.format, header);
        out_.flush();
        frames_.push_back(std::move(frame));
        last_emitted_ = r;
        if (max_frames_ && frames_.size() >= max_frames_) {
            stop();
            break;
        }
    }
    pending_.erase(pending_.begin(), pending_.upper_bound(last_emitted_));
}

render::RenderFrame MeltClient::build(std::uint64_t round) const
{
    render::RenderFrame f;
    const auto interval = plan_.streams.front().spec.interval_secs;
    f.time = epoch_ + static_cast<std::int64_t>(round * interval);
    f.show_time = inv_.mode == Mode::status || inv_.format != render::Format::human;
    f.key_names = plan_.key_names;
    f.columns = plan_.columns;
    f.host = host_;
    f.pid = pid_;
    f.context = {{std::string(to_string(inv_.target.kind)), inv_.target.name.empty() ? "all" : inv_.target.name}};
    const auto& slots = pending_.at(round);

    if (plan_.counted) {
        auto it = slots[0]->find(plan_.topmetric);
        if (it == slots[0]->end()) return f;
        if (const auto* ck = std::get_if<metrics::CountedKeyAgg>(&it->second))
            for (const auto& e : metrics::select_topk(*ck, inv_.topk))
                f.rows.push_back({{e.key}, {e.value}});
        return f;
    }

    render::GroupValues values;
    for (std::size_t i = 0; i < slots.size(); ++i)
        for (auto& [key, m] : render::group_values(*slots[i], plan_.streams[i].columns))
            values[key].insert(m.begin(), m.end());

    auto split_key = [&](const std::string& key) -> std::vector<std::string> {
        if (f.key_names.empty()) return {};
        if (f.key_names.size() == 2) {
            auto comma = key.find(',');
            return {key.substr(0, comma), comma == std::string::npos ? "" : key.substr(comma + 1)};
        }
        return {key};
    };
    auto row_for = [&](const std::string& key) {
        render::Row row{split_key(key), {}};
        const auto found = values.find(key);
        for (const auto& c : f.columns) {
            std::optional<double> v;
            if (found != values.end()) {
                auto m = found->second.find(c.name);
                if (m != found->second.end()) v = m->second;
            }
            row.values.push_back(v);
        }
        return row;
    };

    if (inv_.mode == Mode::status) {
        if (f.key_names.empty()) {
            f.rows.push_back(row_for(""));
        } else {
            for (const auto& [key, m] : values) f.rows.push_back(row_for(key));
        }
        return f;
    }
    for (const auto& slot : slots) {
        if (!slot->count(plan_.topmetric)) continue;
        for (const auto& e : metrics::select_topk(*slot, inv_.topk, plan_.topmetric)) f.rows.push_back(row_for(e.key));
        break;
    }
    return f;
}

void MeltClient::stop()
{
    if (finished_) return;
    if (sender_) {
        if (boosted_)
            for (std::size_t i = 0; i < plan_.streams.size() && i < ids_.size(); ++i)
                if (!plan_.streams[i].boost.empty())
                    sender_->send(wire::SetRate{ids_[i], plan_.streams[i].boost, 0, {}});
        sender_->send(wire::Detach{name_});
    }
    finished_ = true;
}

}  // namespace melt::cli
