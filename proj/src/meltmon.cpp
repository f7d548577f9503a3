#include "melt/meltmon.hpp"

#include "melt/overlay.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <set>
#include <sys/wait.h>

namespace melt::meltmon {

using metrics::MetricClass;

const std::vector<MetricClass>& fs_classes()
{
    static const std::vector<MetricClass> c = {MetricClass::io, MetricClass::lock, MetricClass::meta, MetricClass::rpc};
    return c;
}

GroupBy fs_group(MetricClass cls) { return cls == MetricClass::lock ? GroupBy::server : GroupBy::job; }

std::string fs_stream_name(const std::string& fs, MetricClass cls)
{
    return "meltmon." + fs + "." + std::string(metrics::to_string(cls));
}

StreamSpec fs_stream(const std::string& fs, MetricClass cls)
{
    StreamSpec s;
    s.name = fs_stream_name(fs, cls);
    s.target = {TargetKind::fs, fs};
    s.metrics = {"class:" + std::string(metrics::to_string(cls))};
    s.group_by = fs_group(cls);
    s.interval_secs = kInterval;
    return s;
}

StreamSpec server_stream(const std::string& node, LustreRole role)
{
    StreamSpec s;
    s.name = "meltmon." + node;
    if (role == LustreRole::oss) {
        s.target = {TargetKind::oss, node};
        s.metrics = {"class:io", "class:lock", "class:rpc"};
    } else {
        s.target = {TargetKind::mds, node};
        s.metrics = {"class:lock", "class:meta"};
    }
    s.interval_secs = kInterval;
    return s;
}

std::vector<StreamSpec> default_streams(const overlay::OverlayTopology& topo)
{
    std::vector<StreamSpec> out;
    for (const auto& fs : topo.filesystems())
        for (auto cls : fs_classes()) out.push_back(fs_stream(fs, cls));
    for (auto role : {LustreRole::oss, LustreRole::mds})
        for (const auto& d : topo.domains)
            if (d.role == role)
                for (const auto& m : d.members) out.push_back(server_stream(m, role));
    return out;
}

std::vector<wire::JobEntry> parse_job_map(std::string_view text)
{
    std::vector<wire::JobEntry> out;
    std::set<std::string> seen_nodes, seen_jobs;
    int lineno = 0;
    for (const auto& raw : split(text, '\n')) {
        ++lineno;
        auto line = std::string(trim(raw));
        if (line.empty() || line[0] == '#') continue;
        auto words = split_ws(line);
        auto where = "job map line " + std::to_string(lineno) + ": ";
        if (words.size() < 2) throw ConfigError(where + "job '" + words[0] + "' lists no nodes");
        if (!seen_jobs.insert(words[0]).second) throw ConfigError(where + "job '" + words[0] + "' listed twice");
        wire::JobEntry e{words[0], {}};
        for (std::size_t i = 1; i < words.size(); ++i) {
            if (!seen_nodes.insert(words[i]).second)
                throw ConfigError(where + "node '" + words[i] + "' is listed in two jobs");
            e.nodes.push_back(words[i]);
        }
        out.push_back(std::move(e));
    }
    return out;
}

std::string FileJobAdapter::read(std::int64_t)
{
    std::ifstream in(path_);
    if (!in) throw Error("cannot read job map '" + path_ + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw Error("error reading job map '" + path_ + "'");
    return text;
}

std::string CommandJobAdapter::read(std::int64_t)
{
    FILE* p = ::popen(command_.c_str(), "r");
    if (!p) throw Error("cannot run job map command '" + command_ + "'");
    std::string text;
    std::array<char, 4096> buf{};
    std::size_t n;
    while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) text.append(buf.data(), n);
    int status = ::pclose(p);
    if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0)
        throw Error("job map command '" + command_ + "' failed");
    return text;
}

std::unique_ptr<JobMapAdapter> make_job_adapter(const std::string& spec)
{
    if (starts_with(spec, "file:") && spec.size() > 5) return std::make_unique<FileJobAdapter>(spec.substr(5));
    if (starts_with(spec, "cmd:") && spec.size() > 4) return std::make_unique<CommandJobAdapter>(spec.substr(4));
    throw UsageError("job map source must be file:<path> or cmd:<command>, got '" + spec + "'");
}

DirectoryLogSink::DirectoryLogSink(std::string dir) : dir_(std::move(dir))
{
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw Error("cannot create log directory '" + dir_ + "': " + ec.message());
}

void DirectoryLogSink::write(const std::string& file, const std::string& line)
{
    auto it = files_.find(file);
    if (it == files_.end()) {
        std::ofstream f(std::filesystem::path(dir_) / file, std::ios::app);
        if (!f) throw Error("cannot open log file '" + file + "' in '" + dir_ + "'");
        it = files_.emplace(file, std::move(f)).first;
    }
    it->second << line << '\n';
    it->second.flush();
}

std::string write_log_record(LogSink& sink, const std::string& file, std::int64_t unix_time, const std::string& host,
                             long pid, const render::Tags& tags, const std::vector<std::string>& metric_names,
                             const std::map<std::string, double>& values)
{
    render::Tags kv;
    for (const auto& name : metric_names) {
        auto it = values.find(name);
        kv.emplace_back(name, metrics::humanize(it == values.end() ? 0.0 : it->second, metrics::metric(name).unit,
                                                metrics::Style::compact));
    }
    auto line = render::format_log_line(unix_time, host, pid, tags, kv);
    sink.write(file, line);
    return line;
}

Meltmon::Meltmon(const overlay::OverlayTopology& topo, JobMapAdapter& jobs, LogSink& sink, Options opts)
    : topo_(topo), jobs_(jobs), sink_(sink), opts_(std::move(opts)), wanted_(default_streams(topo))
{
    if (opts_.poll_secs < 1) throw UsageError("poll interval must be at least 1 s");
    for (const auto& s : wanted_) {
        auto roles = overlay::producer_roles(s);
        std::vector<std::string> cols;
        for (const auto& name : metrics::expand_metric_selection(s.metrics)) {
            const auto& def = metrics::metric(name);
            if (std::any_of(roles.begin(), roles.end(), [&](LustreRole r) { return metrics::produces(def, r); }))
                cols.push_back(name);
        }
        columns_.push_back(std::move(cols));
    }
}

void Meltmon::start(session::Sender& out, std::int64_t now)
{
    out_ = &out;
    out_->send(session::session_attach(opts_.name));
    poll(now);
}

void Meltmon::create_next()
{
    if (ids_.size() < wanted_.size()) out_->send(wire::CreateStream{wanted_[ids_.size()]});
}

void Meltmon::on_message(const wire::Message& msg, std::int64_t now)
{
    if (finished_) return;
    if (const auto* ack = std::get_if<wire::AttachAck>(&msg)) {
        session_epoch_ = ack->session_epoch;
        create_next();
    } else if (const auto* created = std::get_if<wire::StreamCreated>(&msg)) {
        index_of_[created->stream_id] = ids_.size();
        ids_.push_back(created->stream_id);
        out_->send(wire::Subscribe{created->stream_id, wire::Direction::up_consumer});
        create_next();
    } else if (const auto* data = std::get_if<wire::Data>(&msg)) {
        log_record(*data);
    } else if (const auto* err = std::get_if<wire::ErrorMsg>(&msg)) {
        if (ids_.size() < wanted_.size()) {
            error_ = "stream '" + wanted_[ids_.size()].name + "' rejected: " + err->text;
            stop();
        } else if (err->code == wire::kErrStreamFault) {
            warn(now, "stream-fault");
        } else {
            warn(now, "root-error");
        }
    }
}

void Meltmon::on_tick(std::int64_t now)
{
    if (!finished_ && now >= next_poll_) poll(now);
}

void Meltmon::stop()
{
    if (finished_) return;
    if (out_) out_->send(wire::Detach{opts_.name});
    finished_ = true;
}

void Meltmon::poll(std::int64_t now)
{
    next_poll_ = now + opts_.poll_secs;
    ++polls_;
    std::vector<wire::JobEntry> entries;
    try {
        entries = parse_job_map(jobs_.read(now));
    } catch (const ConfigError&) {
        warn(now, "jobmap-parse");
        return;
    } catch (const Error&) {
        warn(now, "jobmap-unreadable");
        return;
    }
    if (epoch_ > 0 && entries == entries_) return;
    entries_ = std::move(entries);
    ++epoch_;
    out_->send(wire::JobMapUpdate{epoch_, entries_});
}

void Meltmon::warn(std::int64_t now, const std::string& kind)
{
    sink_.write("melt-meltmon.log", render::format_log_line(session_epoch_ + now, opts_.host, opts_.pid,
                                                            {{"warning", kind}}, {}));
}

void Meltmon::log_record(const wire::Data& data)
{
    auto it = index_of_.find(data.stream_id);
    if (it == index_of_.end()) return;
    const StreamSpec& spec = wanted_[it->second];
    const auto& cols = columns_[it->second];
    metrics::StreamAggregate agg;
    try {
        agg = metrics::decode_body(data.aggregate_body);
    } catch (const Error&) {
        return;
    }
    const std::int64_t t = session_epoch_ + static_cast<std::int64_t>(data.round) * spec.interval_secs;
    const std::string file = "melt-" + spec.target.name + ".log";
    const std::string tag(spec.target.kind == TargetKind::fs ? to_string(spec.group_by) : to_string(spec.target.kind));
    for (const auto& [key, values] : render::group_values(agg, cols)) {
        render::Tags tags{{tag, key.empty() ? spec.target.name : key}};
        write_log_record(sink_, file, t, opts_.host, opts_.pid, tags, cols, values);
    }
}

}  // namespace melt::meltmon
