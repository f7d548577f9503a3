#pragma once

// The persistent monitoring daemon: creates the default summary streams,
// polls a job-map adapter, and writes every record it receives to the
// per-filesystem and per-server performance logs.

#include "melt/render.hpp"
#include "melt/session.hpp"
#include "melt/topology.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace melt::meltmon {

inline constexpr std::uint32_t kInterval = 10;
inline constexpr std::uint32_t kDefaultPollSecs = 60;

/// Classes meltmon summarizes per filesystem, in stream-creation order.
const std::vector<metrics::MetricClass>& fs_classes();
/// Lock streams are grouped by server; the client-side classes by job.
GroupBy fs_group(metrics::MetricClass cls);
std::string fs_stream_name(const std::string& fs, metrics::MetricClass cls);
StreamSpec fs_stream(const std::string& fs, metrics::MetricClass cls);
StreamSpec server_stream(const std::string& node, LustreRole role);
/// Every stream meltmon creates for a topology, in creation order.
std::vector<StreamSpec> default_streams(const overlay::OverlayTopology& topo);

/// Parses `<job_id> <node> <node> ...` lines. Blank lines and `#` comments
/// are skipped. Throws ConfigError for a node listed twice or a job without
/// nodes.
std::vector<wire::JobEntry> parse_job_map(std::string_view text);

class JobMapAdapter {
public:
    virtual ~JobMapAdapter() = default;
    /// Current job-map text; throws Error when the source cannot be read.
    virtual std::string read(std::int64_t now) = 0;
};

class FileJobAdapter : public JobMapAdapter {
public:
    explicit FileJobAdapter(std::string path) : path_(std::move(path)) {}
    std::string read(std::int64_t now) override;

private:
    std::string path_;
};

/// Runs a command through the shell and reads its standard output.
class CommandJobAdapter : public JobMapAdapter {
public:
    explicit CommandJobAdapter(std::string command) : command_(std::move(command)) {}
    std::string read(std::int64_t now) override;

private:
    std::string command_;
};

class FunctionJobAdapter : public JobMapAdapter {
public:
    explicit FunctionJobAdapter(std::function<std::string(std::int64_t)> fn) : fn_(std::move(fn)) {}
    std::string read(std::int64_t now) override { return fn_(now); }

private:
    std::function<std::string(std::int64_t)> fn_;
};

/// `file:<path>` or `cmd:<command line>`. Throws UsageError otherwise.
std::unique_ptr<JobMapAdapter> make_job_adapter(const std::string& spec);

class LogSink {
public:
    virtual ~LogSink() = default;
    virtual void write(const std::string& file, const std::string& line) = 0;
};

/// Appends to files in a directory, flushing every line.
class DirectoryLogSink : public LogSink {
public:
    explicit DirectoryLogSink(std::string dir);
    void write(const std::string& file, const std::string& line) override;

private:
    std::string dir_;
    std::map<std::string, std::ofstream> files_;
};

class MemoryLogSink : public LogSink {
public:
    void write(const std::string& file, const std::string& line) override { files[file].push_back(line); }
    std::map<std::string, std::vector<std::string>> files;
};

struct Options {
    std::string name = "meltmon";
    std::string host = "localhost";
    long pid = 0;
    std::uint32_t poll_secs = kDefaultPollSecs;
};

/// One log line for one group of a record.
std::string write_log_record(LogSink& sink, const std::string& file, std::int64_t unix_time, const std::string& host,
                             long pid, const render::Tags& tags, const std::vector<std::string>& metric_names,
                             const std::map<std::string, double>& values);

class Meltmon : public session::ClientLogic {
public:
    Meltmon(const overlay::OverlayTopology& topo, JobMapAdapter& jobs, LogSink& sink, Options opts = {});

    void start(session::Sender& out, std::int64_t now) override;
    void on_message(const wire::Message& msg, std::int64_t now) override;
    void on_tick(std::int64_t now) override;
    void stop() override;
    bool finished() const override { return finished_; }

    /// Local job-map epoch (the root may stamp a higher one).
    std::uint64_t epoch() const { return epoch_; }
    bool failed() const { return !error_.empty(); }
    const std::string& error() const { return error_; }
    /// Stream ids in creation order, once acknowledged.
    const std::vector<std::uint64_t>& stream_ids() const { return ids_; }
    std::uint64_t polls() const { return polls_; }

private:
    void create_next();
    void poll(std::int64_t now);
    void warn(std::int64_t now, const std::string& kind);
    void log_record(const wire::Data& data);

    const overlay::OverlayTopology& topo_;
    JobMapAdapter& jobs_;
    LogSink& sink_;
    Options opts_;
    session::Sender* out_ = nullptr;
    std::vector<StreamSpec> wanted_;
    std::vector<std::uint64_t> ids_;
    std::map<std::uint64_t, std::size_t> index_of_;
    std::vector<std::vector<std::string>> columns_;
    std::int64_t session_epoch_ = 0;
    std::uint64_t epoch_ = 0;
    std::vector<wire::JobEntry> entries_;
    std::int64_t next_poll_ = 0;
    std::uint64_t polls_ = 0;
    bool finished_ = false;
    std::string error_;
};

}  // namespace melt::meltmon
