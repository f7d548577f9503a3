#pragma once

// The interactive `melt` tool: `melt [options] target mode classes [mode-opts]`.

#include "melt/render.hpp"
#include "melt/session.hpp"

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace melt::cli {

enum class Mode { status, top };
std::string_view to_string(Mode mode);

inline constexpr std::uint32_t kDefaultDelaySecs = 60;
inline constexpr std::size_t kDefaultTopK = 10;

struct CliInvocation {
    Target target;
    Mode mode = Mode::status;
    std::vector<metrics::MetricClass> classes;
    std::optional<GroupBy> group;
    render::Format format = render::Format::human;
    std::uint32_t delay_secs = kDefaultDelaySecs;
    std::size_t topk = kDefaultTopK;
    std::string topmetric;             // empty: first selected metric
    std::vector<std::string> metrics;  // empty: every metric of the classes
    bool once = false;
    std::string connect;
};

/// One accepted (target, mode) pair with its classes and groupings.
struct MatrixRow {
    TargetKind target;
    Mode mode;
    std::vector<metrics::MetricClass> classes;
    std::vector<GroupBy> groups;
};

const std::vector<MatrixRow>& matrix();
const MatrixRow& matrix_row(TargetKind target, Mode mode);

/// `<int><s|m|h>`; throws UsageError.
std::uint32_t parse_duration(std::string_view text);

/// Arguments after the program name. Throws UsageError.
CliInvocation parse_cli(const std::vector<std::string>& args);
std::string usage();

enum ExitCode { kExitOk = 0, kExitUsage = 1, kExitSession = 2, kExitUnknownTarget = 3 };

/// Grouping used when -group is not given.
GroupBy default_group(const CliInvocation& inv);

struct StreamPlan {
    StreamSpec spec;
    std::vector<std::string> columns;  // displayed metrics carried by this stream
    /// Metrics whose default sampling interval exceeds the delay.
    std::vector<std::string> boost;
    bool shared = false;  // meltmon's own stream
};

struct SessionPlan {
    std::vector<StreamPlan> streams;
    std::vector<render::Column> columns;
    std::vector<std::string> key_names;
    bool counted = false;  // mds top
    std::string topmetric;
};

SessionPlan plan_session(const CliInvocation& inv, const std::string& session_name);

class MeltClient : public session::ClientLogic {
public:
    MeltClient(CliInvocation inv, std::ostream& out, std::ostream& err, std::string name = "melt",
               std::string host = "localhost", long pid = 0);

    void start(session::Sender& out, std::int64_t now) override;
    void on_message(const wire::Message& msg, std::int64_t now) override;
    void on_tick(std::int64_t) override {}
    void stop() override;
    bool finished() const override { return finished_; }

    /// Stop after this many frames (0 = run until stopped).
    void set_max_frames(std::size_t n) { max_frames_ = n; }
    int exit_code() const { return exit_code_; }
    const SessionPlan& plan() const { return plan_; }
    const std::vector<render::RenderFrame>& frames() const { return frames_; }
    const std::vector<std::uint64_t>& stream_ids() const { return ids_; }
    bool ready() const { return ids_.size() == plan_.streams.size(); }

private:
    void create_next();
    void fail(int code, const std::string& text);
    void try_emit();
    render::RenderFrame build(std::uint64_t round) const;

    CliInvocation inv_;
    std::ostream& out_;
    std::ostream& err_;
    std::string name_;
    std::string host_;
    long pid_;
    SessionPlan plan_;
    session::Sender* sender_ = nullptr;
    std::int64_t epoch_ = 0;
    std::int64_t started_ = 0;
    std::vector<std::uint64_t> ids_;
    std::map<std::uint64_t, std::size_t> index_of_;
    /// Decoded records per round, one slot per stream.
    std::map<std::uint64_t, std::vector<std::optional<metrics::StreamAggregate>>> pending_;
    std::uint64_t last_emitted_ = 0;
    bool boosted_ = false;
    std::vector<render::RenderFrame> frames_;
    std::size_t max_frames_ = 0;
    int exit_code_ = kExitOk;
    bool finished_ = false;
};

}  // namespace melt::cli
