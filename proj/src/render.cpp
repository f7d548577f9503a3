#include "melt/render.hpp"

#include <algorithm>
#include <ctime>
#include <regex>
#include <sstream>

namespace melt::render {

std::string_view to_string(Format f)
{
    switch (f) {
    case Format::human: return "human";
    case Format::csv: return "csv";
    case Format::kv: return "kv";
    case Format::log: return "log";
    }
    return "?";
}

std::optional<Format> parse_format(std::string_view text)
{
    for (auto f : {Format::human, Format::csv, Format::kv, Format::log})
        if (to_string(f) == text) return f;
    return std::nullopt;
}

namespace {

std::tm utc(std::int64_t t)
{
    std::time_t tt = static_cast<std::time_t>(t);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    return tm;
}

std::string lower(std::string s)
{
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::string compact(const Row& row, std::size_t i, const Column& c)
{
    return metrics::humanize(row.values[i].value_or(0.0), c.unit, metrics::Style::compact);
}

}  // namespace

GroupValues group_values(const metrics::StreamAggregate& agg, const std::vector<std::string>& metric_names)
{
    GroupValues out;
    for (const auto& name : metric_names) {
        auto it = agg.find(name);
        if (it == agg.end()) continue;
        const auto& def = metrics::metric(name);
        if (const auto* s = std::get_if<metrics::SummaryAgg>(&it->second)) {
            if (!s->empty()) out[""][name] = metrics::reduce(*s, def);
        } else if (const auto* g = std::get_if<metrics::GroupedAgg>(&it->second)) {
            for (const auto& [key, s] : g->groups)
                if (!s.empty()) out[key][name] = metrics::reduce(s, def);
        }
    }
    return out;
}

std::string format_clock(std::int64_t unix_time)
{
    auto tm = utc(unix_time);
    char buf[16];
    std::snprintf(buf, sizeof buf, "%02d:%02d:%02d", tm.tm_hour, tm.tm_min, tm.tm_sec);
    return buf;
}

std::string format_log_time(std::int64_t unix_time)
{
    static const char* months[] = {"Jan", "Feb", "Mar", "Apr", "May", "Jun",
                                   "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};
    auto tm = utc(unix_time);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s %2d %02d:%02d:%02d", months[tm.tm_mon], tm.tm_mday, tm.tm_hour, tm.tm_min,
                  tm.tm_sec);
    return buf;
}

std::string format_log_line(std::int64_t unix_time, const std::string& host, long pid, const Tags& tags,
                            const Tags& values)
{
    std::string out = format_log_time(unix_time) + " " + host + " melt[" + std::to_string(pid) + "]:";
    for (const auto& [k, v] : tags) out += " " + k + "=" + v;
    for (const auto& [k, v] : values) out += " " + k + "=" + v;
    return out;
}

std::string render(const RenderFrame& frame, Format format, bool with_header)
{
    std::ostringstream out;
    const auto& cols = frame.columns;
    switch (format) {
    case Format::human: {
        std::vector<std::string> header;
        std::vector<std::vector<std::string>> cells;
        if (frame.show_time) header.push_back("TIME");
        for (const auto& k : frame.key_names) header.push_back(k);
        for (const auto& c : cols) header.push_back(c.label);
        for (const auto& row : frame.rows) {
            std::vector<std::string> line;
            if (frame.show_time) line.push_back(format_clock(frame.time));
            for (const auto& k : row.keys) line.push_back(k);
            for (std::size_t i = 0; i < cols.size(); ++i)
                line.push_back(metrics::humanize(row.values[i].value_or(0.0), cols[i].unit, metrics::Style::human));
            cells.push_back(std::move(line));
        }
        const std::size_t nkeys = header.size() - cols.size();
        std::vector<std::size_t> width(header.size());
        for (std::size_t i = 0; i < header.size(); ++i) {
            width[i] = std::max(header[i].size(), i < nkeys ? std::size_t{8} : std::size_t{9});
            for (const auto& line : cells) width[i] = std::max(width[i], line[i].size());
        }
        auto emit = [&](const std::vector<std::string>& line) {
            std::string text;
            for (std::size_t i = 0; i < line.size(); ++i) {
                if (i) text += "  ";
                std::string cell = line[i];
                if (i + 1 < line.size()) cell.resize(width[i], ' ');
                text += cell;
            }
            out << text << "\n";
        };
        if (with_header) emit(header);
        for (const auto& line : cells) emit(line);
        break;
    }
    case Format::csv: {
        if (with_header) {
            std::vector<std::string> h;
            if (frame.show_time) h.push_back("TIME");
            for (const auto& k : frame.key_names) h.push_back(k);
            for (const auto& c : cols) h.push_back(c.name);
            out << join(h, ",") << "\n";
        }
        for (const auto& row : frame.rows) {
            std::vector<std::string> f;
            if (frame.show_time) f.push_back(format_clock(frame.time));
            for (const auto& k : row.keys) f.push_back(k);
            for (std::size_t i = 0; i < cols.size(); ++i) f.push_back(format_double(row.values[i].value_or(0.0)));
            out << join(f, ",") << "\n";
        }
        break;
    }
    case Format::kv:
        for (const auto& row : frame.rows) {
            std::vector<std::string> f;
            if (frame.show_time) f.push_back("TIME=" + format_clock(frame.time));
            for (std::size_t k = 0; k < frame.key_names.size(); ++k) f.push_back(frame.key_names[k] + "=" + row.keys[k]);
            for (std::size_t i = 0; i < cols.size(); ++i) f.push_back(cols[i].name + "=" + compact(row, i, cols[i]));
            out << join(f, " ") << "\n";
        }
        break;
    case Format::log:
        for (const auto& row : frame.rows) {
            Tags tags, values;
            for (std::size_t k = 0; k < frame.key_names.size(); ++k)
                tags.emplace_back(lower(frame.key_names[k]), row.keys[k]);
            if (tags.empty()) tags = frame.context;
            for (std::size_t i = 0; i < cols.size(); ++i) values.emplace_back(cols[i].name, compact(row, i, cols[i]));
            out << format_log_line(frame.time, frame.host, frame.pid, tags, values) << "\n";
        }
        break;
    }
    return out.str();
}

const std::string& log_line_pattern()
{
    static const std::string pattern =
        R"(^(Jan|Feb|Mar|Apr|May|Jun|Jul|Aug|Sep|Oct|Nov|Dec) ( [1-9]|[12][0-9]|3[01]) )"
        R"(([01][0-9]|2[0-3]):[0-5][0-9]:[0-5][0-9] [^ ]+ melt\[[0-9]+\]:)"
        R"(( [a-z]+=[^ =]+)+( [A-Z][A-Z0-9_]*=[^ =]+)*$)";
    return pattern;
}

bool is_log_line(const std::string& line)
{
    static const std::regex re(log_line_pattern());
    return std::regex_match(line, re);
}

LogRecord parse_log_line(const std::string& line)
{
    if (!is_log_line(line)) throw metrics::ParseError("not a melt log line: '" + line + "'");
    LogRecord rec;
    rec.stamp = line.substr(0, 15);
    auto words = split_ws(line.substr(16));
    rec.host = words.at(0);
    const std::string& tag = words.at(1);  // melt[pid]:
    rec.pid = static_cast<long>(*parse_i64(tag.substr(5, tag.size() - 7)));
    for (std::size_t i = 2; i < words.size(); ++i) {
        auto eq = words[i].find('=');
        std::string k = words[i].substr(0, eq), v = words[i].substr(eq + 1);
        if (std::islower(static_cast<unsigned char>(k[0]))) rec.tags.emplace_back(k, v);
        else rec.values.emplace_back(k, metrics::parse_human(v));
    }
    return rec;
}

}  // namespace melt::render
