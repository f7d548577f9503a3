#include "melt/metrics.hpp"

#include <algorithm>
#include <sstream>

namespace melt::metrics {

SummaryAgg SummaryAgg::of(double value, std::uint64_t weight)
{
    if (weight == 0) return {};
    return {weight, value * static_cast<double>(weight), value, value};
}

HistogramAgg HistogramAgg::with_edges(std::vector<double> edges)
{
    HistogramAgg h;
    h.counts.assign(edges.size() + 1, 0);
    h.edges = std::move(edges);
    return h;
}

void HistogramAgg::add(double value, std::uint64_t n)
{
    // Bucket 0 is underflow (< edges[0]); the last bucket is overflow.
    auto idx = static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), value) - edges.begin());
    counts.at(idx) += n;
}

std::uint64_t HistogramAgg::total() const
{
    std::uint64_t t = 0;
    for (auto c : counts) t += c;
    return t;
}

SummaryAgg merge(const SummaryAgg& a, const SummaryAgg& b)
{
    if (a.empty()) return b;
    if (b.empty()) return a;
    return {a.count + b.count, a.sum + b.sum, std::min(a.min, b.min), std::max(a.max, b.max)};
}

GroupedAgg merge(const GroupedAgg& a, const GroupedAgg& b)
{
    GroupedAgg out = a;
    for (const auto& [key, s] : b.groups) {
        auto& slot = out.groups[key];
        slot = merge(slot, s);
    }
    return out;
}

HistogramAgg merge(const HistogramAgg& a, const HistogramAgg& b)
{
    if (a.edges.empty() && a.counts.empty()) return b;
    if (b.edges.empty() && b.counts.empty()) return a;
    if (a.edges != b.edges) throw MergeError("histogram edges differ");
    HistogramAgg out = a;
    for (std::size_t i = 0; i < out.counts.size(); ++i) out.counts[i] += b.counts[i];
    return out;
}

CountedKeyAgg merge(const CountedKeyAgg& a, const CountedKeyAgg& b)
{
    CountedKeyAgg out = a;
    for (const auto& [key, n] : b.counts) out.counts[key] += n;
    return out;
}

std::string_view kind_name(const Aggregate& agg)
{
    switch (agg.index()) {
    case 0: return "summary";
    case 1: return "grouped";
    case 2: return "histogram";
    case 3: return "counted-key";
    }
    return "?";
}

Aggregate merge(const Aggregate& a, const Aggregate& b)
{
    if (a.index() != b.index())
        throw MergeError("cannot merge " + std::string(kind_name(a)) + " with " + std::string(kind_name(b)));
    return std::visit(
        [&b](const auto& x) -> Aggregate {
            using T = std::decay_t<decltype(x)>;
            return merge(x, std::get<T>(b));
        },
        a);
}

bool is_empty(const Aggregate& agg)
{
    return std::visit(
        [](const auto& x) {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, SummaryAgg>) return x.empty();
            else if constexpr (std::is_same_v<T, GroupedAgg>) return x.groups.empty();
            else if constexpr (std::is_same_v<T, HistogramAgg>) return x.total() == 0;
            else return x.counts.empty();
        },
        agg);
}

double reduce(const SummaryAgg& agg, const MetricDef& def)
{
    if (agg.empty()) return 0;
    if (def.reduce == Reduce::mean) return agg.sum / static_cast<double>(agg.count);
    return agg.sum;
}

namespace {

// Keyed aggregates grow in place rather than being copied per merge.
void merge_in_place(Aggregate& into, const Aggregate& from)
{
    if (into.index() == from.index()) {
        if (auto* g = std::get_if<GroupedAgg>(&into)) {
            for (const auto& [key, s] : std::get<GroupedAgg>(from).groups) {
                auto& slot = g->groups[key];
                slot = merge(slot, s);
            }
            return;
        }
        if (auto* c = std::get_if<CountedKeyAgg>(&into)) {
            for (const auto& [key, n] : std::get<CountedKeyAgg>(from).counts) c->counts[key] += n;
            return;
        }
    }
    into = merge(into, from);
}

}  // namespace

void merge_into(StreamAggregate& into, const StreamAggregate& from)
{
    for (const auto& [name, agg] : from) {
        auto it = into.find(name);
        if (it == into.end()) into.emplace(name, agg);
        else merge_in_place(it->second, agg);
    }
}

StreamAggregate merge(const StreamAggregate& a, const StreamAggregate& b)
{
    StreamAggregate out = a;
    merge_into(out, b);
    return out;
}

void fold_sample(StreamAggregate& agg, const StreamSpec& spec, const Sample& sample)
{
    Aggregate piece;
    switch (spec.aggregation) {
    case Aggregation::counted_key: {
        CountedKeyAgg c;
        if (sample.weight == 0) return;
        c.counts[sample.group_key] = sample.weight;
        piece = std::move(c);
        break;
    }
    case Aggregation::histogram: {
        auto h = HistogramAgg::with_edges(spec.edges);
        h.add(sample.value);
        piece = std::move(h);
        break;
    }
    case Aggregation::summary:
        if (sample.weight == 0) return;
        if (!is_grouped(spec)) {
            piece = SummaryAgg::of(sample.value, sample.weight);
        } else {
            GroupedAgg g;
            g.groups[sample.group_key] = SummaryAgg::of(sample.value, sample.weight);
            piece = std::move(g);
        }
        break;
    }
    merge_into(agg, StreamAggregate{{sample.metric, std::move(piece)}});
}

namespace {

void check_token(const std::string& token, std::string_view what)
{
    if (token.empty()) throw Error(std::string(what) + " is empty");
    for (char c : token)
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r')
            throw Error(std::string(what) + " '" + token + "' contains whitespace");
}

double need_double(std::string_view text)
{
    auto d = parse_double(text);
    if (!d) throw Error("bad number '" + std::string(text) + "' in aggregate body");
    return *d;
}

std::uint64_t need_u64(std::string_view text)
{
    auto v = parse_u64(text);
    if (!v) throw Error("bad count '" + std::string(text) + "' in aggregate body");
    return *v;
}

std::string summary_fields(const SummaryAgg& s)
{
    return std::to_string(s.count) + ' ' + format_double(s.sum) + ' ' + format_double(s.min) + ' ' +
           format_double(s.max);
}

SummaryAgg read_summary(const std::vector<std::string_view>& f, std::size_t at)
{
    SummaryAgg s{need_u64(f[at]), need_double(f[at + 1]), need_double(f[at + 2]), need_double(f[at + 3])};
    if (s.count == 0) throw Error("summary with zero count in aggregate body");
    return s;
}

std::vector<std::string_view> fields(std::string_view line, char sep)
{
    std::vector<std::string_view> out;
    std::size_t at = 0;
    while (true) {
        auto p = line.find(sep, at);
        out.push_back(line.substr(at, p == std::string_view::npos ? std::string_view::npos : p - at));
        if (p == std::string_view::npos) break;
        at = p + 1;
    }
    return out;
}

}  // namespace

std::string encode_body(const StreamAggregate& agg)
{
    std::ostringstream out;
    for (const auto& [name, a] : agg) {
        check_token(name, "metric name");
        std::visit(
            [&out, &name](const auto& x) {
                using T = std::decay_t<decltype(x)>;
                if constexpr (std::is_same_v<T, SummaryAgg>) {
                    if (!x.empty()) out << "S " << name << ' ' << summary_fields(x) << '\n';
                } else if constexpr (std::is_same_v<T, GroupedAgg>) {
                    for (const auto& [key, s] : x.groups) {
                        check_token(key, "group key");
                        if (!s.empty()) out << "G " << name << ' ' << key << ' ' << summary_fields(s) << '\n';
                    }
                } else if constexpr (std::is_same_v<T, HistogramAgg>) {
                    if (x.edges.empty()) return;
                    std::vector<std::string> e, c;
                    for (double d : x.edges) e.push_back(format_double(d));
                    for (auto n : x.counts) c.push_back(std::to_string(n));
                    out << "H " << name << ' ' << join(e, ",") << ' ' << join(c, ",") << '\n';
                } else {
                    for (const auto& [key, n] : x.counts) {
                        check_token(key, "counted key");
                        if (n) out << "C " << name << ' ' << key << ' ' << n << '\n';
                    }
                }
            },
            a);
    }
    return out.str();
}

StreamAggregate decode_body(std::string_view body)
{
    StreamAggregate agg;
    for (auto line : fields(body, '\n')) {
        if (line.empty()) continue;
        auto f = fields(line, ' ');
        if (f.size() < 2) throw Error("short aggregate line '" + std::string(line) + "'");
        const std::string name(f[1]);
        Aggregate piece;
        if (f[0] == "S" && f.size() == 6) {
            piece = read_summary(f, 2);
        } else if (f[0] == "G" && f.size() == 7) {
            GroupedAgg g;
            g.groups[std::string(f[2])] = read_summary(f, 3);
            piece = std::move(g);
        } else if (f[0] == "H" && f.size() == 4) {
            std::vector<double> edges;
            for (auto e : fields(f[2], ',')) edges.push_back(need_double(e));
            auto h = HistogramAgg::with_edges(edges);
            auto counts = fields(f[3], ',');
            if (counts.size() != h.counts.size()) throw Error("histogram bucket count mismatch");
            for (std::size_t i = 0; i < counts.size(); ++i) h.counts[i] = need_u64(counts[i]);
            piece = std::move(h);
        } else if (f[0] == "C" && f.size() == 4) {
            CountedKeyAgg c;
            c.counts[std::string(f[2])] = need_u64(f[3]);
            piece = std::move(c);
        } else {
            throw Error("malformed aggregate line '" + std::string(line) + "'");
        }
        auto it = agg.find(name);
        if (it == agg.end()) agg.emplace(name, std::move(piece));
        else merge_in_place(it->second, piece);
    }
    return agg;
}

namespace {

std::vector<RankedEntry> rank(std::vector<RankedEntry> entries, std::size_t k, Order order)
{
    if (k == 0) throw Error("top-k needs k >= 1");
    std::sort(entries.begin(), entries.end(), [order](const RankedEntry& a, const RankedEntry& b) {
        if (a.value != b.value) return order == Order::desc ? a.value > b.value : a.value < b.value;
        return a.key < b.key;
    });
    if (entries.size() > k) entries.resize(k);
    return entries;
}

}  // namespace

std::vector<RankedEntry> select_topk(const GroupedAgg& agg, std::size_t k, const MetricDef& key_metric, Order order)
{
    std::vector<RankedEntry> entries;
    entries.reserve(agg.groups.size());
    for (const auto& [key, s] : agg.groups) entries.push_back({key, reduce(s, key_metric)});
    return rank(std::move(entries), k, order);
}

std::vector<RankedEntry> select_topk(const CountedKeyAgg& agg, std::size_t k, Order order)
{
    std::vector<RankedEntry> entries;
    entries.reserve(agg.counts.size());
    for (const auto& [key, n] : agg.counts) entries.push_back({key, static_cast<double>(n)});
    return rank(std::move(entries), k, order);
}

std::vector<RankedEntry> select_topk(const StreamAggregate& agg, std::size_t k, std::string_view key_metric,
                                     Order order)
{
    auto it = agg.find(std::string(key_metric));
    if (it == agg.end()) throw Error("key metric '" + std::string(key_metric) + "' is not in the aggregate");
    if (auto* g = std::get_if<GroupedAgg>(&it->second)) return select_topk(*g, k, metric(key_metric), order);
    if (auto* c = std::get_if<CountedKeyAgg>(&it->second)) return select_topk(*c, k, order);
    throw Error("key metric '" + std::string(key_metric) + "' is not grouped");
}

}  // namespace melt::metrics
