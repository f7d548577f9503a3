#include "melt/humanize.hpp"
#include "melt/metrics.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <iomanip>
#include <sstream>

using namespace melt;
using namespace melt::metrics;

namespace {

// Reference compact formatter for byte quantities, written from the rule
// table rather than shared with the library.
std::string reference_compact_bytes(double v, bool rate)
{
    const std::string suffix = rate ? "/s" : "";
    if (v == 0) return "0B" + suffix;
    const char* units[] = {"B", "K", "M", "G", "T"};
    int k = 0;
    while (k < 4 && v >= std::pow(1024.0, k + 1)) ++k;
    double m = v / std::pow(1024.0, k);
    std::ostringstream out;
    double tenth = std::round(m * 10) / 10;
    if (tenth < 10 && std::fmod(tenth, 1.0) != 0) out << std::fixed << std::setprecision(1) << tenth;
    else out << std::llround(m);
    return out.str() + units[k] + suffix;
}

}  // namespace

TEST(Catalog, RolesMatchMatrix)
{
    auto has = [](LustreRole r, const std::string& name) {
        auto c = catalog_for_role(r);
        return std::any_of(c.begin(), c.end(), [&](const MetricDef& d) { return d.name == name; });
    };
    EXPECT_TRUE(has(LustreRole::oss, "IO_RD_BW"));
    EXPECT_FALSE(has(LustreRole::oss, "META_OP_RATE"));
    EXPECT_TRUE(has(LustreRole::client, "LOAD_CPU_PCT"));
    EXPECT_FALSE(catalog_for_role(LustreRole::router).empty());
    EXPECT_TRUE(has(LustreRole::router, "LOAD_CPU_PCT"));
    EXPECT_TRUE(role_has_class(LustreRole::mds, MetricClass::path));
    EXPECT_FALSE(role_has_class(LustreRole::client, MetricClass::lock));
}

TEST(Catalog, RoleListIsSortedByName)
{
    for (auto r : {LustreRole::client, LustreRole::oss, LustreRole::mds, LustreRole::router}) {
        auto c = catalog_for_role(r);
        EXPECT_TRUE(std::is_sorted(c.begin(), c.end(), [](const auto& a, const auto& b) { return a.name < b.name; }));
    }
}

TEST(Catalog, Labels)
{
    EXPECT_EQ(metric("IO_RD_BW").label, "RD_BW");
    EXPECT_EQ(metric("IO_WR_BW").label, "WR_BW");
    EXPECT_EQ(metric("META_OP_RATE").label, "MD_RATE");
    EXPECT_EQ(metric("IO_CLNT_AVG_RD_SZ").label, "RD_SZ");
    EXPECT_EQ(metric("IO_CLNT_AVG_RD_TIME").label, "RD_TIME");
    EXPECT_EQ(metric("LOCK_GRANT_RATE").label, "GRANT_RATE");
    EXPECT_THROW(metric("NOPE"), ConfigError);
    EXPECT_EQ(find_metric("NOPE"), nullptr);
}

TEST(Catalog, ClassSelection)
{
    auto io = expand_metric_selection({"class:io"});
    EXPECT_EQ(io, class_metrics(MetricClass::io));
    EXPECT_NE(std::find(io.begin(), io.end(), "IO_CLNT_AVG_RD_SZ"), io.end());
    EXPECT_EQ(parse_metric_class("meta"), MetricClass::meta);
    EXPECT_FALSE(parse_metric_class("disk"));
}

TEST(Rates, FromCounters)
{
    EXPECT_EQ(*rate_from_counters(0, 2097152, 2).value, 1048576);
    EXPECT_EQ(*rate_from_counters(5, 5, 1).value, 0);
    auto r = rate_from_counters(10, 3, 1);
    EXPECT_FALSE(r.value);
    EXPECT_TRUE(r.reset);
    EXPECT_THROW(rate_from_counters(0, 1, 0), Error);
}

TEST(Merge, SummaryExample)
{
    SummaryAgg a{2, 10, 1, 9}, b{3, 6, 2, 4};
    EXPECT_EQ(merge(a, b), (SummaryAgg{5, 16, 1, 9}));
    EXPECT_EQ(merge(a, SummaryAgg{}), a);
    EXPECT_EQ(merge(SummaryAgg{}, b), b);
}

TEST(Merge, KindMismatchThrows)
{
    EXPECT_THROW(merge(Aggregate{SummaryAgg{1, 1, 1, 1}}, Aggregate{GroupedAgg{}}), MergeError);
    EXPECT_THROW(merge(HistogramAgg::with_edges({1}), HistogramAgg::with_edges({2})), MergeError);
}

TEST(Merge, RandomTreeShapesMatchFlatFold)
{
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> val(0, 1e9);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> xs(1000);
        for (auto& x : xs) x = val(rng);
        SummaryAgg flat;
        for (double x : xs) flat = merge(flat, SummaryAgg::of(x));
        // Random binary merge tree over singleton leaves.
        std::vector<SummaryAgg> level;
        for (double x : xs) level.push_back(SummaryAgg::of(x));
        while (level.size() > 1) {
            std::shuffle(level.begin(), level.end(), rng);
            std::vector<SummaryAgg> next;
            for (std::size_t i = 0; i + 1 < level.size(); i += 2) next.push_back(merge(level[i], level[i + 1]));
            if (level.size() % 2) next.push_back(level.back());
            level = std::move(next);
        }
        EXPECT_EQ(level[0].count, flat.count);
        EXPECT_EQ(level[0].min, flat.min);
        EXPECT_EQ(level[0].max, flat.max);
        EXPECT_NEAR(level[0].sum, flat.sum, 1e-9 * flat.sum);
    }
}

TEST(Merge, AlgebraPerKind)
{
    std::mt19937_64 rng(5);
    auto grouped = [&] {
        GroupedAgg g;
        for (int i = 0; i < 4; ++i) g.groups["k" + std::to_string(rng() % 6)] = SummaryAgg::of(static_cast<double>(rng() % 100));
        return g;
    };
    auto counted = [&] {
        CountedKeyAgg c;
        for (int i = 0; i < 4; ++i) c.counts["p" + std::to_string(rng() % 6)] += 1 + rng() % 5;
        return c;
    };
    auto hist = [&] {
        auto h = HistogramAgg::with_edges({1, 10, 100});
        for (int i = 0; i < 10; ++i) h.add(static_cast<double>(rng() % 200));
        return h;
    };
    for (int t = 0; t < 100; ++t) {
        auto a = counted(), b = counted(), c = counted();
        EXPECT_EQ(merge(merge(a, b), c), merge(a, merge(b, c)));
        EXPECT_EQ(merge(a, b), merge(b, a));
        EXPECT_EQ(merge(a, CountedKeyAgg{}), a);
        auto h1 = hist(), h2 = hist(), h3 = hist();
        EXPECT_EQ(merge(merge(h1, h2), h3), merge(h1, merge(h2, h3)));
        EXPECT_EQ(merge(h1, h2), merge(h2, h1));
        EXPECT_EQ(merge(h1, HistogramAgg{}), h1);
        EXPECT_EQ(merge(merge(h1, h2), h3).total(), h1.total() + h2.total() + h3.total());
        // Integer-valued summaries make grouped sums exact under reordering.
        auto g1 = grouped(), g2 = grouped(), g3 = grouped();
        EXPECT_EQ(merge(merge(g1, g2), g3), merge(g1, merge(g2, g3)));
        EXPECT_EQ(merge(g1, g2), merge(g2, g1));
        EXPECT_EQ(merge(g1, GroupedAgg{}), g1);
    }
}

TEST(Merge, BodyRoundTrip)
{
    StreamAggregate agg;
    agg["IO_RD_BW"] = SummaryAgg{3, 0.1 + 0.2, 0.1, 0.2};
    GroupedAgg g;
    g.groups["tait.1113"] = SummaryAgg{2, 7, 3, 4};
    g.groups["unassigned"] = SummaryAgg{1, 1e300, 1e300, 1e300};
    agg["IO_WR_BW"] = g;
    auto h = HistogramAgg::with_edges({0.5, 2});
    h.add(1, 3);
    agg["IO_CLNT_AVG_RD_SZ"] = h;
    CountedKeyAgg c;
    c.counts["/proj/a"] = 9;
    agg["MDS_TOP_PATHS"] = c;
    EXPECT_EQ(decode_body(encode_body(agg)), agg);
    EXPECT_THROW(decode_body("S IO_RD_BW 1 x 1 1\n"), Error);
    EXPECT_THROW(decode_body("Q IO_RD_BW\n"), Error);
}

TEST(TopK, RanksDescendingByValue)
{
    GroupedAgg g;
    const std::vector<std::pair<std::string, double>> jobs = {
        {"tait.4334", 3.4}, {"euler.22388", 0.78}, {"tait.4321", 7.8}, {"conway.2789", 12}, {"euler.22397", 7.2}};
    for (const auto& [job, gb] : jobs) g.groups[job] = SummaryAgg::of(gb * 1073741824.0);
    auto top = select_topk(g, 5, metric("IO_RD_BW"));
    std::vector<std::string> keys;
    for (const auto& e : top) keys.push_back(e.key);
    EXPECT_EQ(keys, (std::vector<std::string>{"conway.2789", "tait.4321", "euler.22397", "tait.4334", "euler.22388"}));
    EXPECT_EQ(select_topk(g, 50, metric("IO_RD_BW")).size(), 5u);
    EXPECT_EQ(select_topk(g, 1, metric("IO_RD_BW"), Order::asc).front().key, "euler.22388");
    EXPECT_THROW(select_topk(g, 0, metric("IO_RD_BW")), Error);
}

TEST(TopK, TiesAreLexicographic)
{
    CountedKeyAgg c;
    c.counts = {{"b", 4}, {"a", 4}, {"c", 9}};
    auto top = select_topk(c, 3);
    EXPECT_EQ(top[0].key, "c");
    EXPECT_EQ(top[1].key, "a");
    EXPECT_EQ(top[2].key, "b");
}

TEST(TopK, AbsentMetricIsNamed)
{
    StreamAggregate agg;
    try {
        select_topk(agg, 3, "IO_RD_BW");
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("IO_RD_BW"), std::string::npos);
    }
}

TEST(TopK, MergeThenRankEqualsBruteForce)
{
    std::mt19937_64 rng(17);
    const auto& def = metric("IO_RD_BW");
    for (int t = 0; t < 200; ++t) {
        GroupedAgg a, b;
        std::map<std::string, double> totals;
        for (auto* g : {&a, &b})
            for (int i = 0; i < 5; ++i) {
                std::string k = "j" + std::to_string(rng() % 8);
                double v = static_cast<double>(rng() % 50);
                g->groups[k] = merge(g->groups[k], SummaryAgg::of(v));
                totals[k] += v;
            }
        std::vector<RankedEntry> brute;
        for (const auto& [k, v] : totals) brute.push_back({k, v});
        std::sort(brute.begin(), brute.end(),
                  [](const auto& x, const auto& y) { return x.value != y.value ? x.value > y.value : x.key < y.key; });
        const std::size_t k = 1 + rng() % 5;
        brute.resize(std::min(k, brute.size()));
        EXPECT_EQ(select_topk(merge(a, b), k, def), brute);
    }
}

TEST(Humanize, Examples)
{
    EXPECT_EQ(humanize(0, Unit::bytes_per_sec, Style::compact), "0B/s");
    EXPECT_EQ(humanize(0, Unit::bytes, Style::compact), "0B");
    EXPECT_EQ(humanize(794624, Unit::bytes, Style::compact), "776K");
    EXPECT_EQ(humanize(20 * 1048576.0, Unit::bytes_per_sec, Style::compact), "20M/s");
    EXPECT_EQ(humanize(4.3 * 1073741824.0, Unit::bytes, Style::compact), "4.3G");
    EXPECT_EQ(humanize(12 * 1073741824.0, Unit::bytes_per_sec, Style::human), "12 GB/s");
    EXPECT_EQ(humanize(156 * 1048576.0, Unit::bytes, Style::human), "156 MB");
    EXPECT_EQ(humanize(0.0639, Unit::seconds, Style::human), "63.9 ms");
    EXPECT_EQ(humanize(64, Unit::ops_per_sec, Style::human), "64 op/s");
}

TEST(Humanize, MatchesReferenceRuleTable)
{
    std::mt19937_64 rng(23);
    for (int i = 0; i < 5000; ++i) {
        double v = std::exp(std::uniform_real_distribution<double>(0, 34.5)(rng));
        // Avoid values that sit on a rounding boundary where the two
        // formatters may legitimately pick different neighbours.
        double m = v;
        while (m >= 1024) m /= 1024;
        if (std::abs(m * 10 - std::floor(m * 10) - 0.5) < 1e-6 || m > 1023.4) continue;
        EXPECT_EQ(humanize(v, Unit::bytes, Style::compact), reference_compact_bytes(v, false)) << v;
        EXPECT_EQ(humanize(v, Unit::bytes_per_sec, Style::compact), reference_compact_bytes(v, true)) << v;
    }
}

TEST(Humanize, ParseInverts)
{
    EXPECT_EQ(parse_human("12 GB/s").value, 12 * 1073741824.0);
    EXPECT_EQ(parse_human("12 GB/s").unit, Unit::bytes_per_sec);
    EXPECT_EQ(parse_human("776K").value, 794624);
    EXPECT_EQ(parse_human("0B/s").value, 0);
    EXPECT_EQ(parse_human("63.9 ms").unit, Unit::seconds);
    EXPECT_THROW(parse_human("12 XB/s"), ParseError);
    try {
        parse_human("abc");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("abc"), std::string::npos);
    }
}

TEST(Humanize, RoundTripProperty)
{
    std::mt19937_64 rng(29);
    for (auto unit : {Unit::bytes_per_sec, Unit::bytes, Unit::ops_per_sec, Unit::seconds, Unit::percent, Unit::count})
        for (auto style : {Style::compact, Style::human})
            for (int i = 0; i < 500; ++i) {
                double v = std::exp(std::uniform_real_distribution<double>(-6, 35)(rng));
                if (unit == Unit::percent) v = std::fmod(v, 100);
                auto s = humanize(v, unit, style);
                auto q = parse_human(s);
                EXPECT_EQ(humanize(q.value, unit, style), s);
                // Half a unit of the last shown digit; within 5% once the
                // mantissa reaches 1.
                std::size_t end = 0;
                const double mant = std::stod(s, &end);
                const auto dot = s.find('.');
                const int decimals = dot != std::string::npos && dot < end ? static_cast<int>(end - dot - 1) : 0;
                const double scale = mant > 0 ? q.value / mant : 1.0;
                const double half_step = 0.5 * scale * std::pow(10.0, -decimals);
                EXPECT_LE(std::abs(q.value - v), half_step * (1 + 1e-9)) << s << " from " << v;
                if (mant >= 1) EXPECT_LE(std::abs(q.value - v), 0.05 * v) << s << " from " << v;
            }
}
