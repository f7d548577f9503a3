#include "melt/humanize.hpp"

#include <array>
#include <cmath>
#include <cstdio>

namespace melt::metrics {

namespace {

constexpr std::array<const char*, 6> kCompactSuffix = {"B", "K", "M", "G", "T", "P"};
constexpr std::array<const char*, 6> kHumanSuffix = {"B", "KB", "MB", "GB", "TB", "PB"};

std::string printf_double(const char* fmt, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, fmt, v);
    return buf;
}

std::string strip_zeros(std::string s)
{
    if (s.find('.') == std::string::npos) return s;
    while (!s.empty() && s.back() == '0') s.pop_back();
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s;
}

// One decimal only when the mantissa is below 10 and the decimal is nonzero.
std::string compact_mantissa(double m)
{
    if (m < 10) {
        double r = std::round(m * 10) / 10;
        if (r < 10) {
            auto s = printf_double("%.1f", r);
            if (s.size() >= 2 && s.substr(s.size() - 2) == ".0") s.resize(s.size() - 2);
            return s;
        }
    }
    return printf_double("%.0f", std::round(m));
}

// Three significant digits, trailing zeros dropped.
std::string human_mantissa(double m)
{
    if (m >= 100) return printf_double("%.0f", m);
    if (m >= 10) return strip_zeros(printf_double("%.1f", m));
    return strip_zeros(printf_double("%.2f", m));
}

std::string scaled(double value, Style style, double base, const auto& suffixes, bool is_rate)
{
    std::string rate = is_rate ? "/s" : "";
    if (value == 0) return style == Style::compact ? "0B" + rate : "0 B" + rate;
    std::size_t k = 0;
    double m = value;
    while (m >= base && k + 1 < suffixes.size()) {
        m /= base;
        ++k;
    }
    auto fmt = [style](double x) { return style == Style::compact ? compact_mantissa(x) : human_mantissa(x); };
    std::string text = fmt(m);
    if (std::stod(text) >= base && k + 1 < suffixes.size()) {
        m /= base;
        ++k;
        text = fmt(m);
    }
    return style == Style::compact ? text + suffixes[k] + rate : text + " " + suffixes[k] + rate;
}

std::string plain(double value, Style style)
{
    return style == Style::compact ? compact_mantissa(value) : human_mantissa(value);
}

}  // namespace

std::string humanize(double value, Unit unit, Style style)
{
    if (!(value >= 0) || !std::isfinite(value)) value = 0;
    switch (unit) {
    case Unit::bytes:
        return style == Style::compact ? scaled(value, style, 1024, kCompactSuffix, false)
                                       : scaled(value, style, 1024, kHumanSuffix, false);
    case Unit::bytes_per_sec:
        return style == Style::compact ? scaled(value, style, 1024, kCompactSuffix, true)
                                       : scaled(value, style, 1024, kHumanSuffix, true);
    case Unit::ops_per_sec: {
        std::string m = value >= 1000 ? printf_double("%.0f", std::round(value)) : plain(value, style);
        return style == Style::compact ? m + "/s" : m + " op/s";
    }
    case Unit::count:
        if (value >= 1000 || value == std::round(value)) return printf_double("%.0f", std::round(value));
        return plain(value, style);
    case Unit::percent:
        return plain(value, style) + "%";
    case Unit::seconds: {
        std::string sep = style == Style::compact ? "" : " ";
        if (value == 0) return "0" + sep + "s";
        if (value < 1) {
            auto ms = plain(value * 1000, style);
            if (std::stod(ms) < 1000) return ms + sep + "ms";
        }
        return plain(value, style) + sep + "s";
    }
    }
    return format_double(value);
}

Quantity parse_human(std::string_view text)
{
    std::string_view t = trim(text);
    std::size_t i = 0;
    while (i < t.size() && ((t[i] >= '0' && t[i] <= '9') || t[i] == '.')) ++i;
    if (i == 0) throw ParseError("malformed quantity '" + std::string(text) + "': no number");
    auto number = parse_double(t.substr(0, i));
    if (!number) throw ParseError("malformed quantity '" + std::string(text) + "': bad number '" +
                                  std::string(t.substr(0, i)) + "'");
    std::string_view suffix = t.substr(i);
    if (!suffix.empty() && suffix.front() == ' ') suffix.remove_prefix(1);
    double v = *number;

    if (suffix.empty()) return {v, Unit::count};
    if (suffix == "%") return {v, Unit::percent};
    if (suffix == "ms") return {v / 1000, Unit::seconds};
    if (suffix == "s") return {v, Unit::seconds};
    if (suffix == "/s" || suffix == "op/s") return {v, Unit::ops_per_sec};

    bool rate = false;
    if (suffix.size() > 2 && suffix.substr(suffix.size() - 2) == "/s") {
        rate = true;
        suffix.remove_suffix(2);
    }
    for (std::size_t k = 0; k < kCompactSuffix.size(); ++k) {
        if (suffix == kCompactSuffix[k] || suffix == kHumanSuffix[k])
            return {v * std::pow(1024.0, static_cast<double>(k)), rate ? Unit::bytes_per_sec : Unit::bytes};
    }
    throw ParseError("malformed quantity '" + std::string(text) + "': unknown suffix '" + std::string(suffix) + "'");
}

}  // namespace melt::metrics
