#pragma once

#include "melt/metrics.hpp"

#include <string>
#include <string_view>

namespace melt::metrics {

/// compact: `20M/s`, `776K`, `0B/s` (logs, kv). human: `12 GB/s`, `63.9 ms`
/// (tables). Byte quantities use 1024 multiples.
enum class Style { compact, human };

std::string humanize(double value, Unit unit, Style style);

struct Quantity {
    double value = 0;
    Unit unit = Unit::count;
};

class ParseError : public Error {
public:
    using Error::Error;
};

/// Inverse of humanize for both styles.
Quantity parse_human(std::string_view text);

}  // namespace melt::metrics
