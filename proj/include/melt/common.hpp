#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace melt {

/// Base of every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed configuration, scenario, or script input.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Bad command-line usage.
class UsageError : public Error {
public:
    using Error::Error;
};

enum class LustreRole { client, oss, mds, router };

std::string_view to_string(LustreRole role);
std::optional<LustreRole> parse_lustre_role(std::string_view text);

// Small string helpers shared by the line-oriented parsers.
std::vector<std::string> split(std::string_view text, char sep);
std::vector<std::string> split_ws(std::string_view text);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
std::string_view trim(std::string_view text);
bool starts_with(std::string_view text, std::string_view prefix);

/// 64-bit FNV-1a, used for frame and body digests.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

// Shortest decimal text that round-trips a binary64 value.
std::string format_double(double value);
std::optional<double> parse_double(std::string_view text);
std::optional<std::uint64_t> parse_u64(std::string_view text);
std::optional<std::int64_t> parse_i64(std::string_view text);

}  // namespace melt
