#pragma once

// Small text helpers shared by the parsers and serializers.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gesturemap::detail {

struct Line
{
    std::size_t number = 0; // 1-based line number in the source text
    std::string_view text;
};

/// Non-blank lines with their 1-based numbers; strips trailing '\r'.
std::vector<Line> split_lines(std::string_view text);
std::vector<std::string_view> split(std::string_view text, char sep);
std::string_view trim(std::string_view s);

/// Whole-cell numeric parse; nullopt on any trailing garbage.
std::optional<double> parse_double(std::string_view s);
/// Shortest representation that parses back to the same double.
std::string format_double(double v);

/// C99 hex-float text ("0x1.8p+1"); lossless.
std::string to_hex(double v);
double from_hex(const std::string& s);

std::string sha256_hex(std::string_view bytes);

} // namespace gesturemap::detail
