#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace telemplan::textio {

// Shortest decimal representation that parses back to the same double.
std::string format_double(double value);

double parse_double(std::string_view token);
std::int64_t parse_int(std::string_view token);

// Whitespace tokenizer; stops at a '#' comment.
std::vector<std::string_view> tokenize(std::string_view line);

std::vector<std::string_view> split(std::string_view text, char sep);

std::string_view trim(std::string_view text);

// 64-bit FNV-1a, used for config fingerprints in reports.
std::uint64_t fnv1a(std::string_view bytes);

std::string hex64(std::uint64_t value);

std::string read_file(const std::string &path);
void write_file(const std::string &path, const std::string &content);

} // namespace telemplan::textio
