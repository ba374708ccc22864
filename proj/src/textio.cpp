#include "telemplan/textio.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace telemplan::textio {

std::string format_double(double value) {
	char buf[64];
	auto res = std::to_chars(buf, buf + sizeof(buf), value);
	if (res.ec != std::errc()) {
		throw std::runtime_error("format_double: conversion failed");
	}
	return std::string(buf, res.ptr);
}

double parse_double(std::string_view token) {
	double value = 0.0;
	const char *first = token.data();
	const char *last = token.data() + token.size();
	if (!token.empty() && token.front() == '+') {
		++first;
	}
	auto res = std::from_chars(first, last, value);
	if (res.ec != std::errc() || res.ptr != last) {
		throw std::invalid_argument("not a number: '" + std::string(token) + "'");
	}
	return value;
}

std::int64_t parse_int(std::string_view token) {
	std::int64_t value = 0;
	auto res = std::from_chars(token.data(), token.data() + token.size(), value);
	if (res.ec != std::errc() || res.ptr != token.data() + token.size()) {
		throw std::invalid_argument("not an integer: '" + std::string(token) + "'");
	}
	return value;
}

std::vector<std::string_view> tokenize(std::string_view line) {
	std::vector<std::string_view> out;
	std::size_t i = 0;
	while (i < line.size()) {
		while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) {
			++i;
		}
		if (i >= line.size() || line[i] == '#') {
			break;
		}
		std::size_t j = i;
		while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r' && line[j] != '#') {
			++j;
		}
		out.push_back(line.substr(i, j - i));
		i = j;
	}
	return out;
}

std::vector<std::string_view> split(std::string_view text, char sep) {
	std::vector<std::string_view> out;
	std::size_t start = 0;
	while (true) {
		auto pos = text.find(sep, start);
		if (pos == std::string_view::npos) {
			out.push_back(text.substr(start));
			break;
		}
		out.push_back(text.substr(start, pos - start));
		start = pos + 1;
	}
	return out;
}

std::string_view trim(std::string_view text) {
	while (!text.empty() && (text.front() == ' ' || text.front() == '\t' || text.front() == '\r' || text.front() == '\n')) {
		text.remove_prefix(1);
	}
	while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r' || text.back() == '\n')) {
		text.remove_suffix(1);
	}
	return text;
}

std::uint64_t fnv1a(std::string_view bytes) {
	std::uint64_t hash = 0xcbf29ce484222325ULL;
	for (unsigned char c : bytes) {
		hash ^= c;
		hash *= 0x100000001b3ULL;
	}
	return hash;
}

std::string hex64(std::uint64_t value) {
	char buf[17];
	std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
	return buf;
}

std::string read_file(const std::string &path) {
	std::ifstream in(path, std::ios::binary);
	if (!in) {
		throw std::runtime_error("cannot open '" + path + "' for reading");
	}
	std::ostringstream ss;
	ss << in.rdbuf();
	return ss.str();
}

void write_file(const std::string &path, const std::string &content) {
	std::ofstream out(path, std::ios::binary);
	if (!out) {
		throw std::runtime_error("cannot open '" + path + "' for writing");
	}
	out << content;
}

} // namespace telemplan::textio
