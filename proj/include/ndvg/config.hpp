#pragma once

#include <map>
#include <string>
#include <vector>

#include "ndvg/common.hpp"

namespace ndvg {

// Flat key=value configuration text: one `key = value` pair per line,
// '#' comments, blank lines ignored. Later assignments win, which gives the
// defaults < file < command-line precedence when layers are applied in order.
using KvMap = std::map<std::string, std::string>;

std::string trim(const std::string& s);

// Parses `key=value` lines from raw text. Malformed lines raise with the line
// number in the message.
KvMap parse_kv_text(const std::string& text);
KvMap parse_kv_file(const std::string& path);

// Parses a single `key=value` assignment (as passed on the command line).
std::pair<std::string, std::string> parse_kv_assignment(const std::string& arg);

double kv_number(const KvMap& kv, const std::string& key, double fallback);
long long kv_integer(const KvMap& kv, const std::string& key, long long fallback);
bool kv_flag(const KvMap& kv, const std::string& key, bool fallback);
Vec3<double> kv_vec3(const KvMap& kv, const std::string& key, const Vec3<double>& fallback);

std::string format_vec3(const Vec3<double>& v);

}  // namespace ndvg
