#include "ndvg/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace ndvg {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

KvMap parse_kv_text(const std::string& text) {
  KvMap kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    check(eq != std::string::npos,
          "config line " + std::to_string(lineno) + " is not a key=value pair: '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    check(!key.empty(), "config line " + std::to_string(lineno) + " has an empty key");
    kv[key] = value;
  }
  return kv;
}

KvMap parse_kv_file(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_kv_text(buf.str());
}

std::pair<std::string, std::string> parse_kv_assignment(const std::string& arg) {
  const auto eq = arg.find('=');
  check(eq != std::string::npos && eq > 0, "expected key=value, got '" + arg + "'");
  return {trim(arg.substr(0, eq)), trim(arg.substr(eq + 1))};
}

double kv_number(const KvMap& kv, const std::string& key, double fallback) {
  const auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  size_t used = 0;
  double v = 0;
  try {
    v = std::stod(it->second, &used);
  } catch (const std::exception&) {
    check(false, "config key '" + key + "' has non-numeric value '" + it->second + "'");
  }
  check(trim(it->second.substr(used)).empty(),
        "config key '" + key + "' has non-numeric value '" + it->second + "'");
  return v;
}

long long kv_integer(const KvMap& kv, const std::string& key, long long fallback) {
  const auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  const double v = kv_number(kv, key, 0);
  const long long n = (long long)std::llround(v);
  check(double(n) == v, "config key '" + key + "' must be an integer, got '" + it->second + "'");
  return n;
}

bool kv_flag(const KvMap& kv, const std::string& key, bool fallback) {
  const auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  const std::string v = it->second;
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  check(false, "config key '" + key + "' must be a boolean, got '" + v + "'");
  return fallback;
}

Vec3<double> kv_vec3(const KvMap& kv, const std::string& key, const Vec3<double>& fallback) {
  const auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  std::istringstream in(it->second);
  Vec3<double> v;
  char comma = 0;
  if (in >> v[0]) {
    if (in >> comma >> v[1] >> comma >> v[2]) return v;
    // a single number broadcasts to all three channels
    std::istringstream single(it->second);
    double s;
    if (single >> s && (single >> std::ws).eof()) return Vec3<double>(s, s, s);
  }
  check(false, "config key '" + key + "' must be 'x,y,z' or a single number, got '" +
                   it->second + "'");
  return fallback;
}

std::string format_vec3(const Vec3<double>& v) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g", v[0], v[1], v[2]);
  return buf;
}

}  // namespace ndvg
