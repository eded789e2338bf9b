#include "qmri/core/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "qmri/core/error.hpp"

namespace qmri {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& v, const char* want) {
  fail(ErrorKind::usage, "config: key '" + key + "' expects " + want + ", got '" + v + "'");
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Config Config::parse(const std::string& text, const std::string& source) {
  Config c;
  c.source_ = source;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(lineno);
    require(eq != std::string::npos, ErrorKind::usage, "config: " + where + ": expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    require(!key.empty(), ErrorKind::usage, "config: " + where + ": empty key");
    require(!c.values_.count(key), ErrorKind::usage, "config: " + where + ": duplicate key '" + key + "'");
    c.values_[key] = value;
  }
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::io, "config: cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

const std::string* Config::find(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return nullptr;
  used_.insert(key);
  return &it->second;
}

std::string Config::get(const std::string& key, const std::string& fallback) const {
  const auto* v = find(key);
  return v ? *v : fallback;
}

double Config::get(const std::string& key, double fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  try {
    std::size_t pos = 0;
    const double d = std::stod(*v, &pos);
    if (pos != v->size()) bad_value(key, *v, "a number");
    return d;
  } catch (const std::logic_error&) {
    bad_value(key, *v, "a number");
  }
}

long long Config::get(const std::string& key, long long fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  long long out = 0;
  auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || p != v->data() + v->size()) bad_value(key, *v, "an integer");
  return out;
}

std::size_t Config::get(const std::string& key, std::size_t fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || p != v->data() + v->size()) bad_value(key, *v, "a non-negative integer");
  return out;
}

bool Config::get(const std::string& key, bool fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  bad_value(key, *v, "a boolean");
}

std::vector<long long> Config::get_list(const std::string& key, const std::vector<long long>& fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  std::vector<long long> out;
  std::istringstream in(*v);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    long long x = 0;
    auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), x);
    if (item.empty() || ec != std::errc() || p != item.data() + item.size())
      bad_value(key, *v, "a comma-separated integer list");
    out.push_back(x);
  }
  if (out.empty()) bad_value(key, *v, "a comma-separated integer list");
  return out;
}

void Config::reject_unknown() const {
  for (const auto& [k, v] : values_)
    require(used_.count(k) != 0, ErrorKind::usage, "config: " + source_ + ": unknown key '" + k + "'");
}

ConfigWriter& ConfigWriter::comment(const std::string& text) {
  text_ += "# " + text + "\n";
  return *this;
}

ConfigWriter& ConfigWriter::put(const std::string& key, const std::string& value) {
  text_ += key + " = " + value + "\n";
  return *this;
}

ConfigWriter& ConfigWriter::put(const std::string& key, double value) { return put(key, fmt_double(value)); }
ConfigWriter& ConfigWriter::put(const std::string& key, long long value) { return put(key, std::to_string(value)); }
ConfigWriter& ConfigWriter::put(const std::string& key, std::size_t value) { return put(key, std::to_string(value)); }
ConfigWriter& ConfigWriter::put(const std::string& key, bool value) {
  return put(key, std::string(value ? "true" : "false"));
}

ConfigWriter& ConfigWriter::put(const std::string& key, const std::vector<long long>& value) {
  std::string s;
  for (std::size_t i = 0; i < value.size(); ++i) s += (i ? "," : "") + std::to_string(value[i]);
  return put(key, s);
}

std::string hash_hex(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace qmri
