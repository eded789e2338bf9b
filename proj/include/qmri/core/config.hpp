#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace qmri {

// Flat "key = value" text with '#' comments. Getters record which keys were
// read so unknown keys can be rejected afterwards.
class Config {
 public:
  static Config parse(const std::string& text, const std::string& source = "<string>");
  static Config load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string get(const std::string& key, const std::string& fallback) const;
  std::string get(const std::string& key, const char* fallback) const { return get(key, std::string(fallback)); }
  double get(const std::string& key, double fallback) const;
  long long get(const std::string& key, long long fallback) const;
  std::size_t get(const std::string& key, std::size_t fallback) const;
  bool get(const std::string& key, bool fallback) const;
  std::vector<long long> get_list(const std::string& key, const std::vector<long long>& fallback) const;

  // Throws usage if any key was never read.
  void reject_unknown() const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  const std::string* find(const std::string& key) const;

  std::string source_;
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

// Writes "key = value" lines in insertion order.
class ConfigWriter {
 public:
  ConfigWriter& comment(const std::string& text);
  ConfigWriter& put(const std::string& key, const std::string& value);
  ConfigWriter& put(const std::string& key, double value);
  ConfigWriter& put(const std::string& key, long long value);
  ConfigWriter& put(const std::string& key, std::size_t value);
  ConfigWriter& put(const std::string& key, bool value);
  ConfigWriter& put(const std::string& key, const std::vector<long long>& value);
  const std::string& str() const { return text_; }

 private:
  std::string text_;
};

// FNV-1a 64-bit, hex encoded.
std::string hash_hex(const std::string& bytes);

}  // namespace qmri
