#pragma once

// Flat key=value text used by config files, manifests and run records.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pptr/common/error.hpp"

namespace pptr {

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

/// Ordered key/value list. Insertion order is preserved on write so that
/// files are byte-stable.
class KeyValue {
 public:
  static KeyValue parse(std::istream& in, Errc on_error = Errc::InvalidConfig) {
    KeyValue kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string t = trim(line);
      if (t.empty() || t[0] == '#') continue;
      const auto eq = t.find('=');
      if (eq == std::string::npos)
        throw Error(on_error, "line " + std::to_string(lineno) + ": expected key=value");
      kv.set(trim(std::string_view(t).substr(0, eq)), trim(std::string_view(t).substr(eq + 1)));
    }
    return kv;
  }

  static KeyValue load(const std::string& path, Errc on_error = Errc::InvalidConfig) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::IoError, "cannot open " + path);
    return parse(in, on_error);
  }

  void set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : entries_) {
      if (k == key) {
        v = value;
        return;
      }
    }
    entries_.emplace_back(key, value);
  }

  template <class T>
  void set_num(const std::string& key, T value) {
    if constexpr (std::is_floating_point_v<T>) {
      char buf[64];
      auto r = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::general, 17);
      set(key, std::string(buf, r.ptr));
    } else {
      set(key, std::to_string(value));
    }
  }

  bool has(const std::string& key) const {
    for (const auto& [k, v] : entries_)
      if (k == key) return true;
    return false;
  }

  const std::string& get(const std::string& key) const {
    for (const auto& [k, v] : entries_)
      if (k == key) return v;
    throw Error(Errc::InvalidConfig, "missing key '" + key + "'");
  }

  std::string get_or(const std::string& key, const std::string& fallback) const {
    return has(key) ? get(key) : fallback;
  }

  double get_double(const std::string& key) const { return to_double(key, get(key)); }
  double get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
  }
  std::int64_t get_int(const std::string& key) const { return to_int(key, get(key)); }
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
    return has(key) ? get_int(key) : fallback;
  }

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  void write(std::ostream& out) const {
    for (const auto& [k, v] : entries_) out << k << '=' << v << '\n';
  }

  std::string str() const {
    std::ostringstream os;
    write(os);
    return os.str();
  }

  static double to_double(const std::string& key, const std::string& s) {
    double v = 0.0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size())
      throw Error(Errc::InvalidConfig, "key '" + key + "': not a number: '" + s + "'");
    return v;
  }

  static std::int64_t to_int(const std::string& key, const std::string& s) {
    std::int64_t v = 0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size())
      throw Error(Errc::InvalidConfig, "key '" + key + "': not an integer: '" + s + "'");
    return v;
  }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace pptr
