#pragma once

// Flat experiment configuration files.
//
//   # comment
//   [section]
//   key = value          # trailing comment
//   list = 1, 2, 3
//
// Keys are unique within a section and sections keep file order.
// serialize() writes a canonical form, so parse(serialize(c)) == c.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "schn/error.hpp"

namespace schn {

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    out.emplace_back(trim(s.substr(start, comma == std::string_view::npos ? s.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <class T>
T parse_number(std::string_view text, const std::string& what) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  require(ec == std::errc() && ptr == end && !text.empty(),
          what + ": cannot parse '" + std::string(text) + "'");
  return value;
}

}  // namespace detail

/// Shortest text that parses back to the same double.
inline std::string format_real(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

class Config {
 public:
  struct Entry {
    std::string key;
    std::string value;
    friend bool operator==(const Entry&, const Entry&) = default;
  };
  struct Section {
    std::string name;
    std::vector<Entry> entries;
    friend bool operator==(const Section&, const Section&) = default;
  };

  static Config parse(std::string_view text) {
    Config c;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const auto nl = text.find('\n', pos);
      std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
      pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
      ++line_no;
      const std::string where = "config line " + std::to_string(line_no);
      if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        detail::require(line.back() == ']' && line.size() > 2, where + ": malformed section header");
        const std::string name(detail::trim(line.substr(1, line.size() - 2)));
        detail::require(c.find_section(name) == nullptr, where + ": duplicate section [" + name + "]");
        c.sections_.push_back({name, {}});
        continue;
      }
      const auto eq = line.find('=');
      detail::require(eq != std::string_view::npos, where + ": expected key = value");
      detail::require(!c.sections_.empty(), where + ": key outside any section");
      const std::string key(detail::trim(line.substr(0, eq)));
      detail::require(!key.empty(), where + ": empty key");
      auto& sec = c.sections_.back();
      for (const auto& e : sec.entries) {
        detail::require(e.key != key, where + ": duplicate key '" + key + "'");
      }
      sec.entries.push_back({key, canonical_value(line.substr(eq + 1))});
    }
    return c;
  }

  static Config load(const std::string& path) {
    std::ifstream in(path);
    detail::require(static_cast<bool>(in), "cannot open config " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
  }

  [[nodiscard]] std::string serialize() const {
    std::string out;
    for (std::size_t k = 0; k < sections_.size(); ++k) {
      if (k > 0) out += '\n';
      out += "[" + sections_[k].name + "]\n";
      for (const auto& e : sections_[k].entries) out += e.key + " = " + e.value + "\n";
    }
    return out;
  }

  /// FNV-1a over the canonical text.
  [[nodiscard]] std::uint64_t digest() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const unsigned char ch : serialize()) {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
    return h;
  }

  [[nodiscard]] const std::vector<Section>& sections() const { return sections_; }

  [[nodiscard]] std::optional<std::string> find(const std::string& section, const std::string& key) const {
    if (const Section* s = find_section(section)) {
      for (const auto& e : s->entries) {
        if (e.key == key) return e.value;
      }
    }
    return std::nullopt;
  }

  void set(const std::string& section, const std::string& key, const std::string& value) {
    Section* s = find_section(section);
    if (s == nullptr) {
      sections_.push_back({section, {}});
      s = &sections_.back();
    }
    for (auto& e : s->entries) {
      if (e.key == key) {
        e.value = canonical_value(value);
        return;
      }
    }
    s->entries.push_back({key, canonical_value(value)});
  }

  [[nodiscard]] std::string get_string(const std::string& section, const std::string& key,
                                       std::optional<std::string> fallback = std::nullopt) const {
    if (auto v = find(section, key)) return *v;
    detail::require(fallback.has_value(), "config: missing " + section + "." + key);
    return *fallback;
  }

  [[nodiscard]] long long get_int(const std::string& section, const std::string& key,
                                  std::optional<long long> fallback = std::nullopt) const {
    if (auto v = find(section, key)) return detail::parse_number<long long>(*v, section + "." + key);
    detail::require(fallback.has_value(), "config: missing " + section + "." + key);
    return *fallback;
  }

  [[nodiscard]] double get_real(const std::string& section, const std::string& key,
                                std::optional<double> fallback = std::nullopt) const {
    if (auto v = find(section, key)) return detail::parse_number<double>(*v, section + "." + key);
    detail::require(fallback.has_value(), "config: missing " + section + "." + key);
    return *fallback;
  }

  [[nodiscard]] std::vector<std::string> get_list(const std::string& section, const std::string& key,
                                                  std::optional<std::vector<std::string>> fallback = std::nullopt) const {
    if (auto v = find(section, key)) return detail::split_list(*v);
    detail::require(fallback.has_value(), "config: missing " + section + "." + key);
    return *fallback;
  }

  [[nodiscard]] std::vector<int> get_int_list(const std::string& section, const std::string& key,
                                              std::optional<std::vector<int>> fallback = std::nullopt) const {
    if (auto v = find(section, key)) {
      std::vector<int> out;
      for (const auto& item : detail::split_list(*v)) {
        out.push_back(detail::parse_number<int>(item, section + "." + key));
      }
      return out;
    }
    detail::require(fallback.has_value(), "config: missing " + section + "." + key);
    return *fallback;
  }

  [[nodiscard]] std::vector<double> get_real_list(const std::string& section, const std::string& key,
                                                  std::optional<std::vector<double>> fallback = std::nullopt) const {
    if (auto v = find(section, key)) {
      std::vector<double> out;
      for (const auto& item : detail::split_list(*v)) {
        out.push_back(detail::parse_number<double>(item, section + "." + key));
      }
      return out;
    }
    detail::require(fallback.has_value(), "config: missing " + section + "." + key);
    return *fallback;
  }

  friend bool operator==(const Config&, const Config&) = default;

 private:
  // Lists are normalised to "a, b, c"; scalars are trimmed.
  static std::string canonical_value(std::string_view raw) {
    raw = detail::trim(raw);
    if (raw.find(',') == std::string_view::npos) return std::string(raw);
    std::string out;
    for (const auto& item : detail::split_list(raw)) {
      if (!out.empty()) out += ", ";
      out += item;
    }
    return out;
  }

  [[nodiscard]] const Section* find_section(const std::string& name) const {
    for (const auto& s : sections_) {
      if (s.name == name) return &s;
    }
    return nullptr;
  }
  Section* find_section(const std::string& name) {
    for (auto& s : sections_) {
      if (s.name == name) return &s;
    }
    return nullptr;
  }

  std::vector<Section> sections_;
};

template <class T>
std::string join_list(const std::vector<T>& xs) {
  std::string out;
  for (const auto& x : xs) {
    if (!out.empty()) out += ", ";
    if constexpr (std::is_floating_point_v<T>) {
      out += format_real(x);
    } else if constexpr (std::is_same_v<T, std::string>) {
      out += x;
    } else {
      out += std::to_string(x);
    }
  }
  return out;
}

}  // namespace schn
