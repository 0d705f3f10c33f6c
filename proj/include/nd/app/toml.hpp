#pragma once

// Reader for the flat TOML subset used by run configurations: [table]
// headers, `key = value` pairs with strings, numbers, booleans and
// one-line arrays of those, and # comments. Nested tables, inline tables,
// dotted keys and multi-line values are rejected.

#include <cctype>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "nd/core/errors.hpp"

namespace nd::app {

struct TomlValue {
  enum class Kind { String, Number, Bool, Array };
  Kind kind = Kind::String;
  std::string text;  // string contents, or the literal as written for numbers and booleans
  double number = 0.0;
  bool boolean = false;
  std::vector<TomlValue> items;

  /// The value rendered as a CLI-style string: arrays become comma-separated.
  std::string as_flag() const {
    if (kind != Kind::Array) return text;
    std::string out;
    for (std::size_t k = 0; k < items.size(); ++k) out += (k ? "," : "") + items[k].text;
    return out;
  }
};

using TomlTable = std::map<std::string, TomlValue>;
using TomlDocument = std::map<std::string, TomlTable>;  // "" holds keys before the first header

namespace detail {

inline std::string_view strip(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

/// Drops a trailing comment that is not inside a string.
inline std::string_view drop_comment(std::string_view s) {
  bool quoted = false;
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (s[k] == '"' && (k == 0 || s[k - 1] != '\\')) quoted = !quoted;
    if (s[k] == '#' && !quoted) return s.substr(0, k);
  }
  return s;
}

class TomlLineParser {
 public:
  TomlLineParser(std::string_view s, std::size_t line) : s_(s), line_(line) {}

  TomlValue value() {
    skip();
    if (pos_ >= s_.size()) fail("missing value");
    const char ch = s_[pos_];
    if (ch == '"') return string();
    if (ch == '[') return array();
    if (ch == '{') fail("inline tables are not supported");
    return scalar();
  }

  void finish() {
    skip();
    if (pos_ != s_.size()) fail("unexpected trailing characters");
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("config line " + std::to_string(line_) + ": " + what);
  }
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  TomlValue string() {
    TomlValue v;
    ++pos_;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      char ch = s_[pos_++];
      if (ch == '\\') {
        if (pos_ >= s_.size()) fail("unterminated escape");
        const char e = s_[pos_++];
        switch (e) {
          case 'n': ch = '\n'; break;
          case 't': ch = '\t'; break;
          case '"': ch = '"'; break;
          case '\\': ch = '\\'; break;
          default: fail(std::string("unsupported escape \\") + e);
        }
      }
      v.text.push_back(ch);
    }
    if (pos_ >= s_.size()) fail("unterminated string");
    ++pos_;
    return v;
  }

  TomlValue array() {
    TomlValue v;
    v.kind = TomlValue::Kind::Array;
    ++pos_;
    skip();
    if (pos_ < s_.size() && s_[pos_] == ']') {
      ++pos_;
      return v;
    }
    while (true) {
      auto item = value();
      if (item.kind == TomlValue::Kind::Array) fail("nested arrays are not supported");
      v.items.push_back(std::move(item));
      skip();
      if (pos_ >= s_.size()) fail("unterminated array");
      if (s_[pos_] == ',') {
        ++pos_;
        skip();
        if (pos_ < s_.size() && s_[pos_] == ']') {
          ++pos_;
          return v;
        }
        continue;
      }
      if (s_[pos_] == ']') {
        ++pos_;
        return v;
      }
      fail("expected ',' or ']' in array");
    }
  }

  TomlValue scalar() {
    const auto start = pos_;
    while (pos_ < s_.size() && s_[pos_] != ',' && s_[pos_] != ']' &&
           !std::isspace(static_cast<unsigned char>(s_[pos_])))
      ++pos_;
    TomlValue v;
    v.text = std::string(s_.substr(start, pos_ - start));
    if (v.text == "true" || v.text == "false") {
      v.kind = TomlValue::Kind::Bool;
      v.boolean = v.text == "true";
      return v;
    }
    std::string digits;
    for (char ch : v.text)
      if (ch != '_') digits.push_back(ch);
    const char* first = digits.data();
    if (!digits.empty() && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, digits.data() + digits.size(), v.number);
    if (digits.empty() || ec != std::errc{} || ptr != digits.data() + digits.size())
      fail("cannot parse value '" + v.text + "' (strings must be quoted)");
    v.kind = TomlValue::Kind::Number;
    v.text = digits;
    return v;
  }

  std::string_view s_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

inline bool valid_key(std::string_view k) {
  if (k.empty()) return false;
  for (char ch : k)
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-')) return false;
  return true;
}

}  // namespace detail

inline TomlDocument parse_toml(std::istream& in) {
  TomlDocument doc;
  std::string table;
  std::set<std::string> seen;
  doc[table];
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = detail::strip(detail::drop_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.size() < 3 || line.back() != ']' || line[1] == '[')
        throw ConfigError("config line " + std::to_string(line_no) + ": malformed table header");
      const auto name = detail::strip(line.substr(1, line.size() - 2));
      if (!detail::valid_key(name))
        throw ConfigError("config line " + std::to_string(line_no) + ": only flat table names are supported");
      table = std::string(name);
      if (!seen.insert(table).second)
        throw ConfigError("config line " + std::to_string(line_no) + ": table [" + table + "] defined twice");
      doc[table];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const auto key = detail::strip(line.substr(0, eq));
    if (!detail::valid_key(key))
      throw ConfigError("config line " + std::to_string(line_no) + ": invalid key '" + std::string(key) + "'");
    detail::TomlLineParser p(line.substr(eq + 1), line_no);
    auto v = p.value();
    p.finish();
    if (!doc[table].emplace(std::string(key), std::move(v)).second)
      throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" + std::string(key) + "'");
  }
  return doc;
}

inline TomlDocument parse_toml_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_toml(in);
}

inline TomlDocument parse_toml_string(const std::string& text) {
  std::istringstream in(text);
  return parse_toml(in);
}

}  // namespace nd::app
