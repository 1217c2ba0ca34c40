// Reader for the TOML subset used by config and fixture files: comments,
// [table] and [[array-of-tables]] headers with dotted bare or quoted keys,
// key = value pairs, basic strings, integers, floats, booleans and arrays of
// those (arrays may span lines). Anything else is an error, never skipped.
// Documents are returned as ordered JSON so key order is preserved.

#pragma once

#include <cctype>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace neuroedge {

class TomlError : public std::runtime_error {
 public:
  TomlError(const std::string& what, std::size_t line, const std::string& source = {})
      : std::runtime_error((source.empty() ? "" : source + ": ") + "line " + std::to_string(line) + ": " + what),
        line_(line),
        reason_(what) {}
  std::size_t line() const { return line_; }
  const std::string& reason() const { return reason_; }

 private:
  std::size_t line_;
  std::string reason_;
};

namespace detail {

class TomlParser {
 public:
  explicit TomlParser(std::string_view text) : s_(text) {}

  nlohmann::ordered_json parse() {
    nlohmann::ordered_json root = nlohmann::ordered_json::object();
    nlohmann::ordered_json* table = &root;
    while (true) {
      skip_blank_lines();
      if (at_end()) break;
      if (peek() == '[') {
        table = header(root);
      } else {
        key_value(*table);
      }
      end_of_line();
    }
    return root;
  }

 private:
  bool at_end() const { return i_ >= s_.size(); }
  char peek() const { return at_end() ? '\0' : s_[i_]; }
  [[noreturn]] void fail(const std::string& what) const { throw TomlError(what, line_); }

  void skip_ws() {
    while (!at_end() && (peek() == ' ' || peek() == '\t')) ++i_;
  }
  void skip_comment() {
    if (peek() == '#') {
      while (!at_end() && peek() != '\n') ++i_;
    }
  }
  void newline() {
    if (peek() == '\r') ++i_;
    if (peek() != '\n') fail("expected end of line");
    ++i_;
    ++line_;
  }
  void skip_blank_lines() {
    while (true) {
      skip_ws();
      skip_comment();
      if (at_end()) return;
      if (peek() == '\n' || peek() == '\r') {
        newline();
      } else {
        return;
      }
    }
  }
  void end_of_line() {
    skip_ws();
    skip_comment();
    if (!at_end()) newline();
  }
  // Whitespace, comments and newlines inside arrays.
  void skip_array_space() {
    while (true) {
      skip_ws();
      skip_comment();
      if (peek() == '\n' || peek() == '\r') {
        newline();
      } else {
        return;
      }
    }
  }

  std::string key_part() {
    skip_ws();
    if (peek() == '"') return basic_string();
    const std::size_t start = i_;
    while (!at_end() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-')) ++i_;
    if (i_ == start) fail("expected a key");
    return std::string(s_.substr(start, i_ - start));
  }

  std::vector<std::string> dotted_key() {
    std::vector<std::string> parts{key_part()};
    skip_ws();
    while (peek() == '.') {
      ++i_;
      parts.push_back(key_part());
      skip_ws();
    }
    return parts;
  }

  nlohmann::ordered_json* header(nlohmann::ordered_json& root) {
    ++i_;
    const bool array = peek() == '[';
    if (array) ++i_;
    const auto path = dotted_key();
    if (peek() != ']') fail("expected ']' to close table header");
    ++i_;
    if (array) {
      if (peek() != ']') fail("expected ']]' to close array-of-tables header");
      ++i_;
    }
    nlohmann::ordered_json* node = &root;
    for (std::size_t k = 0; k + 1 < path.size(); ++k) {
      node = &descend(*node, path[k]);
    }
    const std::string& last = path.back();
    if (array) {
      auto& arr = (*node)[last];
      if (arr.is_null()) arr = nlohmann::ordered_json::array();
      if (!arr.is_array()) fail("'" + last + "' is not an array of tables");
      arr.push_back(nlohmann::ordered_json::object());
      return &arr.back();
    }
    if (node->contains(last)) {
      auto& existing = (*node)[last];
      if (!existing.is_object() || defined_tables_.count(existing_id(path))) fail("table '" + last + "' defined twice");
    }
    defined_tables_.insert(existing_id(path));
    auto& t = (*node)[last];
    if (t.is_null()) t = nlohmann::ordered_json::object();
    return &t;
  }

  std::string existing_id(const std::vector<std::string>& path) const {
    std::string id;
    for (const auto& p : path) id += p + '\x1f';
    return id;
  }

  // Implicit parent tables; the last element of an array of tables.
  nlohmann::ordered_json& descend(nlohmann::ordered_json& node, const std::string& key) {
    auto& child = node[key];
    if (child.is_null()) child = nlohmann::ordered_json::object();
    if (child.is_array() && !child.empty() && child.back().is_object()) return child.back();
    if (!child.is_object()) fail("'" + key + "' is not a table");
    return child;
  }

  void key_value(nlohmann::ordered_json& table) {
    const auto path = dotted_key();
    if (peek() != '=') fail("expected '=' after key");
    ++i_;
    skip_ws();
    nlohmann::ordered_json* node = &table;
    for (std::size_t k = 0; k + 1 < path.size(); ++k) node = &descend(*node, path[k]);
    if (node->contains(path.back())) fail("duplicate key '" + path.back() + "'");
    (*node)[path.back()] = value();
  }

  nlohmann::ordered_json value() {
    const char c = peek();
    if (c == '"') return basic_string();
    if (c == '[') return array();
    if (s_.substr(i_, 4) == "true") {
      i_ += 4;
      return true;
    }
    if (s_.substr(i_, 5) == "false") {
      i_ += 5;
      return false;
    }
    return number();
  }

  std::string basic_string() {
    if (s_.substr(i_, 3) == "\"\"\"") fail("multi-line strings are not supported");
    ++i_;
    std::string out;
    while (true) {
      if (at_end() || peek() == '\n') fail("unterminated string");
      const char c = s_[i_++];
      if (c == '"') break;
      if (c != '\\') {
        out += c;
        continue;
      }
      if (at_end()) fail("unterminated escape");
      switch (s_[i_++]) {
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        default: fail("unsupported escape sequence");
      }
    }
    return out;
  }

  nlohmann::ordered_json array() {
    ++i_;
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    skip_array_space();
    while (peek() != ']') {
      if (at_end()) fail("unterminated array");
      arr.push_back(value());
      skip_array_space();
      if (peek() == ',') {
        ++i_;
        skip_array_space();
      } else if (peek() != ']') {
        fail("expected ',' or ']' in array");
      }
    }
    ++i_;
    return arr;
  }

  nlohmann::ordered_json number() {
    const std::size_t start = i_;
    while (!at_end() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '+' || peek() == '-' ||
                         peek() == '.' || peek() == '_')) {
      ++i_;
    }
    std::string tok;
    for (char c : s_.substr(start, i_ - start)) {
      if (c != '_') tok += c;
    }
    if (tok.empty()) fail("expected a value");
    const char* b = tok.data();
    const char* e = tok.data() + tok.size();
    if (*b == '+') ++b;
    const bool is_float = tok.find_first_of(".eE") != std::string::npos;
    if (!is_float) {
      long long v = 0;
      const auto r = std::from_chars(b, e, v);
      if (r.ec == std::errc() && r.ptr == e) return v;
    } else {
      double v = 0.0;
      const auto r = std::from_chars(b, e, v);
      if (r.ec == std::errc() && r.ptr == e) return v;
    }
    fail("invalid value '" + tok + "'");
  }

  std::string_view s_;
  std::size_t i_ = 0;
  std::size_t line_ = 1;
  std::set<std::string> defined_tables_;
};

}  // namespace detail

inline nlohmann::ordered_json parse_toml(std::string_view text) { return detail::TomlParser(text).parse(); }

inline nlohmann::ordered_json load_toml(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_toml(ss.str());
  } catch (const TomlError& e) {
    throw TomlError(e.reason(), e.line(), path.string());
  }
}

}  // namespace neuroedge
