#pragma once

// Flat key-value configuration. Text form, one entry per line:
//
//   # comment
//   plant = canonical-rip
//   bo.n_max = 150
//   lqr.q = 1, 10, 100, 10, 1
//   controller.d_c = -20.96 -39.76 72.74 92.61 -0.58
//
// Lists are separated by commas or whitespace; matrix rows by ';'. JSON input
// is flattened into the same dotted keys (nested objects join with '.').

#include <cctype>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "furuta/numerics.hpp"

namespace furuta {

namespace detail {

inline std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string> split_tokens(const std::string& s) {
  std::vector<std::string> out;
  std::string token;
  for (char ch : s) {
    if (ch == ',' || std::isspace(static_cast<unsigned char>(ch))) {
      if (!token.empty()) out.push_back(std::move(token));
      token.clear();
    } else {
      token.push_back(ch);
    }
  }
  if (!token.empty()) out.push_back(std::move(token));
  return out;
}

inline double parse_double(const std::string& token, const std::string& key) {
  const std::string t = trim(token);
  double v = 0.0;
  const auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || end != t.data() + t.size() || t.empty()) {
    throw ConfigError("config '" + key + "': '" + token + "' is not a number");
  }
  return v;
}

inline std::string json_scalar(const nlohmann::json& j, const std::string& key) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_boolean()) return j.get<bool>() ? "true" : "false";
  if (j.is_number()) return j.dump();
  throw ConfigError("config '" + key + "': unsupported JSON value");
}

inline void flatten_json(const nlohmann::json& j, const std::string& prefix,
                         std::map<std::string, std::string>& out) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) flatten_json(v, prefix.empty() ? k : prefix + "." + k, out);
    return;
  }
  if (prefix.empty()) throw ConfigError("config: JSON document must be an object");
  if (j.is_array()) {
    std::string joined;
    bool nested = false;
    for (std::size_t i = 0; i < j.size(); ++i) {
      const auto& item = j[i];
      if (item.is_array()) {
        nested = true;
        std::string row;
        for (std::size_t c = 0; c < item.size(); ++c) row += (c ? ", " : "") + json_scalar(item[c], prefix);
        joined += (i ? "; " : "") + row;
      } else {
        if (nested) throw ConfigError("config '" + prefix + "': mixed JSON array nesting");
        joined += (i ? ", " : "") + json_scalar(item, prefix);
      }
    }
    out[prefix] = joined;
    return;
  }
  out[prefix] = json_scalar(j, prefix);
}

}  // namespace detail

class Config {
 public:
  static Config parse_text(const std::string& text, const std::string& origin = "<text>") {
    Config cfg;
    std::istringstream in(text);
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
      ++number;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw ConfigError(origin + ":" + std::to_string(number) + ": expected 'key = value'");
      }
      const std::string key = detail::trim(line.substr(0, eq));
      if (key.empty()) throw ConfigError(origin + ":" + std::to_string(number) + ": empty key");
      cfg.entries_[key] = detail::trim(line.substr(eq + 1));
    }
    return cfg;
  }

  static Config parse_json(const std::string& text, const std::string& origin = "<json>") {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(origin + ": invalid JSON: " + e.what());
    }
    Config cfg;
    detail::flatten_json(doc, "", cfg.entries_);
    return cfg;
  }

  /// Reads a file; JSON when the extension is .json or the content starts with '{'.
  static Config load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    const std::string text = buffer.str();
    const std::string body = detail::trim(text);
    if (path.extension() == ".json" || (!body.empty() && body.front() == '{')) {
      return parse_json(text, path.string());
    }
    return parse_text(text, path.string());
  }

  void set(const std::string& key, const std::string& value) { entries_[key] = value; }
  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  /// Entries of `other` replace ours.
  void merge(const Config& other) {
    for (const auto& [k, v] : other.entries_) entries_[k] = v;
  }

  const std::map<std::string, std::string>& entries() const { return entries_; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    const auto it = entries_.find(key);
    return it == entries_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    return has(key) ? detail::parse_double(entries_.at(key), key) : fallback;
  }

  long get_int(const std::string& key, long fallback) const {
    if (!has(key)) return fallback;
    const std::string t = entries_.at(key);
    long v = 0;
    const auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || end != t.data() + t.size() || t.empty()) {
      throw ConfigError("config '" + key + "': '" + t + "' is not an integer");
    }
    return v;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string& t = entries_.at(key);
    if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
    if (t == "false" || t == "0" || t == "no" || t == "off") return false;
    throw ConfigError("config '" + key + "': '" + t + "' is not a boolean");
  }

  std::vector<double> get_list(const std::string& key) const {
    std::vector<double> out;
    for (const auto& token : detail::split_tokens(get_string(key, ""))) {
      out.push_back(detail::parse_double(token, key));
    }
    return out;
  }

  Vector get_vector(const std::string& key) const {
    const auto values = get_list(key);
    return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
  }

  /// Rows separated by ';'. A single row is returned as 1 x n.
  Matrix get_matrix(const std::string& key) const {
    std::vector<std::vector<double>> rows;
    std::stringstream ss(get_string(key, ""));
    std::string row_text;
    while (std::getline(ss, row_text, ';')) {
      std::vector<double> row;
      for (const auto& token : detail::split_tokens(row_text)) row.push_back(detail::parse_double(token, key));
      if (!row.empty()) rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ConfigError("config '" + key + "': empty matrix");
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != rows.front().size()) throw ConfigError("config '" + key + "': ragged matrix");
      for (std::size_t j = 0; j < rows[i].size(); ++j) {
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
      }
    }
    return m;
  }

  /// Throws ConfigError naming the first key not in `known`.
  void require_known(const std::set<std::string>& known) const {
    for (const auto& [k, v] : entries_) {
      if (!known.count(k)) throw ConfigError("config: unknown key '" + k + "'");
    }
  }

 private:
  std::map<std::string, std::string> entries_;
};

}  // namespace furuta
