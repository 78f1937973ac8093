#pragma once

// Run configuration: INI-style `[section]` / `key = value` files, validated against a
// fixed schema. Any key can be overridden with `section.key=value`.

#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "util.hpp"

namespace quantgym {

enum class ValueType { string, real, integer, boolean, list };

using Schema = std::map<std::string, std::map<std::string, ValueType>>;

inline const Schema& run_schema() {
  using V = ValueType;
  static const Schema s = {
      {"data",
       {{"path", V::string},
        {"frequency", V::string},
        {"calendar", V::string},
        {"fill", V::string},
        {"min_coverage", V::real},
        {"vix", V::string},
        {"sentiment_events", V::string},
        {"fundamental_events", V::string}}},
      {"features",
       {{"indicators", V::list},
        {"turbulence", V::boolean},
        {"turbulence_window", V::integer},
        {"turbulence_correction", V::boolean}}},
      {"env",
       {{"type", V::string},
        {"initial_capital", V::real},
        {"cost_rate", V::real},
        {"h_max", V::real},
        {"allow_short", V::boolean},
        {"allow_margin", V::boolean},
        {"risk_indicator", V::string},
        {"risk_threshold", V::real},
        {"reward_scale", V::real},
        {"charge_turnover", V::boolean}}},
      {"agent",
       {{"type", V::string},
        {"policy", V::string},
        {"total_steps", V::integer},
        {"learning_rate", V::real},
        {"gamma", V::real},
        {"n_steps", V::integer},
        {"num_envs", V::integer},
        {"entropy_coef", V::real},
        {"value_coef", V::real},
        {"hidden", V::integer},
        {"max_grad_norm", V::real},
        {"init_log_std", V::real},
        {"cem_iterations", V::integer},
        {"cem_population", V::integer},
        {"cem_elite_fraction", V::real},
        {"cem_init_std", V::real},
        {"rebalance_every", V::integer},
        {"risk_aversion", V::real},
        {"estimation_window", V::integer}}},
      {"pipeline",
       {{"N", V::integer},
        {"S", V::integer},
        {"D", V::integer},
        {"steps_per_day", V::integer},
        {"annualization_basis", V::real},
        {"risk_free", V::real}}},
      {"sentiment",
       {{"dictionary", V::string},
        {"shifters", V::string},
        {"lemma_rules", V::string},
        {"abbreviations", V::string},
        {"companies", V::string},
        {"corpus", V::string},
        {"input", V::string},
        {"financial", V::string},
        {"general", V::string},
        {"resolutions", V::string},
        {"lexicon", V::string},
        {"synonyms", V::string},
        {"subjectivity", V::string},
        {"overrides", V::string},
        {"alpha", V::real}}},
      {"run", {{"seed", V::integer}, {"output_dir", V::string}}},
  };
  return s;
}

// Agent keys may also appear as `grid.<key>` (and `grid.type`) holding a list of values.
inline std::optional<ValueType> schema_type(const std::string& section, const std::string& key) {
  const auto& s = run_schema();
  auto sec = s.find(section);
  if (sec == s.end()) return std::nullopt;
  if (section == "agent" && key.rfind("grid.", 0) == 0) {
    auto base = key.substr(5);
    if (base == "policy" || !sec->second.count(base)) return std::nullopt;
    return ValueType::list;
  }
  auto it = sec->second.find(key);
  if (it == sec->second.end()) return std::nullopt;
  return it->second;
}

class Config {
 public:
  static Config parse(std::string_view text, const std::string& source = "config") {
    Config c;
    std::istringstream in{std::string(text)};
    std::string line, section;
    int ln = 0;
    while (std::getline(in, line)) {
      ++ln;
      auto t = util::trim(line);
      if (t.empty() || t[0] == '#' || t[0] == ';') continue;
      const std::string where = source + ":" + std::to_string(ln);
      if (t.front() == '[') {
        if (t.back() != ']') throw ConfigError(where + ": malformed section header");
        section = std::string(util::trim(t.substr(1, t.size() - 2)));
        if (!run_schema().count(section)) throw ConfigError(where + ": unknown section [" + section + "]");
        continue;
      }
      auto eq = t.find('=');
      if (eq == std::string_view::npos) throw ConfigError(where + ": expected key = value");
      if (section.empty()) throw ConfigError(where + ": key outside of a section");
      c.set(section, std::string(util::trim(t.substr(0, eq))), std::string(util::trim(t.substr(eq + 1))), where);
    }
    return c;
  }

  static Config load(const std::string& path) {
    try {
      return parse(util::read_file(path), path);
    } catch (const DataError& e) {
      throw ConfigError(e.what());
    }
  }

  // `section.key=value`
  void apply_override(std::string_view assignment) {
    auto eq = assignment.find('=');
    auto dot = assignment.find('.');
    if (eq == std::string_view::npos || dot == std::string_view::npos || dot > eq)
      throw ConfigError("override must look like section.key=value: " + std::string(assignment));
    set(std::string(util::trim(assignment.substr(0, dot))), std::string(util::trim(assignment.substr(dot + 1, eq - dot - 1))),
        std::string(util::trim(assignment.substr(eq + 1))), "--set");
  }

  void set(const std::string& section, const std::string& key, const std::string& value, const std::string& where = "") {
    auto type = schema_type(section, key);
    if (!type) throw ConfigError(where + ": unknown key " + section + "." + key);
    validate_value(*type, value, where + ": " + section + "." + key);
    if (section == "agent" && key.rfind("grid.", 0) == 0) {
      auto base = *schema_type(section, key.substr(5));
      for (const auto& item : split_list(value)) validate_value(base, item, where + ": " + section + "." + key);
    }
    values_[section][key] = value;
  }

  bool has(const std::string& section, const std::string& key) const {
    auto s = values_.find(section);
    return s != values_.end() && s->second.count(key);
  }

  std::string str(const std::string& section, const std::string& key, const std::string& def = "") const {
    if (!has(section, key)) return def;
    return values_.at(section).at(key);
  }
  double real(const std::string& section, const std::string& key, double def) const {
    return has(section, key) ? *util::parse_double(values_.at(section).at(key)) : def;
  }
  long long integer(const std::string& section, const std::string& key, long long def) const {
    return has(section, key) ? *util::parse_int(values_.at(section).at(key)) : def;
  }
  bool boolean(const std::string& section, const std::string& key, bool def) const {
    return has(section, key) ? parse_bool(values_.at(section).at(key)).value() : def;
  }
  std::vector<std::string> list(const std::string& section, const std::string& key,
                                std::vector<std::string> def = {}) const {
    return has(section, key) ? split_list(values_.at(section).at(key)) : def;
  }

  const std::map<std::string, std::string>& section(const std::string& name) const {
    static const std::map<std::string, std::string> none;
    auto it = values_.find(name);
    return it == values_.end() ? none : it->second;
  }

  // Sorted, normalized text; its digest identifies the run configuration.
  std::string canonical() const {
    std::string out;
    for (const auto& [sec, kv] : values_) {
      out += "[" + sec + "]\n";
      for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
    }
    return out;
  }

  static std::optional<bool> parse_bool(std::string_view v) {
    auto s = util::to_lower(v);
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    return std::nullopt;
  }

  static std::vector<std::string> split_list(std::string_view v) {
    std::vector<std::string> out;
    for (auto& item : util::split(v, ','))
      if (auto t = util::trim(item); !t.empty()) out.emplace_back(t);
    return out;
  }

 private:
  static void validate_value(ValueType type, const std::string& value, const std::string& where) {
    switch (type) {
      case ValueType::real:
        if (!util::parse_double(value)) throw ConfigError(where + ": expected a number, got '" + value + "'");
        break;
      case ValueType::integer:
        if (!util::parse_int(value)) throw ConfigError(where + ": expected an integer, got '" + value + "'");
        break;
      case ValueType::boolean:
        if (!parse_bool(value)) throw ConfigError(where + ": expected true/false, got '" + value + "'");
        break;
      case ValueType::list:
        if (split_list(value).empty()) throw ConfigError(where + ": empty list");
        break;
      case ValueType::string: break;
    }
  }

  std::map<std::string, std::map<std::string, std::string>> values_;
};

// Cartesian product of the `grid.*` agent keys, keys in sorted order; one empty point
// when there is no grid.
inline std::vector<std::map<std::string, std::string>> hyper_grid(const Config& cfg) {
  std::vector<std::map<std::string, std::string>> grid{{}};
  for (const auto& [key, value] : cfg.section("agent")) {
    if (key.rfind("grid.", 0) != 0) continue;
    auto base = key.substr(5);
    std::vector<std::map<std::string, std::string>> next;
    for (const auto& point : grid)
      for (const auto& v : Config::split_list(value)) {
        auto p = point;
        p[base] = v;
        next.push_back(std::move(p));
      }
    grid = std::move(next);
  }
  return grid;
}

}  // namespace quantgym
