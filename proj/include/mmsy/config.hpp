// INI-style configuration: `[section]` headers and `key = value` lines,
// `#` or `;` comments. Unknown sections or keys are rejected so typos fail
// loudly instead of silently falling back to defaults.
#pragma once

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mmsy/errors.hpp"
#include "mmsy/types.hpp"

namespace mmsy {

class IniFile {
public:
  static IniFile parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str(), path);
  }

  static IniFile parse_string(const std::string& text,
                              const std::string& name = "<config>") {
    IniFile ini;
    ini.name_ = name;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::string s = trim(line);
      if (s.empty() || s[0] == '#' || s[0] == ';') continue;
      if (s.front() == '[') {
        if (s.back() != ']')
          throw ParseError(name + ":" + std::to_string(lineno) +
                           ": malformed section header");
        section = trim(s.substr(1, s.size() - 2));
        ini.sections_[section];  // register even if empty
        continue;
      }
      auto eq = s.find('=');
      if (eq == std::string::npos)
        throw ParseError(name + ":" + std::to_string(lineno) +
                         ": expected key = value");
      std::string key = trim(s.substr(0, eq));
      std::string value = trim(s.substr(eq + 1));
      if (key.empty())
        throw ParseError(name + ":" + std::to_string(lineno) + ": empty key");
      auto& sec = ini.sections_[section];
      if (sec.count(key))
        throw ParseError(name + ":" + std::to_string(lineno) +
                         ": duplicate key '" + key + "'");
      sec[key] = value;
    }
    return ini;
  }

  bool has(const std::string& section, const std::string& key) const {
    auto it = sections_.find(section);
    return it != sections_.end() && it->second.count(key) > 0;
  }

  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const {
    consume(section, key);
    auto it = sections_.find(section);
    if (it == sections_.end()) return fallback;
    auto kt = it->second.find(key);
    return kt == it->second.end() ? fallback : kt->second;
  }

  double get_number(const std::string& section, const std::string& key,
                    double fallback) const {
    if (!has(section, key)) {
      consume(section, key);
      return fallback;
    }
    const std::string v = get_string(section, key, "");
    try {
      size_t pos = 0;
      double d = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw ValidationError(name_ + ": [" + section + "] " + key +
                            ": expected a number, got '" + v + "'");
    }
  }

  int get_int(const std::string& section, const std::string& key,
              int fallback) const {
    double d = get_number(section, key, fallback);
    int i = static_cast<int>(d);
    if (static_cast<double>(i) != d)
      throw ValidationError(name_ + ": [" + section + "] " + key +
                            ": expected an integer");
    return i;
  }

  uint64_t get_u64(const std::string& section, const std::string& key,
                   uint64_t fallback) const {
    if (!has(section, key)) {
      consume(section, key);
      return fallback;
    }
    const std::string v = get_string(section, key, "");
    try {
      size_t pos = 0;
      uint64_t u = std::stoull(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return u;
    } catch (const std::exception&) {
      throw ValidationError(name_ + ": [" + section + "] " + key +
                            ": expected an unsigned integer, got '" + v + "'");
    }
  }

  std::vector<int> get_int_list(const std::string& section,
                                const std::string& key,
                                const std::vector<int>& fallback) const {
    if (!has(section, key)) {
      consume(section, key);
      return fallback;
    }
    const std::string v = get_string(section, key, "");
    std::vector<int> out;
    std::istringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        out.push_back(std::stoi(trim(item)));
      } catch (const std::exception&) {
        throw ValidationError(name_ + ": [" + section + "] " + key +
                              ": expected a comma-separated integer list");
      }
    }
    return out;
  }

  // Call after all get_* reads; any key never consumed is unknown.
  void reject_unknown_keys() const {
    for (const auto& [section, kv] : sections_) {
      for (const auto& [key, value] : kv) {
        if (!consumed_.count(section + "\x1f" + key))
          throw ValidationError(name_ + ": unknown key '" + key +
                                "' in section [" + section + "]");
      }
    }
  }

  const std::string& name() const { return name_; }

private:
  void consume(const std::string& section, const std::string& key) const {
    consumed_.insert(section + "\x1f" + key);
  }

  static std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  std::string name_;
  std::map<std::string, std::map<std::string, std::string>> sections_;
  mutable std::set<std::string> consumed_;
};

// Reads the [run]/[ensemble]/[emulator]/[design]/[nash] sections into a
// RunConfig. Every field has the paper-scale default.
inline RunConfig run_config_from_ini(const IniFile& ini) {
  RunConfig c;
  c.history.first = ini.get_int("run", "history_start", c.history.first);
  c.history.last = ini.get_int("run", "history_end", c.history.last);
  c.horizon = ini.get_int("run", "horizon", c.horizon);
  c.risk_threshold = ini.get_number("run", "risk_threshold", c.risk_threshold);
  c.acceptance_probability =
      ini.get_number("run", "acceptance_probability", c.acceptance_probability);
  auto sizes = ini.get_int_list(
      "run", "round_sizes",
      {c.round_sizes[0], c.round_sizes[1], c.round_sizes[2], c.round_sizes[3]});
  if (sizes.size() != 4)
    throw ValidationError("config: round_sizes must list exactly 4 rounds");
  for (int r = 0; r < 4; ++r) c.round_sizes[static_cast<size_t>(r)] = sizes[static_cast<size_t>(r)];
  c.draws = ini.get_int("run", "draws", c.draws);
  c.threads = ini.get_int("run", "threads", c.threads);
  c.init_pool = ini.get_int("nash", "init_pool", c.init_pool);
  c.response_pool = ini.get_int("nash", "response_pool", c.response_pool);
  c.msy_grid = ini.get_int("nash", "msy_grid", c.msy_grid);
  c.mcmc_iterations = ini.get_int("ensemble", "iterations", c.mcmc_iterations);
  c.mcmc_burn_in = ini.get_int("ensemble", "burn_in", c.mcmc_burn_in);
  c.mcmc_chains = ini.get_int("ensemble", "chains", c.mcmc_chains);
  c.emulator_restarts = ini.get_int("emulator", "restarts", c.emulator_restarts);
  c.emulator_max_iter = ini.get_int("emulator", "max_iter", c.emulator_max_iter);
  c.sobol_skip = ini.get_int("design", "sobol_skip", c.sobol_skip);
  return c;
}

}  // namespace mmsy
