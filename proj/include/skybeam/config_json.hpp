#pragma once

// Small helpers for reading typed, validated fields out of JSON config blocks.

#include <json.hpp>

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "skybeam/error.hpp"

namespace skybeam::cfg {

using json = nlohmann::json;

inline std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

inline const json& object_at(const json& j, const std::string& key, const std::string& path) {
  static const json empty = json::object();
  if (!j.contains(key)) return empty;
  const json& v = j.at(key);
  if (!v.is_object()) throw ConfigError(join(path, key), "expected an object");
  return v;
}

inline double number(const json& j, const std::string& key, double fallback, const std::string& path) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number()) throw ConfigError(join(path, key), "expected a number");
  return v.get<double>();
}

inline long integer(const json& j, const std::string& key, long fallback, const std::string& path) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_integer()) throw ConfigError(join(path, key), "expected an integer");
  return v.get<long>();
}

inline std::uint64_t seed(const json& j, const std::string& key, std::uint64_t fallback, const std::string& path) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0)
    throw ConfigError(join(path, key), "expected a non-negative integer seed");
  return v.get<std::uint64_t>();
}

inline bool boolean(const json& j, const std::string& key, bool fallback, const std::string& path) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_boolean()) throw ConfigError(join(path, key), "expected true or false");
  return v.get<bool>();
}

inline std::string string(const json& j, const std::string& key, const std::string& fallback,
                          const std::string& path) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_string()) throw ConfigError(join(path, key), "expected a string");
  return v.get<std::string>();
}

inline std::vector<double> numbers(const json& j, const std::string& key, std::vector<double> fallback,
                                   const std::string& path) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_array()) throw ConfigError(join(path, key), "expected an array of numbers");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) throw ConfigError(join(path, key), "expected an array of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

inline std::vector<int> integers(const json& j, const std::string& key, std::vector<int> fallback,
                                 const std::string& path) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_array()) throw ConfigError(join(path, key), "expected an array of integers");
  std::vector<int> out;
  for (const auto& e : v) {
    if (!e.is_number_integer()) throw ConfigError(join(path, key), "expected an array of integers");
    out.push_back(e.get<int>());
  }
  return out;
}

/// Rejects keys outside `allowed` so typos surface as field-level errors.
inline void allow_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& path) {
  if (!j.is_object()) return;
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(join(path, key), "unknown key");
  }
}

inline void check(bool cond, const std::string& field, const std::string& what) {
  if (!cond) throw ConfigError(field, what);
}

}  // namespace skybeam::cfg
