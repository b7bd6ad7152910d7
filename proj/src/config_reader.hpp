#pragma once

#include <algorithm>
#include <initializer_list>
#include <string>
#include <vector>

#include <json.hpp>

#include "batchorder/errors.hpp"

namespace batchorder::detail {

/// Collects every problem instead of stopping at the first.
class Reader {
 public:
  std::vector<std::string> errors;

  void unknown_keys(const nlohmann::json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
    for (const auto& [key, _] : obj.items()) {
      const bool ok = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
      if (!ok) errors.push_back(path + key + ": unknown key");
    }
  }

  bool object(const nlohmann::json& obj, const std::string& path) {
    if (obj.is_object()) return true;
    errors.push_back(path + ": expected an object");
    return false;
  }

  template <class T>
  void get(const nlohmann::json& obj, const std::string& path, const char* key, T& out) {
    if (!obj.contains(key)) return;
    try {
      out = obj.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      errors.push_back(path + key + ": wrong type");
    }
  }

  template <class Parse, class T>
  void parse(const nlohmann::json& obj, const std::string& path, const char* key, T& out, Parse fn) {
    if (!obj.contains(key)) return;
    if (!obj.at(key).is_string()) {
      errors.push_back(path + key + ": expected a string");
      return;
    }
    try {
      out = fn(obj.at(key).get<std::string>());
    } catch (const Error& e) {
      errors.push_back(path + key + ": " + e.what());
    }
  }

  void check(bool ok, const std::string& key, const std::string& why) {
    if (!ok) errors.push_back(key + ": " + why);
  }
};

}  // namespace batchorder::detail
