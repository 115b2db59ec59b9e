#pragma once

// JSON bindings for the configuration blocks shared by the sidecar files,
// checkpoints and experiment configs. Missing keys keep their defaults.

#include <nlohmann/json.hpp>

#include "rollcast/rollsurrogate.hpp"
#include "rollcast/seastate.hpp"

namespace rollcast {

void to_json(nlohmann::json& j, const SpectrumParams& p);
void from_json(const nlohmann::json& j, SpectrumParams& p);

void to_json(nlohmann::json& j, const SeaKinematics& k);
void from_json(const nlohmann::json& j, SeaKinematics& k);

void to_json(nlohmann::json& j, const Probe& p);
void from_json(const nlohmann::json& j, Probe& p);

void to_json(nlohmann::json& j, const RollParams& p);
void from_json(const nlohmann::json& j, RollParams& p);

void to_json(nlohmann::json& j, const SimulationSettings& s);
void from_json(const nlohmann::json& j, SimulationSettings& s);

/// Reads `key` into `out` when present; wraps type errors in ConfigError.
template <typename T>
void read_optional(const nlohmann::json& j, const char* key, T& out);

}  // namespace rollcast

#include "rollcast/errors.hpp"

namespace rollcast {

template <typename T>
void read_optional(const nlohmann::json& j, const char* key, T& out) {
  if (!j.is_object()) throw ConfigError(std::string("expected an object around key '") + key + "'");
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return;
  try {
    out = it->template get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid value for '") + key + "': " + e.what());
  }
}

}  // namespace rollcast
