#include "rollcast/serialization.hpp"

namespace rollcast {

using nlohmann::json;

void to_json(json& j, const SpectrumParams& p) {
  j = json{{"significant_wave_height", p.significant_wave_height},
           {"peak_period", p.peak_period},
           {"n_components", p.n_components},
           {"omega_min", p.omega_min},
           {"omega_max", p.omega_max},
           {"gravity", p.gravity}};
}

void from_json(const json& j, SpectrumParams& p) {
  read_optional(j, "significant_wave_height", p.significant_wave_height);
  read_optional(j, "peak_period", p.peak_period);
  read_optional(j, "n_components", p.n_components);
  read_optional(j, "gravity", p.gravity);
  // A band left unset follows the peak frequency.
  p.omega_min = 0.25 * p.peak_frequency();
  p.omega_max = 4.0 * p.peak_frequency();
  read_optional(j, "omega_min", p.omega_min);
  read_optional(j, "omega_max", p.omega_max);
}

void to_json(json& j, const SeaKinematics& k) {
  j = json{{"heading_angle", k.heading_angle}, {"ship_speed", k.ship_speed}};
}

void from_json(const json& j, SeaKinematics& k) {
  read_optional(j, "heading_angle", k.heading_angle);
  read_optional(j, "ship_speed", k.ship_speed);
}

void to_json(json& j, const Probe& p) { j = json::array({p.x, p.y}); }

void from_json(const json& j, Probe& p) {
  if (j.is_array() && j.size() == 2) {
    p.x = j[0].get<double>();
    p.y = j[1].get<double>();
    return;
  }
  read_optional(j, "x", p.x);
  read_optional(j, "y", p.y);
}

void to_json(json& j, const RollParams& p) {
  j = json{{"natural_period", p.natural_period},
           {"linear_damping_ratio", p.linear_damping_ratio},
           {"quadratic_damping", p.quadratic_damping},
           {"cubic_restoring", p.cubic_restoring},
           {"excitation_gain", p.excitation_gain}};
}

void from_json(const json& j, RollParams& p) {
  read_optional(j, "natural_period", p.natural_period);
  read_optional(j, "linear_damping_ratio", p.linear_damping_ratio);
  read_optional(j, "quadratic_damping", p.quadratic_damping);
  read_optional(j, "cubic_restoring", p.cubic_restoring);
  read_optional(j, "excitation_gain", p.excitation_gain);
}

void to_json(json& j, const SimulationSettings& s) {
  j = json{{"duration", s.duration}, {"sim_dt", s.sim_dt}, {"output_dt", s.output_dt}, {"probes", s.probes}};
}

void from_json(const json& j, SimulationSettings& s) {
  read_optional(j, "duration", s.duration);
  read_optional(j, "sim_dt", s.sim_dt);
  read_optional(j, "output_dt", s.output_dt);
  read_optional(j, "probes", s.probes);
}

}  // namespace rollcast
