#pragma once

// One-degree-of-freedom nonlinear roll oscillator driven by the wave slope at
// midship. Stands in for CFD-generated ship motion records.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rollcast/seastate.hpp"

namespace rollcast {

struct RollParams {
  double natural_period = 1.7;         // s
  double linear_damping_ratio = 0.05;  // zeta
  double quadratic_damping = 0.4;      // beta, 1/rad
  double cubic_restoring = 0.6;        // gamma, 1/rad^2
  double excitation_gain = 0.75;

  double natural_frequency() const;
  void validate() const;
};

struct RollState {
  double phi = 0.0;      // rad
  double phi_dot = 0.0;  // rad/s
};

/// Uniformly sampled roll angle plus wave elevations at three probes.
struct MotionRecord {
  std::vector<double> t;
  std::vector<double> roll;  // degrees
  /// Row-major [n x 3].
  std::vector<double> wave;
  double dt = 0.1;
  double heading = 90.0;
  std::uint64_t seed = 0;
  std::string label;
  /// Free-form provenance written to the JSON sidecar.
  nlohmann::json metadata = nlohmann::json::object();

  static constexpr std::size_t kProbes = 3;

  std::size_t size() const { return t.size(); }
  double wave_at(std::size_t i, std::size_t probe) const { return wave[i * kProbes + probe]; }
  /// Throws DataError when lengths or the time grid are inconsistent.
  void validate() const;
};

/// Normalized roll moment:
/// gain * w0^2 * sin(chi) * sum_i k_i a_i cos(-w_e,i t + eps_i), evaluated at midship.
double excitation_moment(const ComponentWaveSet& waves, const SeaKinematics& kin, const RollParams& params, double t);

/// (phi_dot, phi_ddot) with
/// phi_ddot = m - 2 zeta w0 phi_dot - beta phi_dot |phi_dot| - w0^2 (phi + gamma phi^3).
RollState roll_rhs(const RollState& state, double moment, const RollParams& params);

using Forcing = std::function<double(double)>;

/// Classical RK4 step; forcing is sampled at t, t + dt/2 and t + dt.
/// Throws IntegrationBlowup when the result is not finite.
RollState step_rk4(const RollState& state, double t, double dt, const Forcing& forcing, const RollParams& params);

struct SimulationSettings {
  double duration = 80.0;   // s
  double sim_dt = 0.005;    // s
  double output_dt = 0.1;   // s
  std::vector<Probe> probes = {{3.4, 0.3}, {3.6, 0.0}, {3.4, -0.3}};
};

/// Roll trajectory sampled every `stride` integration steps, in radians.
std::vector<RollState> integrate_roll(const Forcing& forcing, const RollParams& params, double sim_dt,
                                      std::size_t n_steps, std::size_t stride, RollState initial = {});

MotionRecord simulate_run(const SpectrumParams& spectrum, const RollParams& roll, const SeaKinematics& kin,
                          const SimulationSettings& settings, std::uint64_t seed, std::string label = {});

/// Header `t,roll_deg,wave1,wave2,wave3`, shortest round-trip decimals.
void write_motion_csv(std::ostream& os, const MotionRecord& record);
/// Writes `path` and a JSON sidecar next to it (same stem, `.json`).
void save_motion_record(const std::filesystem::path& csv_path, const MotionRecord& record);

/// Parses the CSV contract. Malformed rows raise DataError naming the line.
MotionRecord read_motion_csv(std::istream& is, const std::string& source_name = "<stream>");
/// Reads the CSV and, when present, the JSON sidecar for heading/seed/label.
MotionRecord load_motion_record(const std::filesystem::path& csv_path);

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path);

}  // namespace rollcast
