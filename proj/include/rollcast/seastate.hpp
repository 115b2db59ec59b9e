#pragma once

// Long-crested irregular sea from the ITTC-modified Pierson-Moskowitz
// spectrum, synthesized as a sum of regular component waves.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace rollcast {

struct SpectrumParams {
  double significant_wave_height = 0.284;  // m
  double peak_period = 2.15;               // s
  std::size_t n_components = 240;
  double omega_min = 0.0;  // rad/s
  double omega_max = 0.0;  // rad/s
  double gravity = 9.81;

  double peak_frequency() const;
  /// Zeroth spectral moment (H_s / 4)^2.
  double m0() const;
  /// Throws DomainError when an invariant is violated.
  void validate() const;

  /// Band (0.25, 4) x peak frequency.
  static SpectrumParams with_default_band(double hs, double tp, std::size_t n_components = 240);
};

struct ComponentWaveSet {
  std::vector<double> omegas;
  std::vector<double> amplitudes;
  std::vector<double> phases;
  std::vector<double> wavenumbers;
  SpectrumParams source_params;
  std::uint64_t seed = 0;

  std::size_t size() const { return omegas.size(); }
};

/// Position in the ship-fixed horizontal plane, metres.
struct Probe {
  double x = 0.0;
  double y = 0.0;
};

/// heading_angle in degrees: 180 head seas, 90 port beam, 0 following.
struct SeaKinematics {
  double heading_angle = 90.0;
  double ship_speed = 0.0;

  void validate() const;
  double heading_radians() const;
};

/// S(w) = 173 Hs^2 / (T1^4 w^5) exp(-691 / (T1^4 w^4)), T1 = Tp / 1.296.
double spectral_density(double omega, const SpectrumParams& params);

/// Trapezoid integral of S over [omega_min, omega_max].
double spectrum_energy(const SpectrumParams& params, std::size_t n_intervals = 20000);

/// Mid-point equal-interval discretization with seeded uniform phases.
ComponentWaveSet discretize_spectrum(const SpectrumParams& params, std::uint64_t seed);

/// w_e = w - k U cos(chi)
double encounter_frequency(double omega, double wavenumber, const SeaKinematics& kin);

double probe_elevation(const ComponentWaveSet& waves, const Probe& probe, const SeaKinematics& kin, double t);

struct ElevationTable {
  std::vector<double> t;
  /// Row-major [n_steps x n_probes].
  std::vector<double> elevation;
  std::size_t n_probes = 0;

  std::size_t n_steps() const { return t.size(); }
  double at(std::size_t step, std::size_t probe) const { return elevation[step * n_probes + probe]; }
};

/// floor(duration / dt) + 1, tolerant of representation error in duration / dt.
std::size_t sample_count(double duration, double dt);

ElevationTable synthesize_probe_series(const ComponentWaveSet& waves, std::span<const Probe> probes,
                                       const SeaKinematics& kin, double duration, double dt);

/// Header `t,probe1,probe2,...`, 17 significant digits.
void write_elevation_csv(std::ostream& os, const ElevationTable& table);
void write_elevation_csv(const std::filesystem::path& path, const ElevationTable& table);

}  // namespace rollcast
