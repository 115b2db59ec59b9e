#include "rollcast/seastate.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <ostream>
#include <string>

#include <fmt/format.h>

#include "rollcast/errors.hpp"
#include "rollcast/gradcore.hpp"

namespace rollcast {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// ITTC two-parameter constants; T1 is the mean period.
constexpr double kSpectrumA = 173.0;
constexpr double kSpectrumB = 691.0;
constexpr double kPeakToMeanPeriod = 1.296;

}  // namespace

double SpectrumParams::peak_frequency() const { return kTwoPi / peak_period; }

double SpectrumParams::m0() const {
  const double q = significant_wave_height / 4.0;
  return q * q;
}

void SpectrumParams::validate() const {
  if (!(significant_wave_height > 0.0)) throw DomainError("significant_wave_height must be > 0");
  if (!(peak_period > 0.0)) throw DomainError("peak_period must be > 0");
  if (n_components < 1) throw DomainError("n_components must be >= 1");
  if (!(omega_min > 0.0 && omega_min < omega_max)) {
    throw DomainError(fmt::format("frequency band must satisfy 0 < omega_min < omega_max (got {}, {})", omega_min,
                                  omega_max));
  }
  if (!(gravity > 0.0)) throw DomainError("gravity must be > 0");
}

SpectrumParams SpectrumParams::with_default_band(double hs, double tp, std::size_t n_components) {
  SpectrumParams p;
  p.significant_wave_height = hs;
  p.peak_period = tp;
  p.n_components = n_components;
  p.omega_min = 0.25 * p.peak_frequency();
  p.omega_max = 4.0 * p.peak_frequency();
  return p;
}

void SeaKinematics::validate() const {
  if (!(heading_angle >= 0.0 && heading_angle < 360.0)) throw DomainError("heading_angle must lie in [0, 360)");
  if (!(ship_speed >= 0.0)) throw DomainError("ship_speed must be >= 0");
}

double SeaKinematics::heading_radians() const { return heading_angle * std::numbers::pi / 180.0; }

double spectral_density(double omega, const SpectrumParams& params) {
  if (!(omega > 0.0)) throw DomainError(fmt::format("spectral_density: omega must be > 0 (got {})", omega));
  const double t1 = params.peak_period / kPeakToMeanPeriod;
  const double t1_4 = t1 * t1 * t1 * t1;
  const double hs = params.significant_wave_height;
  const double a = kSpectrumA * hs * hs / t1_4;
  const double b = kSpectrumB / t1_4;
  const double w4 = omega * omega * omega * omega;
  return a / (w4 * omega) * std::exp(-b / w4);
}

double spectrum_energy(const SpectrumParams& params, std::size_t n_intervals) {
  params.validate();
  const double h = (params.omega_max - params.omega_min) / static_cast<double>(n_intervals);
  double sum = 0.5 * (spectral_density(params.omega_min, params) + spectral_density(params.omega_max, params));
  for (std::size_t i = 1; i < n_intervals; ++i) {
    sum += spectral_density(params.omega_min + static_cast<double>(i) * h, params);
  }
  return sum * h;
}

ComponentWaveSet discretize_spectrum(const SpectrumParams& params, std::uint64_t seed) {
  params.validate();
  const std::size_t n = params.n_components;
  const double dw = (params.omega_max - params.omega_min) / static_cast<double>(n);

  ComponentWaveSet set;
  set.source_params = params;
  set.seed = seed;
  set.omegas.resize(n);
  set.amplitudes.resize(n);
  set.phases.resize(n);
  set.wavenumbers.resize(n);

  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = params.omega_min + (static_cast<double>(i) + 0.5) * dw;
    set.omegas[i] = w;
    set.amplitudes[i] = std::sqrt(2.0 * spectral_density(w, params) * dw);
    set.phases[i] = kTwoPi * rng.uniform();
    set.wavenumbers[i] = w * w / params.gravity;
  }
  return set;
}

double encounter_frequency(double omega, double wavenumber, const SeaKinematics& kin) {
  return omega - wavenumber * kin.ship_speed * std::cos(kin.heading_radians());
}

double probe_elevation(const ComponentWaveSet& waves, const Probe& probe, const SeaKinematics& kin, double t) {
  if (!(t >= 0.0)) throw DomainError("probe_elevation: t must be >= 0");
  const double chi = kin.heading_radians();
  const double cx = std::cos(chi);
  const double sy = std::sin(chi);
  const double along = probe.x * cx + probe.y * sy;
  double eta = 0.0;
  for (std::size_t i = 0; i < waves.size(); ++i) {
    const double k = waves.wavenumbers[i];
    const double we = waves.omegas[i] - k * kin.ship_speed * cx;
    eta += waves.amplitudes[i] * std::cos(k * along - we * t + waves.phases[i]);
  }
  return eta;
}

std::size_t sample_count(double duration, double dt) {
  if (!(duration > 0.0) || !(dt > 0.0)) throw DomainError("duration and dt must be > 0");
  return static_cast<std::size_t>(std::floor(duration / dt + 1e-9)) + 1;
}

ElevationTable synthesize_probe_series(const ComponentWaveSet& waves, std::span<const Probe> probes,
                                       const SeaKinematics& kin, double duration, double dt) {
  if (probes.empty()) throw DomainError("synthesize_probe_series: no probes given");
  const std::size_t n = sample_count(duration, dt);
  ElevationTable table;
  table.n_probes = probes.size();
  table.t.resize(n);
  table.elevation.resize(n * probes.size());
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * dt;
    table.t[k] = t;
    for (std::size_t j = 0; j < probes.size(); ++j) {
      table.elevation[k * probes.size() + j] = probe_elevation(waves, probes[j], kin, t);
    }
  }
  return table;
}

void write_elevation_csv(std::ostream& os, const ElevationTable& table) {
  os << 't';
  for (std::size_t j = 0; j < table.n_probes; ++j) os << ",probe" << (j + 1);
  os << '\n';
  for (std::size_t k = 0; k < table.n_steps(); ++k) {
    os << fmt::format("{:.17g}", table.t[k]);
    for (std::size_t j = 0; j < table.n_probes; ++j) os << fmt::format(",{:.17g}", table.at(k, j));
    os << '\n';
  }
}

void write_elevation_csv(const std::filesystem::path& path, const ElevationTable& table) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  write_elevation_csv(os, table);
}

}  // namespace rollcast
