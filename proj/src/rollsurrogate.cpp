#include "rollcast/rollsurrogate.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <fmt/format.h>

#include "rollcast/errors.hpp"
#include "rollcast/serialization.hpp"

namespace rollcast {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;
constexpr const char* kMotionHeader = "t,roll_deg,wave1,wave2,wave3";

bool finite(const RollState& s) { return std::isfinite(s.phi) && std::isfinite(s.phi_dot); }

RollState axpy(const RollState& s, double h, const RollState& d) {
  return {s.phi + h * d.phi, s.phi_dot + h * d.phi_dot};
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

}  // namespace

double RollParams::natural_frequency() const { return 2.0 * std::numbers::pi / natural_period; }

void RollParams::validate() const {
  if (!(natural_period > 0.0)) throw DomainError("natural_period must be > 0");
  if (!(linear_damping_ratio >= 0.0)) throw DomainError("linear_damping_ratio must be >= 0");
  if (!(quadratic_damping >= 0.0)) throw DomainError("quadratic_damping must be >= 0");
  if (!(excitation_gain >= 0.0)) throw DomainError("excitation_gain must be >= 0");
  if (!std::isfinite(cubic_restoring)) throw DomainError("cubic_restoring must be finite");
}

void MotionRecord::validate() const {
  if (!(dt > 0.0)) throw DataError("motion record dt must be > 0");
  if (roll.size() != t.size() || wave.size() != t.size() * kProbes) {
    throw DataError(fmt::format("motion record arrays disagree: {} times, {} roll, {} wave values", t.size(),
                                roll.size(), wave.size()));
  }
  for (std::size_t i = 1; i < t.size(); ++i) {
    const double expected = t[0] + static_cast<double>(i) * dt;
    if (std::abs(t[i] - expected) > 1e-6 * dt + 1e-9 * std::abs(expected)) {
      throw DataError(fmt::format("time column is not uniform with dt = {} at sample {}", dt, i));
    }
  }
}

double excitation_moment(const ComponentWaveSet& waves, const SeaKinematics& kin, const RollParams& params,
                         double t) {
  const double chi = kin.heading_radians();
  const double projection = std::sin(chi);
  const double cx = std::cos(chi);
  const double w0 = params.natural_frequency();
  double slope = 0.0;
  for (std::size_t i = 0; i < waves.size(); ++i) {
    const double k = waves.wavenumbers[i];
    const double we = waves.omegas[i] - k * kin.ship_speed * cx;
    slope += k * waves.amplitudes[i] * std::cos(-we * t + waves.phases[i]);
  }
  return params.excitation_gain * w0 * w0 * projection * slope;
}

RollState roll_rhs(const RollState& state, double moment, const RollParams& params) {
  const double w0 = params.natural_frequency();
  const double phi = state.phi;
  const double v = state.phi_dot;
  const double acc = moment - 2.0 * params.linear_damping_ratio * w0 * v - params.quadratic_damping * v * std::abs(v) -
                     w0 * w0 * (phi + params.cubic_restoring * phi * phi * phi);
  return {v, acc};
}

RollState step_rk4(const RollState& state, double t, double dt, const Forcing& forcing, const RollParams& params) {
  if (!(dt > 0.0)) throw DomainError("step_rk4: dt must be > 0");
  const double half = 0.5 * dt;
  const double m_mid = forcing(t + half);
  const RollState k1 = roll_rhs(state, forcing(t), params);
  const RollState k2 = roll_rhs(axpy(state, half, k1), m_mid, params);
  const RollState k3 = roll_rhs(axpy(state, half, k2), m_mid, params);
  const RollState k4 = roll_rhs(axpy(state, dt, k3), forcing(t + dt), params);
  const RollState next{state.phi + dt / 6.0 * (k1.phi + 2.0 * k2.phi + 2.0 * k3.phi + k4.phi),
                       state.phi_dot + dt / 6.0 * (k1.phi_dot + 2.0 * k2.phi_dot + 2.0 * k3.phi_dot + k4.phi_dot)};
  if (!finite(next)) throw IntegrationBlowup(t + dt);
  return next;
}

std::vector<RollState> integrate_roll(const Forcing& forcing, const RollParams& params, double sim_dt,
                                      std::size_t n_steps, std::size_t stride, RollState initial) {
  if (stride == 0) throw DomainError("integrate_roll: stride must be >= 1");
  std::vector<RollState> out;
  out.reserve(n_steps / stride + 1);
  out.push_back(initial);
  RollState s = initial;
  for (std::size_t step = 0; step < n_steps; ++step) {
    s = step_rk4(s, static_cast<double>(step) * sim_dt, sim_dt, forcing, params);
    if ((step + 1) % stride == 0) out.push_back(s);
  }
  return out;
}

MotionRecord simulate_run(const SpectrumParams& spectrum, const RollParams& roll, const SeaKinematics& kin,
                          const SimulationSettings& settings, std::uint64_t seed, std::string label) {
  roll.validate();
  kin.validate();
  if (settings.probes.size() != MotionRecord::kProbes) {
    throw ConfigError(fmt::format("simulate_run needs exactly {} probes, got {}", MotionRecord::kProbes,
                                  settings.probes.size()));
  }
  const double ratio = settings.output_dt / settings.sim_dt;
  const auto stride = static_cast<std::size_t>(std::llround(ratio));
  if (!(settings.sim_dt > 0.0) || stride == 0 || std::abs(ratio - static_cast<double>(stride)) > 1e-9 * ratio) {
    throw ConfigError(fmt::format("output_dt ({}) must be an integer multiple of sim_dt ({})", settings.output_dt,
                                  settings.sim_dt));
  }

  const ComponentWaveSet waves = discretize_spectrum(spectrum, seed);
  const std::size_t n_out = sample_count(settings.duration, settings.output_dt);
  const std::size_t n_steps = (n_out - 1) * stride;

  const Forcing forcing = [&](double t) { return excitation_moment(waves, kin, roll, t); };
  const std::vector<RollState> states = integrate_roll(forcing, roll, settings.sim_dt, n_steps, stride);

  MotionRecord rec;
  rec.dt = settings.output_dt;
  rec.heading = kin.heading_angle;
  rec.seed = seed;
  rec.label = std::move(label);
  rec.t.resize(n_out);
  rec.roll.resize(n_out);
  rec.wave.resize(n_out * MotionRecord::kProbes);
  for (std::size_t k = 0; k < n_out; ++k) {
    const double t = static_cast<double>(k * stride) * settings.sim_dt;
    rec.t[k] = t;
    rec.roll[k] = states[k].phi * kRadToDeg;
    for (std::size_t j = 0; j < MotionRecord::kProbes; ++j) {
      rec.wave[k * MotionRecord::kProbes + j] = probe_elevation(waves, settings.probes[j], kin, t);
    }
  }
  rec.metadata = {{"generator", "rollcast.rollsurrogate"},
                  {"spectrum", spectrum},
                  {"roll", roll},
                  {"kinematics", kin},
                  {"simulation", settings}};
  return rec;
}

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  p.replace_extension(".json");
  return p;
}

void write_motion_csv(std::ostream& os, const MotionRecord& record) {
  os << kMotionHeader << '\n';
  for (std::size_t i = 0; i < record.size(); ++i) {
    os << fmt::format("{},{},{},{},{}\n", record.t[i], record.roll[i], record.wave_at(i, 0),
                      record.wave_at(i, 1), record.wave_at(i, 2));
  }
}

void save_motion_record(const std::filesystem::path& csv_path, const MotionRecord& record) {
  if (csv_path.has_parent_path()) std::filesystem::create_directories(csv_path.parent_path());
  {
    std::ofstream os(csv_path);
    if (!os) throw DataError("cannot write " + csv_path.string());
    write_motion_csv(os, record);
  }
  nlohmann::json side = record.metadata;
  side["label"] = record.label;
  side["heading"] = record.heading;
  side["seed"] = record.seed;
  side["dt"] = record.dt;
  side["n_samples"] = record.size();
  std::ofstream js(sidecar_path(csv_path));
  if (!js) throw DataError("cannot write " + sidecar_path(csv_path).string());
  js << side.dump(2) << '\n';
}

MotionRecord read_motion_csv(std::istream& is, const std::string& source_name) {
  MotionRecord rec;
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(is, line)) throw DataError(source_name + ": empty file");
  ++line_no;
  if (trim(line) != kMotionHeader) {
    throw DataError(fmt::format("{}:1: expected header '{}'", source_name, kMotionHeader));
  }
  while (std::getline(is, line)) {
    ++line_no;
    std::string_view rest = trim(line);
    if (rest.empty()) continue;
    double fields[5];
    for (int f = 0; f < 5; ++f) {
      const auto comma = rest.find(',');
      std::string_view cell = trim(rest.substr(0, comma));
      if ((f < 4) == (comma == std::string_view::npos)) {
        throw DataError(fmt::format("{}:{}: expected 5 comma-separated fields", source_name, line_no));
      }
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), fields[f]);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(fields[f])) {
        throw DataError(fmt::format("{}:{}: field {} ('{}') is not a finite number", source_name, line_no, f + 1,
                                    cell));
      }
      rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
    }
    rec.t.push_back(fields[0]);
    rec.roll.push_back(fields[1]);
    rec.wave.insert(rec.wave.end(), {fields[2], fields[3], fields[4]});
  }
  if (rec.t.empty()) throw DataError(source_name + ": no data rows");
  if (rec.t.size() >= 2) {
    rec.dt = rec.t[1] - rec.t[0];
    if (!(rec.dt > 0.0)) throw DataError(source_name + ":3: time column must increase");
    for (std::size_t i = 2; i < rec.t.size(); ++i) {
      if (std::abs(rec.t[i] - rec.t[i - 1] - rec.dt) > 1e-6 * rec.dt) {
        throw DataError(fmt::format("{}:{}: uneven time step (expected {})", source_name, i + 2, rec.dt));
      }
    }
  }
  return rec;
}

MotionRecord load_motion_record(const std::filesystem::path& csv_path) {
  std::ifstream is(csv_path);
  if (!is) throw DataError("cannot open motion record " + csv_path.string());
  MotionRecord rec = read_motion_csv(is, csv_path.string());
  rec.label = csv_path.stem().string();
  const auto side = sidecar_path(csv_path);
  if (std::filesystem::exists(side)) {
    std::ifstream js(side);
    try {
      nlohmann::json meta = nlohmann::json::parse(js);
      read_optional(meta, "label", rec.label);
      read_optional(meta, "heading", rec.heading);
      read_optional(meta, "seed", rec.seed);
      read_optional(meta, "dt", rec.dt);
      rec.metadata = std::move(meta);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("corrupt sidecar " + side.string() + ": " + e.what());
    } catch (const ConfigError& e) {
      throw DataError("corrupt sidecar " + side.string() + ": " + e.what());
    }
  }
  rec.validate();
  return rec;
}

}  // namespace rollcast
