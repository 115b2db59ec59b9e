#include "rollcast/datapipe.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>

#include "rollcast/errors.hpp"
#include "rollcast/serialization.hpp"

namespace rollcast {

namespace {

constexpr std::size_t kRecordChannels = 1 + MotionRecord::kProbes;

void write_blob(const std::filesystem::path& path, const NumericArray& a) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  for (double v : a.values()) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xffu);
    os.write(bytes, 8);
  }
  if (!os) throw DataError("failed writing " + path.string());
}

NumericArray read_blob(const std::filesystem::path& path, const Shape& shape) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  const std::size_t n = shape_size(shape);
  if (bytes.size() != n * 8) {
    throw DataError(fmt::format("{} holds {} bytes, expected {}", path.string(), bytes.size(), n * 8));
  }
  std::vector<double> values(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[8 * k + i]) << (8 * i);
    values[k] = std::bit_cast<double>(bits);
  }
  return NumericArray(shape, std::move(values));
}

}  // namespace

FeatureScenario parse_scenario(std::string_view name) {
  if (name == "roll_only") return FeatureScenario::roll_only;
  if (name == "wave_only") return FeatureScenario::wave_only;
  if (name == "roll_and_wave") return FeatureScenario::roll_and_wave;
  throw ConfigError("unknown feature scenario '" + std::string(name) +
                    "' (expected roll_only, wave_only or roll_and_wave)");
}

std::string_view to_string(FeatureScenario s) {
  switch (s) {
    case FeatureScenario::roll_only: return "roll_only";
    case FeatureScenario::wave_only: return "wave_only";
    case FeatureScenario::roll_and_wave: return "roll_and_wave";
  }
  return "?";
}

std::size_t channel_count(FeatureScenario s) { return scenario_channels(s).size(); }

std::vector<std::size_t> scenario_channels(FeatureScenario s) {
  switch (s) {
    case FeatureScenario::roll_only: return {0};
    case FeatureScenario::wave_only: return {1, 2, 3};
    case FeatureScenario::roll_and_wave: return {0, 1, 2, 3};
  }
  return {};
}

// ---------------------------------------------------------------------------

MinMaxScaler::MinMaxScaler(std::vector<double> mins, std::vector<double> maxs)
    : mins_(std::move(mins)), maxs_(std::move(maxs)), fitted_(true) {
  if (mins_.size() != maxs_.size() || mins_.empty()) throw DataError("scaler bounds must be non-empty and paired");
  for (std::size_t c = 0; c < mins_.size(); ++c) {
    if (!(maxs_[c] > mins_[c])) throw DataError(fmt::format("scaler channel {} is degenerate (max <= min)", c));
  }
}

void MinMaxScaler::fit(std::span<const double> values, std::size_t channels) {
  if (channels == 0 || values.size() % channels != 0 || values.empty()) {
    throw DataError("scaler fit: value count is not a positive multiple of the channel count");
  }
  std::vector<double> lo(channels, std::numeric_limits<double>::infinity());
  std::vector<double> hi(channels, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t c = i % channels;
    lo[c] = std::min(lo[c], values[i]);
    hi[c] = std::max(hi[c], values[i]);
  }
  *this = MinMaxScaler(std::move(lo), std::move(hi));
}

double MinMaxScaler::transform(double x, std::size_t channel) const {
  return (x - mins_[channel]) / (maxs_[channel] - mins_[channel]);
}

double MinMaxScaler::inverse_transform(double x, std::size_t channel) const {
  return x * (maxs_[channel] - mins_[channel]) + mins_[channel];
}

void MinMaxScaler::transform_inplace(std::span<double> values) const {
  if (!fitted_) throw StateError("scaler used before fit");
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = transform(values[i], i % mins_.size());
}

void MinMaxScaler::inverse_transform_inplace(std::span<double> values) const {
  if (!fitted_) throw StateError("scaler used before fit");
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = inverse_transform(values[i], i % mins_.size());
}

void to_json(nlohmann::json& j, const MinMaxScaler& s) { j = {{"min", s.mins()}, {"max", s.maxs()}}; }

void from_json(const nlohmann::json& j, MinMaxScaler& s) {
  try {
    s = MinMaxScaler(j.at("min").get<std::vector<double>>(), j.at("max").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("invalid scaler block: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

MotionRecord resample(const MotionRecord& record, double target_dt) {
  if (!(record.dt > 0.0) || !(target_dt > 0.0)) throw ConfigError("resample: time steps must be > 0");
  const double ratio = target_dt / record.dt;
  const auto k = static_cast<std::size_t>(std::llround(ratio));
  if (k < 1 || std::abs(ratio - static_cast<double>(k)) > 1e-6 * ratio) {
    throw ConfigError(fmt::format("resample: target dt {} is not an integer multiple of record dt {}", target_dt,
                                  record.dt));
  }
  MotionRecord out;
  out.dt = k == 1 ? record.dt : target_dt;
  out.heading = record.heading;
  out.seed = record.seed;
  out.label = record.label;
  out.metadata = record.metadata;
  for (std::size_t i = 0; i < record.size(); i += k) {
    out.t.push_back(record.t[i]);
    out.roll.push_back(record.roll[i]);
    for (std::size_t j = 0; j < MotionRecord::kProbes; ++j) out.wave.push_back(record.wave_at(i, j));
  }
  return out;
}

std::vector<double> record_channels(const MotionRecord& record) {
  std::vector<double> table(record.size() * kRecordChannels);
  for (std::size_t i = 0; i < record.size(); ++i) {
    table[i * kRecordChannels] = record.roll[i];
    for (std::size_t j = 0; j < MotionRecord::kProbes; ++j) table[i * kRecordChannels + 1 + j] = record.wave_at(i, j);
  }
  return table;
}

MinMaxScaler fit_scaler(const MotionRecord& record, std::size_t split_boundary) {
  if (split_boundary == 0 || split_boundary > record.size()) {
    throw DomainError(fmt::format("scaler split boundary {} outside (0, {}]", split_boundary, record.size()));
  }
  const std::vector<double> table = record_channels(record);
  MinMaxScaler s;
  s.fit(std::span<const double>(table.data(), split_boundary * kRecordChannels), kRecordChannels);
  return s;
}

// ---------------------------------------------------------------------------

std::size_t window_count(std::size_t series_length, std::size_t lag, std::size_t horizon) {
  if (lag == 0 || horizon == 0) throw DomainError("lag and horizon must be >= 1");
  if (series_length < lag + horizon) {
    throw DomainError(fmt::format("series of length {} is too short for lag {} + horizon {}", series_length, lag,
                                  horizon));
  }
  return series_length - lag - horizon + 1;
}

WindowedDataset make_windows(const MotionRecord& record, std::size_t lag, std::size_t horizon,
                             FeatureScenario scenario, const MinMaxScaler& scaler) {
  if (!scaler.fitted() || scaler.channels() != kRecordChannels) {
    throw StateError("make_windows needs a scaler fitted on all four record channels");
  }
  const std::size_t n = window_count(record.size(), lag, horizon);
  const std::vector<std::size_t> chans = scenario_channels(scenario);
  const std::size_t nc = chans.size();

  std::vector<double> table = record_channels(record);
  scaler.transform_inplace(table);

  WindowedDataset ds;
  ds.lag = lag;
  ds.horizon = horizon;
  ds.scenario = scenario;
  ds.scaler = scaler;
  ds.source_checksum = record_checksum(record);
  ds.inputs = NumericArray({n, lag, nc});
  ds.targets = NumericArray({n, horizon});
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t s = 0; s < lag; ++s) {
      for (std::size_t c = 0; c < nc; ++c) ds.inputs.at(j, s, c) = table[(j + s) * kRecordChannels + chans[c]];
    }
    for (std::size_t s = 0; s < horizon; ++s) ds.targets.at(j, s) = table[(j + lag + s) * kRecordChannels];
  }
  return ds;
}

WindowedDataset WindowedDataset::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > size()) throw DomainError("dataset slice out of range");
  WindowedDataset out;
  out.lag = lag;
  out.horizon = horizon;
  out.scenario = scenario;
  out.scaler = scaler;
  out.source_checksum = source_checksum;
  out.first_window = first_window + begin;
  const std::size_t in_row = lag * channels();
  out.inputs = NumericArray({end - begin, lag, channels()},
                            std::vector<double>(inputs.data() + begin * in_row, inputs.data() + end * in_row));
  out.targets = NumericArray({end - begin, horizon}, std::vector<double>(targets.data() + begin * horizon,
                                                                          targets.data() + end * horizon));
  return out;
}

NumericArray WindowedDataset::gather_inputs(std::span<const std::size_t> idx) const {
  const std::size_t row = lag * channels();
  NumericArray out({idx.size(), lag, channels()});
  for (std::size_t k = 0; k < idx.size(); ++k) std::copy_n(inputs.data() + idx[k] * row, row, out.data() + k * row);
  return out;
}

NumericArray WindowedDataset::gather_targets(std::span<const std::size_t> idx) const {
  NumericArray out({idx.size(), horizon});
  for (std::size_t k = 0; k < idx.size(); ++k) {
    std::copy_n(targets.data() + idx[k] * horizon, horizon, out.data() + k * horizon);
  }
  return out;
}

std::pair<WindowedDataset, WindowedDataset> split(const WindowedDataset& dataset, double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw DomainError(fmt::format("split ratio {} outside (0, 1)", ratio));
  const std::size_t n = dataset.size();
  const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratio));
  if (n_train == 0 || n_train == n) {
    throw DomainError(fmt::format("split of {} windows at ratio {} leaves an empty side", n, ratio));
  }
  return {dataset.slice(0, n_train), dataset.slice(n_train, n)};
}

void to_json(nlohmann::json& j, const PipelineConfig& c) {
  j = {{"lag", c.lag},
       {"horizon", c.horizon},
       {"scenario", to_string(c.scenario)},
       {"ratio", c.ratio},
       {"target_dt", c.target_dt}};
}

void from_json(const nlohmann::json& j, PipelineConfig& c) {
  read_optional(j, "lag", c.lag);
  read_optional(j, "horizon", c.horizon);
  if (j.contains("scenario")) {
    std::string s;
    read_optional(j, "scenario", s);
    c.scenario = parse_scenario(s);
  }
  read_optional(j, "ratio", c.ratio);
  read_optional(j, "target_dt", c.target_dt);
}

PreparedData prepare_datasets(const MotionRecord& record, const PipelineConfig& config) {
  const MotionRecord rec = resample(record, config.target_dt);
  const std::size_t n = window_count(rec.size(), config.lag, config.horizon);
  if (!(config.ratio > 0.0 && config.ratio < 1.0)) {
    throw DomainError(fmt::format("split ratio {} outside (0, 1)", config.ratio));
  }
  const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * config.ratio));
  const MinMaxScaler scaler = fit_scaler(rec, std::max<std::size_t>(n_train + config.lag + config.horizon - 1, 1));
  const WindowedDataset all = make_windows(rec, config.lag, config.horizon, config.scenario, scaler);
  auto [train, validation] = split(all, config.ratio);
  return {std::move(train), std::move(validation)};
}

std::uint64_t record_checksum(const MotionRecord& record) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xffu;
      h *= 0x100000001b3ULL;
    }
  };
  for (double v : record.t) mix(v);
  for (double v : record.roll) mix(v);
  for (double v : record.wave) mix(v);
  return h;
}

void save_dataset(const std::filesystem::path& dir, const WindowedDataset& ds) {
  std::filesystem::create_directories(dir);
  write_blob(dir / "inputs.bin", ds.inputs);
  write_blob(dir / "targets.bin", ds.targets);
  nlohmann::json meta = {{"format", "rollcast.windows/1"},
                         {"inputs_shape", ds.inputs.shape()},
                         {"targets_shape", ds.targets.shape()},
                         {"lag", ds.lag},
                         {"horizon", ds.horizon},
                         {"scenario", to_string(ds.scenario)},
                         {"channels", scenario_channels(ds.scenario)},
                         {"scaler", ds.scaler},
                         {"first_window", ds.first_window},
                         {"source_checksum", fmt::format("{:016x}", ds.source_checksum)}};
  std::ofstream os(dir / "meta.json");
  if (!os) throw DataError("cannot write " + (dir / "meta.json").string());
  os << meta.dump(2) << '\n';
}

WindowedDataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream is(dir / "meta.json");
  if (!is) throw DataError("cannot open " + (dir / "meta.json").string());
  WindowedDataset ds;
  try {
    const auto meta = nlohmann::json::parse(is);
    ds.lag = meta.at("lag").get<std::size_t>();
    ds.horizon = meta.at("horizon").get<std::size_t>();
    ds.scenario = parse_scenario(meta.at("scenario").get<std::string>());
    ds.scaler = meta.at("scaler").get<MinMaxScaler>();
    ds.first_window = meta.value("first_window", std::size_t{0});
    ds.source_checksum = std::stoull(meta.at("source_checksum").get<std::string>(), nullptr, 16);
    ds.inputs = read_blob(dir / "inputs.bin", meta.at("inputs_shape").get<Shape>());
    ds.targets = read_blob(dir / "targets.bin", meta.at("targets_shape").get<Shape>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt dataset metadata in " + dir.string() + ": " + e.what());
  }
  if (ds.inputs.rank() != 3 || ds.inputs.dim(1) != ds.lag || ds.inputs.dim(2) != ds.channels() ||
      ds.targets.rank() != 2 || ds.targets.dim(0) != ds.inputs.dim(0) || ds.targets.dim(1) != ds.horizon) {
    throw DataError("dataset blobs in " + dir.string() + " disagree with meta.json");
  }
  return ds;
}

}  // namespace rollcast
