#pragma once

// Motion records -> normalized supervised windows, split chronologically.
//
// Channel order is fixed: [roll, wave1, wave2, wave3], filtered by scenario.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "rollcast/gradcore.hpp"
#include "rollcast/rollsurrogate.hpp"

namespace rollcast {

enum class FeatureScenario { roll_only, wave_only, roll_and_wave };

FeatureScenario parse_scenario(std::string_view name);
std::string_view to_string(FeatureScenario s);
std::size_t channel_count(FeatureScenario s);
/// Indices into the full [roll, wave1, wave2, wave3] channel list.
std::vector<std::size_t> scenario_channels(FeatureScenario s);

/// Per-channel affine map onto [0, 1] over the fitted range.
class MinMaxScaler {
 public:
  MinMaxScaler() = default;
  MinMaxScaler(std::vector<double> mins, std::vector<double> maxs);

  /// `values` is row-major [n x channels]. Throws DataError for a constant channel.
  void fit(std::span<const double> values, std::size_t channels);
  bool fitted() const { return fitted_; }
  std::size_t channels() const { return mins_.size(); }
  const std::vector<double>& mins() const { return mins_; }
  const std::vector<double>& maxs() const { return maxs_; }

  double transform(double x, std::size_t channel) const;
  double inverse_transform(double x, std::size_t channel) const;
  void transform_inplace(std::span<double> values) const;
  void inverse_transform_inplace(std::span<double> values) const;

  friend bool operator==(const MinMaxScaler&, const MinMaxScaler&) = default;

 private:
  std::vector<double> mins_;
  std::vector<double> maxs_;
  bool fitted_ = false;
};

void to_json(nlohmann::json& j, const MinMaxScaler& s);
void from_json(const nlohmann::json& j, MinMaxScaler& s);

/// Keeps every k-th sample where target_dt = k * record.dt.
MotionRecord resample(const MotionRecord& record, double target_dt);

/// Full [n x 4] channel table of a record in physical units.
std::vector<double> record_channels(const MotionRecord& record);

/// Fits a four-channel scaler on samples [0, split_boundary).
MinMaxScaler fit_scaler(const MotionRecord& record, std::size_t split_boundary);

struct WindowedDataset {
  NumericArray inputs;   // [n x d x C], normalized
  NumericArray targets;  // [n x p], normalized roll
  std::size_t lag = 0;
  std::size_t horizon = 0;
  FeatureScenario scenario = FeatureScenario::roll_and_wave;
  /// Scaler over all four record channels; channel 0 is roll.
  MinMaxScaler scaler;
  std::uint64_t source_checksum = 0;
  /// Index of window 0 in the full window sequence of the source record.
  std::size_t first_window = 0;

  std::size_t size() const { return targets.empty() ? 0 : targets.dim(0); }
  std::size_t channels() const { return channel_count(scenario); }
  const MinMaxScaler& roll_scaler() const { return scaler; }
  double roll_min() const { return scaler.mins().at(0); }
  double roll_max() const { return scaler.maxs().at(0); }

  /// Windows [begin, end) as a new dataset sharing scaler and metadata.
  WindowedDataset slice(std::size_t begin, std::size_t end) const;
  /// Gathers selected windows into batch arrays.
  NumericArray gather_inputs(std::span<const std::size_t> idx) const;
  NumericArray gather_targets(std::span<const std::size_t> idx) const;
};

/// N - d - p + 1; throws DomainError when N < d + p.
std::size_t window_count(std::size_t series_length, std::size_t lag, std::size_t horizon);

/// Stride-1 windows: inputs are steps [j, j+d) of the scenario channels,
/// targets are roll at [j+d, j+d+p).
WindowedDataset make_windows(const MotionRecord& record, std::size_t lag, std::size_t horizon,
                             FeatureScenario scenario, const MinMaxScaler& scaler);

/// First floor(n * ratio) windows train, the rest validate.
std::pair<WindowedDataset, WindowedDataset> split(const WindowedDataset& dataset, double ratio);

struct PipelineConfig {
  std::size_t lag = 10;
  std::size_t horizon = 10;
  FeatureScenario scenario = FeatureScenario::roll_and_wave;
  double ratio = 0.8;
  double target_dt = 0.1;
};

void to_json(nlohmann::json& j, const PipelineConfig& c);
void from_json(const nlohmann::json& j, PipelineConfig& c);

struct PreparedData {
  WindowedDataset train;
  WindowedDataset validation;
};

/// resample -> fit scaler on the training span -> windows -> split.
PreparedData prepare_datasets(const MotionRecord& record, const PipelineConfig& config);

/// FNV-1a over the little-endian bytes of t, roll and wave.
std::uint64_t record_checksum(const MotionRecord& record);

/// Directory with inputs.bin, targets.bin and meta.json.
void save_dataset(const std::filesystem::path& dir, const WindowedDataset& dataset);
WindowedDataset load_dataset(const std::filesystem::path& dir);

}  // namespace rollcast
