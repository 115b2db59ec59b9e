#pragma once

// Study-case configuration and the grid runner behind the CLI subcommands.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rollcast/datapipe.hpp"
#include "rollcast/evaluator.hpp"
#include "rollcast/models.hpp"
#include "rollcast/rollsurrogate.hpp"
#include "rollcast/seastate.hpp"
#include "rollcast/trainer.hpp"

namespace rollcast {

struct DatasetSpec {
  std::string label;
  double heading = 90.0;  // degrees
};

/// Architecture knobs shared by every cell; kind, lag, horizon, channels and
/// seed are filled in per cell.
struct ArchitectureConfig {
  std::size_t convlstmp_lstm_hidden = 64;
  std::vector<std::size_t> convlstmp_conv_filters = {32, 64};
  std::size_t lstm_only_hidden = 100;
  std::vector<std::size_t> cnn_only_conv_filters = {64, 64};
  std::size_t kernel_size = 3;
  std::vector<std::size_t> head_units = {100, 50};
  LstmHeadMode lstm_head_mode = LstmHeadMode::all;

  ModelSpec spec_for(ModelKind kind, std::size_t horizon, std::size_t channels, std::uint64_t seed) const;
};

struct AblationConfig {
  std::vector<std::string> datasets = {"dataset#1", "dataset#2", "dataset#3"};
  std::vector<FeatureScenario> scenarios = {FeatureScenario::roll_only, FeatureScenario::wave_only,
                                            FeatureScenario::roll_and_wave};
  std::vector<std::size_t> horizons = {10, 20};
  ModelKind model = ModelKind::lstm_only;
};

struct ComparisonConfig {
  std::vector<std::string> datasets = {"dataset#1", "dataset#2"};
  std::vector<ModelKind> models = {ModelKind::convlstmp, ModelKind::lstm_only, ModelKind::cnn_only};
  std::size_t horizon = 20;
  FeatureScenario scenario = FeatureScenario::roll_and_wave;
};

struct ExperimentConfig {
  SpectrumParams spectrum;
  RollParams roll;
  /// Ship speed is shared; the heading comes from each dataset entry.
  SeaKinematics kinematics;
  SimulationSettings simulation;
  std::uint64_t data_seed = 1;
  std::vector<DatasetSpec> datasets = {{"dataset#1", 150.0}, {"dataset#2", 120.0}, {"dataset#3", 90.0}};

  PipelineConfig pipeline;
  TrainConfig train;
  ArchitectureConfig architecture;
  AverageMode average_mode = AverageMode::per_step_mean;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};

  AblationConfig ablation;
  ComparisonConfig comparison;
  std::filesystem::path output_dir = "runs";

  /// Throws ConfigError on any inconsistent block.
  void validate() const;
  const DatasetSpec& dataset(const std::string& label) const;
};

/// Built-in defaults with the calibrated surrogate and U = 2.196 m/s.
ExperimentConfig default_experiment_config();

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

/// Reads a JSON config; keys not present keep their defaults, unknown keys are errors.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Simulates the record of one configured dataset.
MotionRecord simulate_dataset(const ExperimentConfig& config, const DatasetSpec& dataset);

/// `<output_dir>/data/<label>.csv`.
std::filesystem::path record_path(const ExperimentConfig& config, const std::string& label);

/// Loads a dataset record written by the simulate command; DataError naming
/// the command when it is missing.
MotionRecord load_dataset_record(const ExperimentConfig& config, const std::string& label);

struct CellSpec {
  std::string dataset;
  FeatureScenario scenario = FeatureScenario::roll_and_wave;
  std::size_t horizon = 10;
  ModelKind model = ModelKind::lstm_only;
  std::uint64_t seed = 1;

  /// Directory-safe identifier, e.g. `dataset2_roll_and_wave_p10_lstm_only_s1`.
  std::string id() const;
};

struct CellResult {
  CellSpec cell;
  EvalReport report;
  TrainHistory history;
};

/// Pipeline -> train -> evaluate for one cell. Both the model initialization
/// and the shuffling use the cell seed. With `out_dir`, writes history.csv,
/// the evaluator outputs and (optionally) the checkpoint.
CellResult run_cell(const ExperimentConfig& config, const MotionRecord& record, const CellSpec& cell,
                    const std::optional<std::filesystem::path>& out_dir = std::nullopt, bool save_model = false);

using CellProgress = std::function<void(const CellResult&, std::size_t done, std::size_t total)>;

/// Runs cells on up to `jobs` threads. Results keep the order of `cells`.
std::vector<CellResult> run_cells(const ExperimentConfig& config, const std::map<std::string, MotionRecord>& records,
                                  const std::vector<CellSpec>& cells, std::size_t jobs,
                                  const std::optional<std::filesystem::path>& out_root = std::nullopt,
                                  const CellProgress& progress = {});

std::vector<CellSpec> ablation_cells(const ExperimentConfig& config);
std::vector<CellSpec> comparison_cells(const ExperimentConfig& config);

double median(std::vector<double> values);

/// Medians across seeds for every (dataset, scenario, horizon, model) group.
struct GroupSummary {
  std::string dataset;
  FeatureScenario scenario = FeatureScenario::roll_and_wave;
  std::size_t horizon = 0;
  ModelKind model = ModelKind::lstm_only;
  std::vector<std::uint64_t> seeds;
  std::vector<double> average_rmse;       // per seed
  double median_average_rmse = 0.0;
  std::vector<double> median_per_step_rmse;
};

std::vector<GroupSummary> summarize_groups(const std::vector<CellResult>& results);
const GroupSummary& find_group(const std::vector<GroupSummary>& groups, const std::string& dataset,
                               FeatureScenario scenario, std::size_t horizon, ModelKind model);

/// grid.json, grid.csv (one row per cell) and table.csv (medians, Table-3 layout).
void write_ablation_outputs(const std::vector<CellResult>& results, const std::filesystem::path& out_dir);
/// comparison.json, comparison.csv and per-dataset rankings of the seed medians.
void write_comparison_outputs(const std::vector<CellResult>& results, const std::filesystem::path& out_dir);

}  // namespace rollcast
