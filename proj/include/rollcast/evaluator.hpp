#pragma once

// Forecast metrics in degrees, model rankings, and report files.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rollcast/datapipe.hpp"
#include "rollcast/models.hpp"

namespace rollcast {

inline constexpr std::string_view kReportSchema = "rollcast.eval_report/1";

/// How `average_rmse` summarizes the horizon.
enum class AverageMode {
  per_step_mean,  // mean of the per-step RMSE values
  pooled,         // RMSE over every (window, step) entry at once
};

AverageMode parse_average_mode(std::string_view name);
std::string_view to_string(AverageMode mode);

struct EvalReport {
  std::vector<double> per_step_rmse;  // degrees
  double average_rmse = 0.0;          // degrees
  double pooled_rmse = 0.0;           // degrees, always reported
  AverageMode average_mode = AverageMode::per_step_mean;
  std::string dataset_label;
  FeatureScenario scenario = FeatureScenario::roll_and_wave;
  ModelKind model_kind = ModelKind::convlstmp;
  std::uint64_t seed = 0;
  std::size_t n_eval_windows = 0;

  std::size_t horizon() const { return per_step_rmse.size(); }

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

void to_json(nlohmann::json& j, const EvalReport& r);
void from_json(const nlohmann::json& j, EvalReport& r);

/// sqrt(mean((pred - truth)^2)). ShapeError on length mismatch or empty input.
double rmse(std::span<const double> prediction, std::span<const double> truth);

/// Per-step and average RMSE from [n x p] prediction / truth tables in degrees.
EvalReport summarize(const NumericArray& prediction_deg, const NumericArray& truth_deg,
                     AverageMode mode = AverageMode::per_step_mean);

struct Evaluation {
  EvalReport report;
  NumericArray prediction_deg;  // [n x p]
  NumericArray truth_deg;       // [n x p]
  NumericArray input_roll_deg;  // [n x d], empty when the scenario has no roll channel
  double dt = 0.1;
};

/// Predicts every window, maps predictions and targets back to degrees
/// through the dataset's roll scaler, and scores them.
Evaluation evaluate(Forecaster& model, const WindowedDataset& data, const std::string& dataset_label,
                    AverageMode mode = AverageMode::per_step_mean, double dt = 0.1);

struct RankingRow {
  ModelKind model_kind = ModelKind::convlstmp;
  std::uint64_t seed = 0;
  double average_rmse = 0.0;
  std::size_t per_step_wins = 0;
};

/// Rows sorted ascending by average RMSE; equal averages order by model-kind
/// name, then seed. A step is won by the first row holding its minimum.
struct Ranking {
  std::string dataset_label;
  std::size_t horizon = 0;
  std::vector<RankingRow> rows;
};

void to_json(nlohmann::json& j, const Ranking& r);

/// DomainError on an empty list, mixed horizons or mixed datasets.
Ranking compare(std::span<const EvalReport> reports);

/// Writes report.json, per_step_rmse.csv, per_step_rmse.svg and traces.svg.
void emit_outputs(const Evaluation& evaluation, const std::filesystem::path& out_dir);

/// Writes ranking.json, ranking.csv and a per-step comparison chart.
void emit_comparison(std::span<const EvalReport> reports, const std::filesystem::path& out_dir,
                     const std::string& title);

/// Indices of `count` evenly spaced windows in [0, n).
std::vector<std::size_t> evenly_spaced(std::size_t n, std::size_t count);

void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace rollcast
