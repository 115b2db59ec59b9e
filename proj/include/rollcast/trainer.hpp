#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rollcast/datapipe.hpp"
#include "rollcast/errors.hpp"
#include "rollcast/models.hpp"

namespace rollcast {

enum class OptimizerKind { adam, sgd };

OptimizerKind parse_optimizer(std::string_view name);
std::string_view to_string(OptimizerKind kind);

struct TrainConfig {
  std::size_t epochs = 500;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t shuffle_seed = 1;
  /// Epochs without validation improvement before stopping; 0 disables.
  std::size_t patience = 50;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct TrainHistory {
  std::vector<double> train_mse;
  std::vector<double> val_mse;
  std::size_t best_epoch = 0;  // 1-based
  double wall_seconds = 0.0;

  std::size_t epochs_run() const { return train_mse.size(); }
  double best_val_mse() const;
};

/// `epoch,train_mse,val_mse`, shortest round-trip decimals, epochs 1-based.
void write_history_csv(std::ostream& os, const TrainHistory& h);
void write_history_csv(const std::filesystem::path& path, const TrainHistory& h);

struct LossResult {
  double loss = 0.0;
  NumericArray grad;  // 2 (pred - target) / n
};

/// Mean squared error over every scalar entry.
LossResult mse_loss(const NumericArray& prediction, const NumericArray& target);

struct AdamState {
  std::vector<NumericArray> m;
  std::vector<NumericArray> v;
  std::size_t step = 0;
};

/// Bias-corrected Adam update from the accumulated parameter grads.
/// Throws DivergenceError on non-finite gradients.
void adam_step(const ParameterList& params, AdamState& state, const TrainConfig& config);
void sgd_step(const ParameterList& params, const TrainConfig& config);

/// Normalized predictions for every window, [n x horizon]. Fixed chunking.
NumericArray predict_dataset(Forecaster& model, const WindowedDataset& data);
double dataset_mse(Forecaster& model, const WindowedDataset& data);

class TrainingDiverged : public DivergenceError {
 public:
  TrainingDiverged(std::size_t epoch, TrainHistory history);
  std::size_t last_finite_epoch() const { return history_.epochs_run(); }
  const TrainHistory& history() const { return history_; }

 private:
  TrainHistory history_;
};

using EpochCallback = std::function<void(std::size_t epoch, double train_mse, double val_mse)>;

/// Seeded shuffling, mini-batch Adam/SGD, best-validation restoration.
TrainHistory train(Forecaster& model, const WindowedDataset& train_set, const WindowedDataset& val_set,
                   const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Checkpoint directory: manifest.json (model spec + parameter index) and params.bin.
void save_checkpoint(const Forecaster& model, const std::filesystem::path& dir,
                     const nlohmann::json& extra = nlohmann::json::object());

struct Checkpoint {
  Forecaster model;
  nlohmann::json manifest;
};

/// Rebuilds the model from the stored spec and validates every parameter
/// shape. When `expected` is given, a differing spec raises ShapeError.
Checkpoint load_checkpoint(const std::filesystem::path& dir, const std::optional<ModelSpec>& expected = std::nullopt);

}  // namespace rollcast
