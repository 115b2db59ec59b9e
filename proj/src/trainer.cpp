#include "rollcast/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "rollcast/serialization.hpp"

namespace rollcast {

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "adam") return OptimizerKind::adam;
  if (name == "sgd") return OptimizerKind::sgd;
  throw ConfigError("unknown optimizer '" + std::string(name) + "' (expected adam or sgd)");
}

std::string_view to_string(OptimizerKind kind) { return kind == OptimizerKind::adam ? "adam" : "sgd"; }

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw ConfigError("adam epsilon must be > 0");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"epochs", c.epochs},         {"batch_size", c.batch_size},     {"learning_rate", c.learning_rate},
       {"optimizer", to_string(c.optimizer)}, {"beta1", c.beta1},      {"beta2", c.beta2},
       {"epsilon", c.epsilon},       {"shuffle_seed", c.shuffle_seed}, {"patience", c.patience}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  read_optional(j, "epochs", c.epochs);
  read_optional(j, "batch_size", c.batch_size);
  read_optional(j, "learning_rate", c.learning_rate);
  if (j.contains("optimizer")) {
    std::string s;
    read_optional(j, "optimizer", s);
    c.optimizer = parse_optimizer(s);
  }
  read_optional(j, "beta1", c.beta1);
  read_optional(j, "beta2", c.beta2);
  read_optional(j, "epsilon", c.epsilon);
  read_optional(j, "shuffle_seed", c.shuffle_seed);
  read_optional(j, "patience", c.patience);
}

double TrainHistory::best_val_mse() const {
  if (val_mse.empty()) return std::numeric_limits<double>::quiet_NaN();
  return *std::min_element(val_mse.begin(), val_mse.end());
}

void write_history_csv(std::ostream& os, const TrainHistory& h) {
  os << "epoch,train_mse,val_mse\n";
  for (std::size_t e = 0; e < h.epochs_run(); ++e) {
    os << fmt::format("{},{},{}\n", e + 1, h.train_mse[e], h.val_mse[e]);
  }
}

void write_history_csv(const std::filesystem::path& path, const TrainHistory& h) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  write_history_csv(os, h);
}

LossResult mse_loss(const NumericArray& prediction, const NumericArray& target) {
  if (prediction.size() != target.size() || prediction.empty()) {
    throw ShapeError("mse: prediction " + shape_to_string(prediction.shape()) + " vs target " +
                     shape_to_string(target.shape()));
  }
  const double n = static_cast<double>(prediction.size());
  LossResult r{0.0, NumericArray(prediction.shape())};
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    const double e = prediction[i] - target[i];
    r.loss += e * e;
    r.grad[i] = 2.0 * e / n;
  }
  r.loss /= n;
  return r;
}

void adam_step(const ParameterList& params, AdamState& state, const TrainConfig& config) {
  if (state.m.size() != params.size()) {
    state.m.clear();
    state.v.clear();
    for (const Parameter* p : params) {
      state.m.emplace_back(p->value.shape());
      state.v.emplace_back(p->value.shape());
    }
    state.step = 0;
  }
  for (const Parameter* p : params) {
    if (!p->grad.all_finite()) throw DivergenceError("non-finite gradient in parameter " + p->name);
  }
  ++state.step;
  const double b1 = config.beta1;
  const double b2 = config.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    NumericArray& m = state.m[k];
    NumericArray& v = state.v[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p.value[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

void sgd_step(const ParameterList& params, const TrainConfig& config) {
  for (Parameter* p : params) {
    if (!p->grad.all_finite()) throw DivergenceError("non-finite gradient in parameter " + p->name);
    for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] -= config.learning_rate * p->grad[i];
  }
}

namespace {

constexpr std::size_t kEvalChunk = 256;

std::vector<NumericArray> snapshot(const ParameterList& params) {
  std::vector<NumericArray> out;
  out.reserve(params.size());
  for (const Parameter* p : params) out.push_back(p->value);
  return out;
}

void restore(const ParameterList& params, const std::vector<NumericArray>& values) {
  for (std::size_t k = 0; k < params.size(); ++k) params[k]->value = values[k];
}

void check_compatible(const Forecaster& model, const WindowedDataset& data, const char* which) {
  const ModelSpec& s = model.spec();
  if (data.lag != s.lag || data.horizon != s.horizon || data.channels() != s.channels) {
    throw ShapeError(fmt::format("{} set (d={}, p={}, C={}) does not match model (d={}, p={}, C={})", which, data.lag,
                                 data.horizon, data.channels(), s.lag, s.horizon, s.channels));
  }
}

}  // namespace

NumericArray predict_dataset(Forecaster& model, const WindowedDataset& data) {
  check_compatible(model, data, "evaluation");
  const std::size_t n = data.size();
  const std::size_t p = data.horizon;
  NumericArray out({n, p});
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < n; begin += kEvalChunk) {
    const std::size_t end = std::min(n, begin + kEvalChunk);
    idx.resize(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    const NumericArray y = model.forward(data.gather_inputs(idx));
    std::copy(y.values().begin(), y.values().end(), out.data() + begin * p);
  }
  return out;
}

double dataset_mse(Forecaster& model, const WindowedDataset& data) {
  return mse_loss(predict_dataset(model, data), data.targets).loss;
}

TrainingDiverged::TrainingDiverged(std::size_t epoch, TrainHistory history)
    : DivergenceError(fmt::format("training diverged in epoch {} (last finite epoch: {})", epoch,
                                  history.epochs_run())),
      history_(std::move(history)) {}

TrainHistory train(Forecaster& model, const WindowedDataset& train_set, const WindowedDataset& val_set,
                   const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  check_compatible(model, train_set, "training");
  check_compatible(model, val_set, "validation");
  if (train_set.size() == 0 || val_set.size() == 0) throw DomainError("training needs non-empty train and validation sets");

  const auto start = std::chrono::steady_clock::now();
  const ParameterList params = model.parameters();
  AdamState adam;
  Rng rng(config.shuffle_seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainHistory history;
  double best = std::numeric_limits<double>::infinity();
  std::vector<NumericArray> best_values = snapshot(params);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    try {
      for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
        const std::size_t end = std::min(order.size(), begin + config.batch_size);
        const std::span<const std::size_t> idx(order.data() + begin, end - begin);
        model.zero_grad();
        const NumericArray pred = model.forward(train_set.gather_inputs(idx));
        const LossResult loss = mse_loss(pred, train_set.gather_targets(idx));
        if (!std::isfinite(loss.loss)) throw DivergenceError("non-finite training loss");
        model.backward(loss.grad);
        if (config.optimizer == OptimizerKind::adam) {
          adam_step(params, adam, config);
        } else {
          sgd_step(params, config);
        }
        loss_sum += loss.loss * static_cast<double>(idx.size());
      }
    } catch (const DivergenceError&) {
      restore(params, best_values);
      throw TrainingDiverged(epoch, history);
    }
    const double train_mse = loss_sum / static_cast<double>(order.size());
    const double val_mse = dataset_mse(model, val_set);
    if (!std::isfinite(val_mse)) {
      restore(params, best_values);
      throw TrainingDiverged(epoch, history);
    }
    history.train_mse.push_back(train_mse);
    history.val_mse.push_back(val_mse);
    if (on_epoch) on_epoch(epoch, train_mse, val_mse);
    if (val_mse < best) {
      best = val_mse;
      history.best_epoch = epoch;
      best_values = snapshot(params);
    }
    if (config.patience > 0 && epoch - history.best_epoch >= config.patience) break;
  }
  restore(params, best_values);
  history.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return history;
}

// ---------------------------------------------------------------------------

void save_checkpoint(const Forecaster& model, const std::filesystem::path& dir, const nlohmann::json& extra) {
  nlohmann::json meta = extra.is_object() ? extra : nlohmann::json::object();
  meta["model_spec"] = model.spec();
  save_parameters(dir, model.parameters(), meta);
}

Checkpoint load_checkpoint(const std::filesystem::path& dir, const std::optional<ModelSpec>& expected) {
  ParameterBundle bundle = load_parameters(dir);
  if (!bundle.manifest.contains("model_spec")) {
    throw CheckpointError("checkpoint manifest in " + dir.string() + " has no model_spec");
  }
  ModelSpec spec;
  try {
    spec = bundle.manifest.at("model_spec").get<ModelSpec>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("invalid model_spec: ") + e.what());
  }
  // The seed only drives initialization, so it does not take part in the check.
  ModelSpec wanted = expected ? expected->resolved() : spec.resolved();
  wanted.seed = spec.seed;
  if (wanted != spec.resolved()) {
    throw ShapeError(fmt::format("checkpoint model (kind {}, d={}, p={}, C={}) does not match the requested run "
                                 "(kind {}, d={}, p={}, C={})",
                                 to_string(spec.kind), spec.lag, spec.horizon, spec.channels,
                                 to_string(expected->kind), expected->lag, expected->horizon, expected->channels));
  }
  Forecaster model(spec);
  const ParameterList params = model.parameters();
  if (bundle.tensors.size() != params.size()) {
    throw CheckpointError(fmt::format("checkpoint lists {} parameters, the model spec derives {}", bundle.tensors.size(),
                                      params.size()));
  }
  for (Parameter* p : params) {
    const NumericArray& stored = bundle.get(p->name);
    if (stored.shape() != p->value.shape()) {
      throw CheckpointError(fmt::format("parameter {} has shape {} in the checkpoint, the model spec derives {}", p->name,
                                        shape_to_string(stored.shape()), shape_to_string(p->value.shape())));
    }
    p->value = stored;
  }
  return {std::move(model), std::move(bundle.manifest)};
}

}  // namespace rollcast
