#pragma once

// The three forecasters behind one contract: ConvLSTMPNet (parallel LSTM and
// Conv1D branches fused by a fully connected head) and its two baselines.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rollcast/gradcore.hpp"
#include "rollcast/layers.hpp"

namespace rollcast {

enum class ModelKind { convlstmp, lstm_only, cnn_only };
enum class LstmHeadMode { all, last };

ModelKind parse_model_kind(std::string_view name);
std::string_view to_string(ModelKind kind);
LstmHeadMode parse_lstm_head_mode(std::string_view name);
std::string_view to_string(LstmHeadMode mode);

/// Architecture description. Zero / empty size fields take the per-kind
/// defaults: convlstmp LSTM 64 + Conv 32/64, lstm_only LSTM 100,
/// cnn_only Conv 64/64, head 100/50 for all.
struct ModelSpec {
  ModelKind kind = ModelKind::convlstmp;
  std::size_t lag = 10;
  std::size_t horizon = 10;
  std::size_t channels = 4;
  std::uint64_t seed = 1;

  std::size_t lstm_hidden = 0;
  std::vector<std::size_t> conv_filters;
  std::size_t kernel_size = 3;
  std::vector<std::size_t> head_units = {100, 50};
  LstmHeadMode lstm_head_mode = LstmHeadMode::all;
  Activation conv_activation = Activation::relu;
  Activation head_activation = Activation::relu;

  bool has_lstm() const { return kind != ModelKind::cnn_only; }
  bool has_conv() const { return kind != ModelKind::lstm_only; }

  /// Copy with every defaulted size filled in.
  ModelSpec resolved() const;
  /// Throws ConfigError on invariant violations.
  void validate() const;

  /// Width of the conv / lstm / concatenated feature vectors.
  std::size_t conv_feature_width() const;
  std::size_t lstm_feature_width() const;
  std::size_t feature_width() const { return conv_feature_width() + lstm_feature_width(); }

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

void to_json(nlohmann::json& j, const ModelSpec& spec);
void from_json(const nlohmann::json& j, ModelSpec& spec);

class Forecaster {
 public:
  /// Validates the model spec and draws glorot-uniform weights / zero biases from `spec.seed`.
  explicit Forecaster(const ModelSpec& spec);

  const ModelSpec& spec() const { return spec_; }

  /// [lag x channels] -> [horizon], or [batch x lag x channels] -> [batch x horizon].
  NumericArray forward(const NumericArray& window);
  /// Adjoint of the last forward; accumulates into parameter grads.
  void backward(const NumericArray& d_prediction);

  /// Head only: [batch x feature_width] (or [feature_width]) -> predictions.
  NumericArray forward_from_features(const NumericArray& features);
  /// Returns the gradient w.r.t. the concatenated features [C_t, L_t].
  NumericArray backward_head(const NumericArray& d_prediction);
  /// Routes a feature gradient [batch x feature_width] into both branches.
  void backward_branches(const NumericArray& d_features);

  /// Branch outputs of the last forward, [batch x width] each.
  const NumericArray& conv_features() const { return conv_features_; }
  const NumericArray& lstm_features() const { return lstm_features_; }
  const NumericArray& features() const { return features_; }

  ParameterList parameters();
  std::vector<const Parameter*> parameters() const;
  Parameter& parameter(std::string_view name);
  std::size_t parameter_count() const;
  void zero_grad();

  LstmLayer* lstm() { return lstm_ ? &*lstm_ : nullptr; }
  Conv1dLayer& conv(std::size_t i) { return convs_.at(i); }
  Affine& head(std::size_t i) { return head_.at(i); }

 private:
  ModelSpec spec_;
  std::optional<LstmLayer> lstm_;
  std::vector<Conv1dLayer> convs_;
  std::vector<Affine> head_;

  bool batched_ = false;
  std::size_t batch_ = 0;
  std::vector<NumericArray> conv_outputs_;  // post-activation
  std::vector<NumericArray> head_outputs_;  // post-activation
  NumericArray conv_features_;
  NumericArray lstm_features_;
  NumericArray features_;
};

}  // namespace rollcast
