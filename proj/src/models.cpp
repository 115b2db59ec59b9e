#include "rollcast/models.hpp"

#include <algorithm>

#include "rollcast/errors.hpp"
#include "rollcast/serialization.hpp"

namespace rollcast {

ModelKind parse_model_kind(std::string_view name) {
  if (name == "convlstmp") return ModelKind::convlstmp;
  if (name == "lstm_only" || name == "lstm") return ModelKind::lstm_only;
  if (name == "cnn_only" || name == "cnn") return ModelKind::cnn_only;
  throw ConfigError("unknown model kind '" + std::string(name) + "' (expected convlstmp, lstm_only or cnn_only)");
}

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::convlstmp: return "convlstmp";
    case ModelKind::lstm_only: return "lstm_only";
    case ModelKind::cnn_only: return "cnn_only";
  }
  return "?";
}

LstmHeadMode parse_lstm_head_mode(std::string_view name) {
  if (name == "all") return LstmHeadMode::all;
  if (name == "last") return LstmHeadMode::last;
  throw ConfigError("unknown lstm_head_mode '" + std::string(name) + "' (expected all or last)");
}

std::string_view to_string(LstmHeadMode mode) { return mode == LstmHeadMode::all ? "all" : "last"; }

ModelSpec ModelSpec::resolved() const {
  ModelSpec s = *this;
  switch (kind) {
    case ModelKind::convlstmp:
      if (s.lstm_hidden == 0) s.lstm_hidden = 64;
      if (s.conv_filters.empty()) s.conv_filters = {32, 64};
      break;
    case ModelKind::lstm_only:
      if (s.lstm_hidden == 0) s.lstm_hidden = 100;
      s.conv_filters.clear();
      break;
    case ModelKind::cnn_only:
      s.lstm_hidden = 0;
      if (s.conv_filters.empty()) s.conv_filters = {64, 64};
      break;
  }
  return s;
}

void ModelSpec::validate() const {
  const ModelSpec s = resolved();
  if (s.lag != s.horizon) {
    throw ConfigError("lag (" + std::to_string(s.lag) + ") must equal horizon (" + std::to_string(s.horizon) + ")");
  }
  if (s.lag < 1) throw ConfigError("lag must be >= 1");
  if (s.channels < 1) throw ConfigError("channels must be >= 1");
  if (s.has_conv()) {
    if (s.kernel_size < 1) throw ConfigError("kernel_size must be >= 1");
    const std::size_t shrink = s.conv_filters.size() * (s.kernel_size - 1);
    if (s.lag < shrink + 1) {
      throw ConfigError("lag " + std::to_string(s.lag) + " is too short for " + std::to_string(s.conv_filters.size()) +
                        " valid convolutions with kernel " + std::to_string(s.kernel_size) + " (need >= " +
                        std::to_string(shrink + 1) + ")");
    }
    if (std::find(s.conv_filters.begin(), s.conv_filters.end(), 0u) != s.conv_filters.end()) {
      throw ConfigError("conv filter counts must be >= 1");
    }
  }
  if (s.has_lstm() && s.lstm_hidden < 1) throw ConfigError("lstm_hidden must be >= 1");
  if (std::find(s.head_units.begin(), s.head_units.end(), 0u) != s.head_units.end()) {
    throw ConfigError("head widths must be >= 1");
  }
}

std::size_t ModelSpec::conv_feature_width() const {
  const ModelSpec s = resolved();
  if (!s.has_conv()) return 0;
  const std::size_t len = s.lag - s.conv_filters.size() * (s.kernel_size - 1);
  return len * s.conv_filters.back();
}

std::size_t ModelSpec::lstm_feature_width() const {
  const ModelSpec s = resolved();
  if (!s.has_lstm()) return 0;
  return s.lstm_head_mode == LstmHeadMode::all ? s.lag * s.lstm_hidden : s.lstm_hidden;
}

void to_json(nlohmann::json& j, const ModelSpec& spec) {
  const ModelSpec s = spec.resolved();
  j = nlohmann::json{{"kind", to_string(s.kind)},
                     {"lag", s.lag},
                     {"horizon", s.horizon},
                     {"channels", s.channels},
                     {"seed", s.seed},
                     {"lstm_hidden", s.lstm_hidden},
                     {"conv_filters", s.conv_filters},
                     {"kernel_size", s.kernel_size},
                     {"head_units", s.head_units},
                     {"lstm_head_mode", to_string(s.lstm_head_mode)},
                     {"conv_activation", to_string(s.conv_activation)},
                     {"head_activation", to_string(s.head_activation)}};
}

void from_json(const nlohmann::json& j, ModelSpec& spec) {
  std::string text;
  if (j.contains("kind")) {
    read_optional(j, "kind", text);
    spec.kind = parse_model_kind(text);
  }
  read_optional(j, "lag", spec.lag);
  read_optional(j, "horizon", spec.horizon);
  read_optional(j, "channels", spec.channels);
  read_optional(j, "seed", spec.seed);
  read_optional(j, "lstm_hidden", spec.lstm_hidden);
  read_optional(j, "conv_filters", spec.conv_filters);
  read_optional(j, "kernel_size", spec.kernel_size);
  read_optional(j, "head_units", spec.head_units);
  if (j.contains("lstm_head_mode")) {
    read_optional(j, "lstm_head_mode", text);
    spec.lstm_head_mode = parse_lstm_head_mode(text);
  }
  if (j.contains("conv_activation")) {
    read_optional(j, "conv_activation", text);
    spec.conv_activation = parse_activation(text);
  }
  if (j.contains("head_activation")) {
    read_optional(j, "head_activation", text);
    spec.head_activation = parse_activation(text);
  }
}

// ---------------------------------------------------------------------------

Forecaster::Forecaster(const ModelSpec& spec) : spec_(spec.resolved()) {
  spec_.validate();
  Rng rng(spec_.seed);
  if (spec_.has_lstm()) {
    lstm_.emplace("lstm", spec_.channels, spec_.lstm_hidden);
    lstm_->initialize(rng);
  }
  if (spec_.has_conv()) {
    std::size_t in = spec_.channels;
    for (std::size_t i = 0; i < spec_.conv_filters.size(); ++i) {
      convs_.emplace_back("conv" + std::to_string(i + 1), in, spec_.conv_filters[i], spec_.kernel_size);
      convs_.back().initialize(rng);
      in = spec_.conv_filters[i];
    }
  }
  std::size_t in = spec_.feature_width();
  std::vector<std::size_t> widths = spec_.head_units;
  widths.push_back(spec_.horizon);
  for (std::size_t i = 0; i < widths.size(); ++i) {
    head_.emplace_back("fc" + std::to_string(i + 1), in, widths[i]);
    Affine& fc = head_.back();
    fc.weight().value = init_params(fc.weight().value.shape(), InitScheme::glorot_uniform, rng);
    fc.bias().value = init_params(fc.bias().value.shape(), InitScheme::zeros, rng);
    in = widths[i];
  }
}

NumericArray Forecaster::forward(const NumericArray& window) {
  const std::size_t d = spec_.lag;
  const std::size_t ch = spec_.channels;
  NumericArray x;
  if (window.rank() == 2 && window.dim(0) == d && window.dim(1) == ch) {
    batched_ = false;
    x = window.reshaped({1, d, ch});
  } else if (window.rank() == 3 && window.dim(1) == d && window.dim(2) == ch) {
    batched_ = true;
    x = window;
  } else {
    throw ShapeError("forecaster: window " + shape_to_string(window.shape()) + " does not match [" +
                     std::to_string(d) + " x " + std::to_string(ch) + "]");
  }
  batch_ = x.dim(0);
  const std::size_t conv_w = spec_.conv_feature_width();
  const std::size_t lstm_w = spec_.lstm_feature_width();

  conv_outputs_.clear();
  if (spec_.has_conv()) {
    NumericArray a = x;
    for (auto& conv : convs_) {
      a = apply_activation(spec_.conv_activation, conv.forward(a));
      conv_outputs_.push_back(a);
    }
    conv_features_ = a.reshaped({batch_, conv_w});
  } else {
    conv_features_ = NumericArray({batch_, 0});
  }

  if (spec_.has_lstm()) {
    const NumericArray seq = lstm_->forward(x);
    if (spec_.lstm_head_mode == LstmHeadMode::all) {
      lstm_features_ = seq.reshaped({batch_, lstm_w});
    } else {
      lstm_features_ = NumericArray({batch_, lstm_w});
      for (std::size_t b = 0; b < batch_; ++b) {
        for (std::size_t j = 0; j < lstm_w; ++j) lstm_features_.at(b, j) = seq.at(b, d - 1, j);
      }
    }
  } else {
    lstm_features_ = NumericArray({batch_, 0});
  }

  // [C_t, L_t] per sample.
  NumericArray feats({batch_, conv_w + lstm_w});
  for (std::size_t b = 0; b < batch_; ++b) {
    std::copy_n(conv_features_.data() + b * conv_w, conv_w, feats.data() + b * (conv_w + lstm_w));
    std::copy_n(lstm_features_.data() + b * lstm_w, lstm_w, feats.data() + b * (conv_w + lstm_w) + conv_w);
  }
  features_ = feats;

  NumericArray y = forward_from_features(feats);
  return batched_ ? y : y.reshaped({spec_.horizon});
}

NumericArray Forecaster::forward_from_features(const NumericArray& features) {
  NumericArray a;
  if (features.rank() == 1) {
    a = features.reshaped({1, features.size()});
  } else {
    a = features;
  }
  if (a.rank() != 2 || a.dim(1) != spec_.feature_width()) {
    throw ShapeError("forecaster head: features " + shape_to_string(features.shape()) + ", expected width " +
                     std::to_string(spec_.feature_width()));
  }
  head_outputs_.clear();
  for (std::size_t i = 0; i < head_.size(); ++i) {
    a = head_[i].forward(a);
    if (i + 1 < head_.size()) apply_activation_inplace(spec_.head_activation, a.values());
    head_outputs_.push_back(a);
  }
  return features.rank() == 1 ? a.reshaped({spec_.horizon}) : a;
}

NumericArray Forecaster::backward_head(const NumericArray& d_prediction) {
  if (head_outputs_.empty()) throw StateError("forecaster: backward called before forward");
  const std::size_t rows = head_outputs_.back().dim(0);
  if (d_prediction.size() != rows * spec_.horizon) {
    throw ShapeError("forecaster backward: gradient " + shape_to_string(d_prediction.shape()) +
                     " does not match the last prediction");
  }
  NumericArray g = d_prediction.reshaped({rows, spec_.horizon});
  for (std::size_t i = head_.size(); i-- > 0;) {
    if (i + 1 < head_.size()) g = activation_backward(spec_.head_activation, head_outputs_[i], g);
    g = head_[i].backward(g);
  }
  return g;
}

void Forecaster::backward_branches(const NumericArray& d_features) {
  if (features_.empty() && spec_.feature_width() > 0) throw StateError("forecaster: backward called before forward");
  const std::size_t conv_w = spec_.conv_feature_width();
  const std::size_t lstm_w = spec_.lstm_feature_width();
  const std::size_t width = conv_w + lstm_w;
  if (d_features.size() != batch_ * width) {
    throw ShapeError("forecaster: feature gradient " + shape_to_string(d_features.shape()) + " for batch " +
                     std::to_string(batch_) + " x " + std::to_string(width));
  }
  const std::size_t d = spec_.lag;

  if (spec_.has_conv()) {
    const std::size_t len = conv_w / spec_.conv_filters.back();
    NumericArray g({batch_, len, spec_.conv_filters.back()});
    for (std::size_t b = 0; b < batch_; ++b) {
      std::copy_n(d_features.data() + b * width, conv_w, g.data() + b * conv_w);
    }
    for (std::size_t i = convs_.size(); i-- > 0;) {
      g = activation_backward(spec_.conv_activation, conv_outputs_[i], g);
      g = convs_[i].backward(g);
    }
  }

  if (spec_.has_lstm()) {
    const std::size_t hid = spec_.lstm_hidden;
    NumericArray g({batch_, d, hid});
    for (std::size_t b = 0; b < batch_; ++b) {
      const double* src = d_features.data() + b * width + conv_w;
      if (spec_.lstm_head_mode == LstmHeadMode::all) {
        std::copy_n(src, lstm_w, g.data() + b * d * hid);
      } else {
        std::copy_n(src, hid, g.data() + (b * d + d - 1) * hid);
      }
    }
    lstm_->backward(g);
  }
}

void Forecaster::backward(const NumericArray& d_prediction) { backward_branches(backward_head(d_prediction)); }

ParameterList Forecaster::parameters() {
  ParameterList out;
  if (lstm_) {
    auto p = lstm_->parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  for (auto& c : convs_) {
    auto p = c.parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  for (auto& h : head_) {
    auto p = h.parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<const Parameter*> Forecaster::parameters() const {
  auto list = const_cast<Forecaster*>(this)->parameters();
  return {list.begin(), list.end()};
}

Parameter& Forecaster::parameter(std::string_view name) {
  for (Parameter* p : parameters()) {
    if (p->name == name) return *p;
  }
  throw ConfigError("model has no parameter named '" + std::string(name) + "'");
}

std::size_t Forecaster::parameter_count() const {
  std::size_t n = 0;
  for (const Parameter* p : parameters()) n += p->value.size();
  return n;
}

void Forecaster::zero_grad() {
  for (Parameter* p : parameters()) p->zero_grad();
}

}  // namespace rollcast
