#include "rollcast/layers.hpp"

#include <array>

#include "eigen_util.hpp"
#include "rollcast/errors.hpp"

namespace rollcast {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;

constexpr std::array<const char*, 4> kGateNames = {"f", "i", "o", "c"};

// Eigen has no packet tanh for double; 1 - 2/(e^{2x} + 1) uses the vectorized exp.
template <typename Dst, typename Src>
void tanh_into(Dst&& dst, const Src& src) {
  dst = (1.0 - 2.0 / ((2.0 * src.array()).exp() + 1.0)).matrix();
}

struct SequenceShape {
  std::size_t batch;
  std::size_t steps;
  std::size_t channels;
  bool batched;
};

SequenceShape sequence_shape(const NumericArray& x, std::size_t channels, const char* what) {
  if (x.rank() == 2 && x.dim(1) == channels) return {1, x.dim(0), channels, false};
  if (x.rank() == 3 && x.dim(2) == channels) return {x.dim(0), x.dim(1), channels, true};
  throw ShapeError(std::string(what) + ": expected [d x " + std::to_string(channels) + "] or [batch x d x " +
                   std::to_string(channels) + "], got " + shape_to_string(x.shape()));
}

Shape sequence_result_shape(const SequenceShape& s, std::size_t steps, std::size_t channels) {
  return s.batched ? Shape{s.batch, steps, channels} : Shape{steps, channels};
}

}  // namespace

// ---------------------------------------------------------------------------
// LSTM

struct LstmLayer::Cache {
  std::size_t batch = 0;
  std::size_t steps = 0;
  bool batched = false;
  bool valid = false;
  MatrixXd w_h;      // [4H x H]
  MatrixXd w_x;      // [4H x in]
  MatrixXd x_all;    // [in x d*B], block t holds x_t
  MatrixXd h_all;    // [H x (d+1)*B], block 0 is h_0
  MatrixXd c_all;    // [H x (d+1)*B]
  MatrixXd gates;    // [4H x d*B], post-activation f, i, o, c~
  MatrixXd tanh_c;   // [H x d*B]
  MatrixXd d_gates;  // backward scratch, [4H x d*B]
};

LstmLayer::LstmLayer(std::string prefix, std::size_t input_size, std::size_t hidden_size)
    : input_size_(input_size), hidden_size_(hidden_size) {
  if (input_size == 0 || hidden_size == 0) throw ConfigError("LSTM sizes must be >= 1");
  for (int g = 0; g < 4; ++g) {
    w_h_[g] = Parameter(prefix + ".W_" + kGateNames[g] + "h", NumericArray({hidden_size, hidden_size}));
    w_x_[g] = Parameter(prefix + ".W_" + kGateNames[g] + "x", NumericArray({hidden_size, input_size}));
    b_[g] = Parameter(prefix + ".b_" + kGateNames[g], NumericArray({hidden_size}));
  }
}

LstmLayer::LstmLayer(const LstmLayer& other)
    : input_size_(other.input_size_), hidden_size_(other.hidden_size_) {
  for (int g = 0; g < 4; ++g) {
    w_h_[g] = other.w_h_[g];
    w_x_[g] = other.w_x_[g];
    b_[g] = other.b_[g];
  }
}

LstmLayer& LstmLayer::operator=(const LstmLayer& other) {
  if (this != &other) {
    LstmLayer tmp(other);
    *this = std::move(tmp);
  }
  return *this;
}

LstmLayer::LstmLayer(LstmLayer&&) noexcept = default;
LstmLayer& LstmLayer::operator=(LstmLayer&&) noexcept = default;
LstmLayer::~LstmLayer() = default;

void LstmLayer::initialize(Rng& rng) {
  for (int g = 0; g < 4; ++g) {
    w_h_[g].value = init_params(w_h_[g].value.shape(), InitScheme::glorot_uniform, rng);
    w_x_[g].value = init_params(w_x_[g].value.shape(), InitScheme::glorot_uniform, rng);
    b_[g].value = init_params(b_[g].value.shape(), InitScheme::zeros, rng);
  }
}

ParameterList LstmLayer::parameters() {
  ParameterList out;
  for (int g = 0; g < 4; ++g) {
    out.push_back(&w_h_[g]);
    out.push_back(&w_x_[g]);
  }
  for (int g = 0; g < 4; ++g) out.push_back(&b_[g]);
  return out;
}

LstmLayer::CellState LstmLayer::cell(const NumericArray& x, const NumericArray& h_prev,
                                     const NumericArray& c_prev) const {
  const std::size_t hid = hidden_size_;
  if (x.rank() != 1 || x.dim(0) != input_size_ || h_prev.rank() != 1 || h_prev.dim(0) != hid || c_prev.rank() != 1 ||
      c_prev.dim(0) != hid) {
    throw ShapeError("lstm cell: x " + shape_to_string(x.shape()) + ", h " + shape_to_string(h_prev.shape()) + ", c " +
                     shape_to_string(c_prev.shape()) + " for input " + std::to_string(input_size_) + ", hidden " +
                     std::to_string(hid));
  }
  auto pre = [&](int g) {
    NumericArray a = affine_forward(x, w_x_[g].value, b_[g].value);
    const NumericArray r = affine_forward(h_prev, w_h_[g].value, NumericArray({hid}));
    for (std::size_t j = 0; j < hid; ++j) a[j] += r[j];
    return a;
  };
  const NumericArray f = sigmoid(pre(0));
  const NumericArray i = sigmoid(pre(1));
  const NumericArray o = sigmoid(pre(2));
  const NumericArray cand = tanh_act(pre(3));
  CellState out{NumericArray({hid}), NumericArray({hid})};
  for (std::size_t j = 0; j < hid; ++j) {
    out.c[j] = f[j] * c_prev[j] + i[j] * cand[j];
    out.h[j] = o[j] * std::tanh(out.c[j]);
  }
  return out;
}

NumericArray LstmLayer::forward(const NumericArray& inputs) {
  const SequenceShape s = sequence_shape(inputs, input_size_, "lstm");
  if (s.steps == 0) throw DomainError("lstm: empty input sequence");
  const auto hid = static_cast<Index>(hidden_size_);
  const auto in = static_cast<Index>(input_size_);
  const auto batch = static_cast<Index>(s.batch);
  const auto steps = static_cast<Index>(s.steps);

  // Buffers are reused across calls; reallocating them dominates small batches.
  if (!cache_) cache_ = std::make_unique<Cache>();
  Cache& cache = *cache_;
  cache.valid = false;
  cache.batch = s.batch;
  cache.steps = s.steps;
  cache.batched = s.batched;
  cache.w_h.resize(4 * hid, hid);
  cache.w_x.resize(4 * hid, in);
  Eigen::VectorXd bias(4 * hid);
  for (int g = 0; g < 4; ++g) {
    cache.w_h.middleRows(g * hid, hid) = detail::as_matrix(w_h_[g].value, hid, hid);
    cache.w_x.middleRows(g * hid, hid) = detail::as_matrix(w_x_[g].value, hid, in);
    bias.segment(g * hid, hid) = detail::as_vector(b_[g].value);
  }

  cache.x_all.resize(in, steps * batch);
  for (Index b = 0; b < batch; ++b) {
    for (Index t = 0; t < steps; ++t) {
      for (Index c = 0; c < in; ++c) cache.x_all(c, t * batch + b) = inputs[(b * steps + t) * in + c];
    }
  }
  cache.h_all.resize(hid, (steps + 1) * batch);
  cache.h_all.leftCols(batch).setZero();
  cache.c_all.resize(hid, (steps + 1) * batch);
  cache.c_all.leftCols(batch).setZero();
  cache.gates.resize(4 * hid, steps * batch);
  cache.tanh_c.resize(hid, steps * batch);

  // Input projections for all steps in one product.
  cache.gates.noalias() = cache.w_x * cache.x_all;
  cache.gates.colwise() += bias;

  for (Index t = 0; t < steps; ++t) {
    auto a = cache.gates.middleCols(t * batch, batch);
    a.noalias() += cache.w_h * cache.h_all.middleCols(t * batch, batch);
    a.topRows(3 * hid) = (1.0 + (-a.topRows(3 * hid).array()).exp()).inverse().matrix();
    tanh_into(a.bottomRows(hid), a.bottomRows(hid));
    auto c_prev = cache.c_all.middleCols(t * batch, batch).array();
    auto c_next = cache.c_all.middleCols((t + 1) * batch, batch);
    c_next = (a.middleRows(0, hid).array() * c_prev + a.middleRows(hid, hid).array() * a.bottomRows(hid).array()).matrix();
    auto tc = cache.tanh_c.middleCols(t * batch, batch);
    tanh_into(tc, c_next);
    cache.h_all.middleCols((t + 1) * batch, batch) = (a.middleRows(2 * hid, hid).array() * tc.array()).matrix();
  }

  NumericArray out(sequence_result_shape(s, s.steps, hidden_size_));
  for (Index b = 0; b < batch; ++b) {
    for (Index t = 0; t < steps; ++t) {
      for (Index j = 0; j < hid; ++j) out[(b * steps + t) * hid + j] = cache.h_all(j, (t + 1) * batch + b);
    }
  }
  cache.valid = true;
  return out;
}

NumericArray LstmLayer::backward(const NumericArray& d_hidden) {
  if (!cache_ || !cache_->valid) throw StateError("lstm: backward called before forward");
  Cache& k = *cache_;
  const Shape expected = k.batched ? Shape{k.batch, k.steps, hidden_size_} : Shape{k.steps, hidden_size_};
  if (d_hidden.shape() != expected) {
    throw ShapeError("lstm backward: expected gradient " + shape_to_string(expected) + ", got " +
                     shape_to_string(d_hidden.shape()));
  }
  const auto hid = static_cast<Index>(hidden_size_);
  const auto in = static_cast<Index>(input_size_);
  const auto batch = static_cast<Index>(k.batch);
  const auto steps = static_cast<Index>(k.steps);

  MatrixXd& d_gates = k.d_gates;
  d_gates.resize(4 * hid, steps * batch);
  MatrixXd dh_next = MatrixXd::Zero(hid, batch);
  MatrixXd dc_next = MatrixXd::Zero(hid, batch);
  MatrixXd dh(hid, batch);

  for (Index t = steps - 1; t >= 0; --t) {
    for (Index b = 0; b < batch; ++b) {
      for (Index j = 0; j < hid; ++j) dh(j, b) = d_hidden[(b * steps + t) * hid + j] + dh_next(j, b);
    }
    const auto a = k.gates.middleCols(t * batch, batch).array();
    const auto f = a.middleRows(0, hid);
    const auto i = a.middleRows(hid, hid);
    const auto o = a.middleRows(2 * hid, hid);
    const auto g = a.middleRows(3 * hid, hid);
    const auto tc = k.tanh_c.middleCols(t * batch, batch).array();
    const auto c_prev = k.c_all.middleCols(t * batch, batch).array();

    const Eigen::ArrayXXd dc = dh.array() * o * (1.0 - tc * tc) + dc_next.array();
    auto da = d_gates.middleCols(t * batch, batch);
    da.middleRows(0, hid) = (dc * c_prev * f * (1.0 - f)).matrix();
    da.middleRows(hid, hid) = (dc * g * i * (1.0 - i)).matrix();
    da.middleRows(2 * hid, hid) = (dh.array() * tc * o * (1.0 - o)).matrix();
    da.middleRows(3 * hid, hid) = (dc * i * (1.0 - g * g)).matrix();
    dc_next = (dc * f).matrix();
    dh_next.noalias() = k.w_h.transpose() * da;
  }

  const MatrixXd dw_h = d_gates * k.h_all.leftCols(steps * batch).transpose();
  const MatrixXd dw_x = d_gates * k.x_all.transpose();
  const Eigen::VectorXd db = d_gates.rowwise().sum();
  for (int g = 0; g < 4; ++g) {
    detail::as_matrix(w_h_[g].grad, hid, hid) += dw_h.middleRows(g * hid, hid);
    detail::as_matrix(w_x_[g].grad, hid, in) += dw_x.middleRows(g * hid, hid);
    detail::as_vector(b_[g].grad) += db.segment(g * hid, hid);
  }

  const MatrixXd dx_all = k.w_x.transpose() * d_gates;
  NumericArray dx(k.batched ? Shape{k.batch, k.steps, input_size_} : Shape{k.steps, input_size_});
  for (Index b = 0; b < batch; ++b) {
    for (Index t = 0; t < steps; ++t) {
      for (Index c = 0; c < in; ++c) dx[(b * steps + t) * in + c] = dx_all(c, t * batch + b);
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Conv1D

Conv1dLayer::Conv1dLayer(std::string prefix, std::size_t in_channels, std::size_t out_channels,
                         std::size_t kernel_size)
    : weight_(prefix + ".weight", NumericArray({out_channels, in_channels, kernel_size})),
      bias_(prefix + ".bias", NumericArray({out_channels})) {
  if (in_channels == 0 || out_channels == 0 || kernel_size == 0) {
    throw ConfigError("conv1d channel counts and kernel_size must be >= 1");
  }
}

std::size_t Conv1dLayer::output_length(std::size_t input_length) const {
  if (input_length < kernel_size()) {
    throw ShapeError("conv1d: input length " + std::to_string(input_length) + " is shorter than kernel " +
                     std::to_string(kernel_size()));
  }
  return input_length - kernel_size() + 1;
}

void Conv1dLayer::initialize(Rng& rng) {
  weight_.value = init_params(weight_.value.shape(), InitScheme::glorot_uniform, rng);
  bias_.value = init_params(bias_.value.shape(), InitScheme::zeros, rng);
}

NumericArray Conv1dLayer::forward(const NumericArray& x) {
  const SequenceShape s = sequence_shape(x, in_channels(), "conv1d");
  const std::size_t len = output_length(s.steps);
  const std::size_t cin = in_channels();
  const std::size_t k = kernel_size();
  const std::size_t cout = out_channels();
  const std::size_t rows = s.batch * len;
  const std::size_t width = cin * k;

  NumericArray patches({rows, width});
  for (std::size_t b = 0; b < s.batch; ++b) {
    for (std::size_t t = 0; t < len; ++t) {
      double* row = patches.data() + (b * len + t) * width;
      for (std::size_t c = 0; c < cin; ++c) {
        for (std::size_t a = 0; a < k; ++a) row[c * k + a] = x[(b * s.steps + t + a) * cin + c];
      }
    }
  }

  NumericArray y(sequence_result_shape(s, len, cout));
  auto ym = detail::as_matrix(y, static_cast<Index>(rows), static_cast<Index>(cout));
  ym.noalias() = detail::as_matrix(patches, static_cast<Index>(rows), static_cast<Index>(width)) *
                 detail::as_matrix(weight_.value, static_cast<Index>(cout), static_cast<Index>(width)).transpose();
  ym.rowwise() += detail::as_vector(bias_.value).transpose();

  patches_ = std::move(patches);
  input_shape_ = x.shape();
  return y;
}

NumericArray Conv1dLayer::backward(const NumericArray& dy) {
  if (!patches_) throw StateError("conv1d: backward called before forward");
  const std::size_t rows = patches_->dim(0);
  const std::size_t width = patches_->dim(1);
  const std::size_t cout = out_channels();
  const std::size_t cin = in_channels();
  const std::size_t k = kernel_size();
  if (dy.size() != rows * cout || dy.shape().back() != cout) {
    throw ShapeError("conv1d backward: gradient " + shape_to_string(dy.shape()) + " does not match the output");
  }
  const auto r = static_cast<Index>(rows);
  const auto w = static_cast<Index>(width);
  const auto co = static_cast<Index>(cout);
  auto dym = detail::as_matrix(dy, r, co);
  detail::as_matrix(weight_.grad, co, w).noalias() += dym.transpose() * detail::as_matrix(*patches_, r, w);
  detail::as_vector(bias_.grad).noalias() += dym.colwise().sum().transpose();
  const detail::RowMatrix d_patches = dym * detail::as_matrix(weight_.value, co, w);

  const bool batched = input_shape_.size() == 3;
  const std::size_t batch = batched ? input_shape_[0] : 1;
  const std::size_t steps = batched ? input_shape_[1] : input_shape_[0];
  const std::size_t len = steps - k + 1;
  NumericArray dx(input_shape_);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < len; ++t) {
      const double* row = d_patches.data() + (b * len + t) * width;
      for (std::size_t c = 0; c < cin; ++c) {
        for (std::size_t a = 0; a < k; ++a) dx[(b * steps + t + a) * cin + c] += row[c * k + a];
      }
    }
  }
  return dx;
}

}  // namespace rollcast
