#pragma once

// Feature extractors: an LSTM returning its whole hidden-state sequence and a
// valid-mode 1-D convolution over the time axis. Both accept a single
// sequence [d x channels] or a batch [batch x d x channels].

#include <memory>
#include <string>

#include "rollcast/gradcore.hpp"

namespace rollcast {

enum class Gate { forget = 0, input = 1, output = 2, candidate = 3 };

class LstmLayer {
 public:
  LstmLayer() = default;
  LstmLayer(std::string prefix, std::size_t input_size, std::size_t hidden_size);
  LstmLayer(const LstmLayer& other);
  LstmLayer& operator=(const LstmLayer& other);
  LstmLayer(LstmLayer&&) noexcept;
  LstmLayer& operator=(LstmLayer&&) noexcept;
  ~LstmLayer();

  std::size_t input_size() const { return input_size_; }
  std::size_t hidden_size() const { return hidden_size_; }

  /// Glorot-uniform weights, zero biases.
  void initialize(Rng& rng);

  /// W^{g,h} [hidden x hidden]
  Parameter& recurrent_weight(Gate g) { return w_h_[static_cast<int>(g)]; }
  /// W^{g,x} [hidden x input]
  Parameter& input_weight(Gate g) { return w_x_[static_cast<int>(g)]; }
  Parameter& bias(Gate g) { return b_[static_cast<int>(g)]; }
  ParameterList parameters();

  struct CellState {
    NumericArray h;
    NumericArray c;
  };

  /// One step of the recurrence; does not touch the sequence cache.
  CellState cell(const NumericArray& x, const NumericArray& h_prev, const NumericArray& c_prev) const;

  /// Hidden states h_1..h_d from (h_0, c_0) = (0, 0).
  NumericArray forward(const NumericArray& inputs);
  /// Backpropagation through time. Returns d(inputs); adds parameter grads.
  NumericArray backward(const NumericArray& d_hidden);

 private:
  struct Cache;

  std::size_t input_size_ = 0;
  std::size_t hidden_size_ = 0;
  Parameter w_h_[4];
  Parameter w_x_[4];
  Parameter b_[4];
  std::unique_ptr<Cache> cache_;
};

class Conv1dLayer {
 public:
  Conv1dLayer() = default;
  Conv1dLayer(std::string prefix, std::size_t in_channels, std::size_t out_channels, std::size_t kernel_size);

  std::size_t in_channels() const { return weight_.value.dim(1); }
  std::size_t out_channels() const { return weight_.value.dim(0); }
  std::size_t kernel_size() const { return weight_.value.dim(2); }
  std::size_t output_length(std::size_t input_length) const;

  void initialize(Rng& rng);

  /// Kernel [out x in x kernel].
  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }
  ParameterList parameters() { return {&weight_, &bias_}; }

  /// y[t, o] = bias[o] + sum_{a, c} x[t + a, c] w[o, c, a]
  NumericArray forward(const NumericArray& x);
  NumericArray backward(const NumericArray& dy);

 private:
  Parameter weight_;
  Parameter bias_;
  // im2col patches of the last forward, [(batch * out_len) x (in * kernel)].
  std::optional<NumericArray> patches_;
  Shape input_shape_;
};

}  // namespace rollcast
