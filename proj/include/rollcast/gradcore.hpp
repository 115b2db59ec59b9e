#pragma once

// Dense arrays, differentiable primitives and the finite-difference oracle
// that every backward pass in the library is checked against.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <initializer_list>
#include <new>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace rollcast {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

/// 64-byte aligned storage. Eigen peels loops based on pointer alignment, so
/// malloc-aligned buffers could round differently from run to run.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

/// Row-major dense array of doubles.
class NumericArray {
 public:
  NumericArray() = default;
  explicit NumericArray(Shape shape, double fill = 0.0);
  NumericArray(Shape shape, std::vector<double> values);

  static NumericArray from_vector(std::vector<double> values);
  static NumericArray matrix(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  double& at(std::size_t i, std::size_t j) { return values_[i * shape_[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return values_[i * shape_[1] + j]; }
  double& at(std::size_t i, std::size_t j, std::size_t k) {
    return values_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return values_[(i * shape_[1] + j) * shape_[2] + k];
  }

  void fill(double v);
  NumericArray reshaped(Shape shape) const;
  bool all_finite() const;

  friend bool operator==(const NumericArray&, const NumericArray&) = default;

 private:
  Shape shape_;
  std::vector<double, AlignedAllocator<double>> values_;
};

/// A trainable tensor with its accumulated gradient.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, NumericArray value);

  std::string name;
  NumericArray value;
  NumericArray grad;

  void zero_grad() { grad.fill(0.0); }
};

using ParameterList = std::vector<Parameter*>;

/// mt19937_64 stream with platform-independent real and integer mappings.
///
/// Reals take the top 53 bits of each 64-bit draw, integers use rejection
/// sampling, so a seed reproduces the same numbers with any standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// Activations

enum class Activation { linear, relu, sigmoid, tanh };

Activation parse_activation(std::string_view name);
std::string_view to_string(Activation a);

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

NumericArray sigmoid(const NumericArray& x);
NumericArray tanh_act(const NumericArray& x);
NumericArray relu(const NumericArray& x);
NumericArray apply_activation(Activation a, const NumericArray& x);
void apply_activation_inplace(Activation a, std::span<double> x);

/// Gradient through an activation, expressed in terms of its output y:
/// sigmoid' = y(1-y), tanh' = 1-y^2, relu' = 1{y>0}.
NumericArray activation_backward(Activation a, const NumericArray& y, const NumericArray& dy);

// ---------------------------------------------------------------------------
// Affine map

/// y = W x + b for a single vector x.
NumericArray affine_forward(const NumericArray& x, const NumericArray& weight, const NumericArray& bias);

/// Fully connected layer. Accepts a vector [in] or a batch [batch x in].
class Affine {
 public:
  Affine() = default;
  Affine(std::string name, std::size_t in_features, std::size_t out_features);

  std::size_t in_features() const { return weight_.value.dim(1); }
  std::size_t out_features() const { return weight_.value.dim(0); }

  NumericArray forward(const NumericArray& x);
  /// Returns dx; adds dW = dy x^T and db = sum(dy) into the parameter grads.
  NumericArray backward(const NumericArray& dy);

  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }
  ParameterList parameters() { return {&weight_, &bias_}; }

 private:
  Parameter weight_;
  Parameter bias_;
  std::optional<NumericArray> input_;
};

// ---------------------------------------------------------------------------
// Flatten + concatenate

NumericArray concat_flatten(std::span<const NumericArray> parts);
/// Splits a flat gradient back into arrays shaped like `shapes`.
std::vector<NumericArray> concat_backward(const NumericArray& grad, std::span<const Shape> shapes);

// ---------------------------------------------------------------------------
// Initialization

enum class InitScheme { glorot_uniform, zeros, ones };

InitScheme parse_init_scheme(std::string_view name);

/// Glorot bound sqrt(6 / (fan_in + fan_out)). For rank-3 kernels [out x in x k]
/// the receptive field multiplies both fans.
double glorot_limit(const Shape& shape);

NumericArray init_params(const Shape& shape, InitScheme scheme, Rng& rng);
NumericArray init_params(const Shape& shape, std::string_view scheme, Rng& rng);

// ---------------------------------------------------------------------------
// Finite-difference oracle

using LossFunction = std::function<double()>;

/// Central differences (f(t+h) - f(t-h)) / 2h over every entry of every parameter.
/// The loss closure must read the parameter values it is given.
std::vector<NumericArray> finite_diff_grad(const LossFunction& loss, const ParameterList& params, double h = 1e-5);

/// Same, restricted to the listed flat entries of one parameter.
std::vector<double> finite_diff_entries(const LossFunction& loss, Parameter& param,
                                        std::span<const std::size_t> entries, double h = 1e-5);

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, 1e-8)
double max_relative_error(std::span<const double> a, std::span<const double> b);

// ---------------------------------------------------------------------------
// Parameter serialization: JSON manifest + little-endian float64 blob.

struct ParameterBundle {
  nlohmann::json manifest;
  std::vector<std::pair<std::string, NumericArray>> tensors;

  const NumericArray& get(std::string_view name) const;
};

inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kBlobFile = "params.bin";

/// Writes `dir/manifest.json` and `dir/params.bin`. `extra` keys are merged
/// into the manifest.
void save_parameters(const std::filesystem::path& dir, const std::vector<const Parameter*>& params,
                     const nlohmann::json& extra = nlohmann::json::object());
ParameterBundle load_parameters(const std::filesystem::path& dir);

}  // namespace rollcast
