#include "rollcast/gradcore.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <set>
#include <numeric>
#include <sstream>

#include "eigen_util.hpp"
#include "rollcast/errors.hpp"

namespace rollcast {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << " x ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

NumericArray::NumericArray(Shape shape, double fill)
    : shape_(std::move(shape)), values_(shape_size(shape_), fill) {}

NumericArray::NumericArray(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(values.begin(), values.end()) {
  if (shape_size(shape_) != values_.size()) {
    throw ShapeError("shape " + shape_to_string(shape_) + " does not hold " + std::to_string(values_.size()) +
                     " values");
  }
}

NumericArray NumericArray::from_vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return NumericArray({n}, std::move(values));
}

NumericArray NumericArray::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t n_rows = rows.size();
  const std::size_t n_cols = n_rows ? rows.begin()->size() : 0;
  std::vector<double> values;
  values.reserve(n_rows * n_cols);
  for (const auto& row : rows) {
    if (row.size() != n_cols) throw ShapeError("ragged matrix literal");
    values.insert(values.end(), row.begin(), row.end());
  }
  return NumericArray({n_rows, n_cols}, std::move(values));
}

void NumericArray::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

NumericArray NumericArray::reshaped(Shape shape) const {
  if (shape_size(shape) != values_.size()) {
    throw ShapeError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
  }
  NumericArray out;
  out.shape_ = std::move(shape);
  out.values_ = values_;
  return out;
}

bool NumericArray::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

Parameter::Parameter(std::string name, NumericArray value)
    : name(std::move(name)), value(std::move(value)), grad(this->value.shape()) {}

std::size_t Rng::below(std::size_t n) {
  if (n == 0) throw DomainError("Rng::below(0)");
  const std::uint64_t bound = n;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return static_cast<std::size_t>(x % bound);
}

// ---------------------------------------------------------------------------

Activation parse_activation(std::string_view name) {
  if (name == "linear") return Activation::linear;
  if (name == "relu") return Activation::relu;
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::linear: return "linear";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::tanh: return "tanh";
  }
  return "?";
}

void apply_activation_inplace(Activation a, std::span<double> x) {
  switch (a) {
    case Activation::linear: break;
    case Activation::relu:
      for (double& v : x) v = v > 0.0 ? v : 0.0;
      break;
    case Activation::sigmoid:
      for (double& v : x) v = sigmoid(v);
      break;
    case Activation::tanh:
      for (double& v : x) v = std::tanh(v);
      break;
  }
}

NumericArray apply_activation(Activation a, const NumericArray& x) {
  NumericArray y = x;
  apply_activation_inplace(a, y.values());
  return y;
}

NumericArray sigmoid(const NumericArray& x) { return apply_activation(Activation::sigmoid, x); }
NumericArray tanh_act(const NumericArray& x) { return apply_activation(Activation::tanh, x); }
NumericArray relu(const NumericArray& x) { return apply_activation(Activation::relu, x); }

NumericArray activation_backward(Activation a, const NumericArray& y, const NumericArray& dy) {
  if (y.shape() != dy.shape()) {
    throw ShapeError("activation backward: output " + shape_to_string(y.shape()) + " vs gradient " +
                     shape_to_string(dy.shape()));
  }
  NumericArray dx = dy;
  const std::size_t n = y.size();
  switch (a) {
    case Activation::linear: break;
    case Activation::relu:
      for (std::size_t i = 0; i < n; ++i) dx[i] = y[i] > 0.0 ? dy[i] : 0.0;
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < n; ++i) dx[i] = dy[i] * y[i] * (1.0 - y[i]);
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < n; ++i) dx[i] = dy[i] * (1.0 - y[i] * y[i]);
      break;
  }
  return dx;
}

// ---------------------------------------------------------------------------

NumericArray affine_forward(const NumericArray& x, const NumericArray& weight, const NumericArray& bias) {
  if (weight.rank() != 2 || x.rank() != 1 || bias.rank() != 1 || weight.dim(1) != x.dim(0) ||
      weight.dim(0) != bias.dim(0)) {
    throw ShapeError("affine: W " + shape_to_string(weight.shape()) + ", x " + shape_to_string(x.shape()) +
                     ", b " + shape_to_string(bias.shape()));
  }
  const std::size_t out = weight.dim(0);
  const std::size_t in = weight.dim(1);
  NumericArray y = bias;
  for (std::size_t o = 0; o < out; ++o) {
    double acc = 0.0;
    for (std::size_t i = 0; i < in; ++i) acc += weight.at(o, i) * x[i];
    y[o] += acc;
  }
  return y;
}

Affine::Affine(std::string name, std::size_t in_features, std::size_t out_features)
    : weight_(name + ".weight", NumericArray({out_features, in_features})),
      bias_(name + ".bias", NumericArray({out_features})) {}

NumericArray Affine::forward(const NumericArray& x) {
  const std::size_t in = in_features();
  const std::size_t out = out_features();
  if (x.rank() == 1) {
    if (x.dim(0) != in) {
      throw ShapeError("affine " + weight_.name + ": expected input [" + std::to_string(in) + "], got " +
                       shape_to_string(x.shape()));
    }
    input_ = x.reshaped({1, in});
    return affine_forward(x, weight_.value, bias_.value);
  }
  if (x.rank() != 2 || x.dim(1) != in) {
    throw ShapeError("affine " + weight_.name + ": expected input [batch x " + std::to_string(in) + "], got " +
                     shape_to_string(x.shape()));
  }
  const auto batch = static_cast<Eigen::Index>(x.dim(0));
  input_ = x;
  NumericArray y({x.dim(0), out});
  auto ym = detail::as_matrix(y, batch, out);
  ym.noalias() = detail::as_matrix(x, batch, in) * detail::as_matrix(weight_.value, out, in).transpose();
  ym.rowwise() += detail::as_vector(bias_.value).transpose();
  return y;
}

NumericArray Affine::backward(const NumericArray& dy) {
  if (!input_) throw StateError("affine " + weight_.name + ": backward called before forward");
  const std::size_t in = in_features();
  const std::size_t out = out_features();
  const std::size_t batch = input_->dim(0);
  const bool single = dy.rank() == 1;
  if ((single && (batch != 1 || dy.dim(0) != out)) ||
      (!single && (dy.rank() != 2 || dy.dim(0) != batch || dy.dim(1) != out))) {
    throw ShapeError("affine " + weight_.name + ": upstream gradient " + shape_to_string(dy.shape()) +
                     " does not match output [" + std::to_string(batch) + " x " + std::to_string(out) + "]");
  }
  const auto b = static_cast<Eigen::Index>(batch);
  auto dym = detail::as_matrix(dy, b, out);
  auto xm = detail::as_matrix(*input_, b, in);
  auto wm = detail::as_matrix(weight_.value, out, in);
  detail::as_matrix(weight_.grad, out, in).noalias() += dym.transpose() * xm;
  detail::as_vector(bias_.grad).noalias() += dym.colwise().sum().transpose();
  NumericArray dx(single ? Shape{in} : Shape{batch, in});
  detail::as_matrix(dx, b, in).noalias() = dym * wm;
  return dx;
}

// ---------------------------------------------------------------------------

NumericArray concat_flatten(std::span<const NumericArray> parts) {
  if (parts.empty()) throw DomainError("concat_flatten: empty part list");
  std::vector<double> out;
  std::size_t total = 0;
  for (const auto& p : parts) total += p.size();
  out.reserve(total);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return NumericArray::from_vector(std::move(out));
}

std::vector<NumericArray> concat_backward(const NumericArray& grad, std::span<const Shape> shapes) {
  std::size_t total = 0;
  for (const auto& s : shapes) total += shape_size(s);
  if (total != grad.size()) {
    throw ShapeError("concat_backward: gradient of length " + std::to_string(grad.size()) + " for parts totalling " +
                     std::to_string(total));
  }
  std::vector<NumericArray> parts;
  parts.reserve(shapes.size());
  std::size_t offset = 0;
  for (const auto& s : shapes) {
    const std::size_t n = shape_size(s);
    parts.emplace_back(s, std::vector<double>(grad.data() + offset, grad.data() + offset + n));
    offset += n;
  }
  return parts;
}

// ---------------------------------------------------------------------------

InitScheme parse_init_scheme(std::string_view name) {
  if (name == "glorot_uniform") return InitScheme::glorot_uniform;
  if (name == "zeros") return InitScheme::zeros;
  if (name == "ones") return InitScheme::ones;
  throw ConfigError("unknown initialization scheme '" + std::string(name) + "'");
}

double glorot_limit(const Shape& shape) {
  double fan_in = 1.0;
  double fan_out = 1.0;
  if (shape.size() == 1) {
    fan_in = fan_out = static_cast<double>(shape[0]);
  } else if (shape.size() >= 2) {
    double receptive = 1.0;
    for (std::size_t i = 2; i < shape.size(); ++i) receptive *= static_cast<double>(shape[i]);
    fan_out = static_cast<double>(shape[0]) * receptive;
    fan_in = static_cast<double>(shape[1]) * receptive;
  }
  return std::sqrt(6.0 / (fan_in + fan_out));
}

NumericArray init_params(const Shape& shape, InitScheme scheme, Rng& rng) {
  switch (scheme) {
    case InitScheme::zeros: return NumericArray(shape, 0.0);
    case InitScheme::ones: return NumericArray(shape, 1.0);
    case InitScheme::glorot_uniform: {
      const double limit = glorot_limit(shape);
      NumericArray a(shape);
      for (double& v : a.values()) v = rng.uniform(-limit, limit);
      return a;
    }
  }
  throw ConfigError("unhandled initialization scheme");
}

NumericArray init_params(const Shape& shape, std::string_view scheme, Rng& rng) {
  return init_params(shape, parse_init_scheme(scheme), rng);
}

// ---------------------------------------------------------------------------

std::vector<double> finite_diff_entries(const LossFunction& loss, Parameter& param,
                                        std::span<const std::size_t> entries, double h) {
  if (!(h > 0.0)) throw DomainError("finite difference step must be positive");
  std::vector<double> out;
  out.reserve(entries.size());
  for (std::size_t idx : entries) {
    double& slot = param.value[idx];
    const double saved = slot;
    slot = saved + h;
    const double up = loss();
    slot = saved - h;
    const double down = loss();
    slot = saved;
    out.push_back((up - down) / (2.0 * h));
  }
  return out;
}

std::vector<NumericArray> finite_diff_grad(const LossFunction& loss, const ParameterList& params, double h) {
  std::vector<NumericArray> grads;
  grads.reserve(params.size());
  for (Parameter* p : params) {
    std::vector<std::size_t> all(p->value.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    grads.emplace_back(p->value.shape(), finite_diff_entries(loss, *p, all, h));
  }
  return grads;
}

double max_relative_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("max_relative_error: length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), 1e-8});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

// ---------------------------------------------------------------------------

namespace {

constexpr const char* kFormat = "rollcast.params/1";

void put_le(std::ostream& os, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xffu);
  os.write(bytes, 8);
}

double get_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

const NumericArray& ParameterBundle::get(std::string_view name) const {
  for (const auto& [n, a] : tensors) {
    if (n == name) return a;
  }
  throw CheckpointError("parameter '" + std::string(name) + "' missing from checkpoint");
}

void save_parameters(const std::filesystem::path& dir, const std::vector<const Parameter*>& params,
                     const nlohmann::json& extra) {
  std::set<std::string> names;
  for (const Parameter* p : params) {
    if (!names.insert(p->name).second) throw CheckpointError("duplicate parameter name '" + p->name + "'");
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());

  nlohmann::json manifest = extra.is_object() ? extra : nlohmann::json::object();
  manifest["format"] = kFormat;
  manifest["dtype"] = "float64";
  manifest["byte_order"] = "little";
  auto& entries = manifest["parameters"] = nlohmann::json::array();

  std::ofstream blob(dir / kBlobFile, std::ios::binary);
  if (!blob) throw DataError("cannot write " + (dir / kBlobFile).string());
  std::size_t offset = 0;
  for (const Parameter* p : params) {
    entries.push_back({{"name", p->name}, {"shape", p->value.shape()}, {"offset", offset}, {"count", p->value.size()}});
    for (double v : p->value.values()) put_le(blob, v);
    offset += p->value.size();
  }
  manifest["total_values"] = offset;
  if (!blob) throw DataError("failed writing " + (dir / kBlobFile).string());

  std::ofstream mf(dir / kManifestFile);
  if (!mf) throw DataError("cannot write " + (dir / kManifestFile).string());
  mf << manifest.dump(2) << '\n';
}

ParameterBundle load_parameters(const std::filesystem::path& dir) {
  ParameterBundle bundle;
  std::ifstream mf(dir / kManifestFile);
  if (!mf) throw CheckpointError("cannot open " + (dir / kManifestFile).string());
  try {
    bundle.manifest = nlohmann::json::parse(mf);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("corrupt manifest " + (dir / kManifestFile).string() + ": " + e.what());
  }
  if (bundle.manifest.value("format", "") != kFormat) {
    throw CheckpointError("unsupported checkpoint format in " + (dir / kManifestFile).string());
  }

  std::ifstream blob(dir / kBlobFile, std::ios::binary);
  if (!blob) throw CheckpointError("cannot open " + (dir / kBlobFile).string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(blob)), std::istreambuf_iterator<char>());

  try {
    const std::size_t total = bundle.manifest.at("total_values").get<std::size_t>();
    if (bytes.size() != total * 8) {
      throw CheckpointError("blob holds " + std::to_string(bytes.size()) + " bytes, manifest expects " +
                            std::to_string(total * 8));
    }
    for (const auto& e : bundle.manifest.at("parameters")) {
      const auto name = e.at("name").get<std::string>();
      const auto shape = e.at("shape").get<Shape>();
      const auto offset = e.at("offset").get<std::size_t>();
      const auto count = e.at("count").get<std::size_t>();
      if (count != shape_size(shape) || offset + count > total) {
        throw CheckpointError("manifest entry '" + name + "' is inconsistent");
      }
      for (const auto& [existing, unused] : bundle.tensors) {
        if (existing == name) throw CheckpointError("parameter '" + name + "' listed twice in manifest");
      }
      std::vector<double> values(count);
      for (std::size_t i = 0; i < count; ++i) values[i] = get_le(bytes.data() + 8 * (offset + i));
      bundle.tensors.emplace_back(name, NumericArray(shape, std::move(values)));
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("corrupt manifest " + (dir / kManifestFile).string() + ": " + e.what());
  }
  return bundle;
}

}  // namespace rollcast
