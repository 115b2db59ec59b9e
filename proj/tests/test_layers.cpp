#include <doctest.h>

#include <cmath>

#include "rollcast/errors.hpp"
#include "rollcast/layers.hpp"
#include "support.hpp"

using namespace rollcast;
using testing::random_array;

namespace {

constexpr Gate kGates[] = {Gate::forget, Gate::input, Gate::output, Gate::candidate};

LstmLayer random_lstm(std::size_t in, std::size_t hidden, std::uint64_t seed) {
  LstmLayer layer("lstm", in, hidden);
  Rng rng(seed);
  for (Parameter* p : layer.parameters()) p->value = random_array(p->value.shape(), rng, -0.8, 0.8);
  return layer;
}

NumericArray row(const NumericArray& a, std::size_t i) {
  const std::size_t w = a.dim(1);
  NumericArray r({w});
  for (std::size_t j = 0; j < w; ++j) r[j] = a.at(i, j);
  return r;
}

// Reference LSTM cell written straight from the gate equations.
LstmLayer::CellState reference_cell(LstmLayer& L, const NumericArray& x, const NumericArray& h,
                                    const NumericArray& c) {
  const std::size_t H = L.hidden_size();
  auto gate = [&](Gate g, std::size_t k) {
    double s = L.bias(g).value[k];
    for (std::size_t j = 0; j < H; ++j) s += L.recurrent_weight(g).value.at(k, j) * h[j];
    for (std::size_t j = 0; j < x.size(); ++j) s += L.input_weight(g).value.at(k, j) * x[j];
    return s;
  };
  LstmLayer::CellState out{NumericArray({H}), NumericArray({H})};
  for (std::size_t k = 0; k < H; ++k) {
    const double f = sigmoid(gate(Gate::forget, k));
    const double i = sigmoid(gate(Gate::input, k));
    const double o = sigmoid(gate(Gate::output, k));
    const double cand = std::tanh(gate(Gate::candidate, k));
    out.c[k] = f * c[k] + i * cand;
    out.h[k] = o * std::tanh(out.c[k]);
  }
  return out;
}

}  // namespace

TEST_CASE("lstm parameter layout") {
  LstmLayer layer("lstm", 3, 5);
  CHECK(layer.parameters().size() == 12);
  for (Gate g : kGates) {
    CHECK(layer.recurrent_weight(g).value.shape() == Shape{5, 5});
    CHECK(layer.input_weight(g).value.shape() == Shape{5, 3});
    CHECK(layer.bias(g).value.shape() == Shape{5});
  }
  for (Parameter* p : layer.parameters()) {
    CHECK(p->name.rfind("lstm.", 0) == 0);
    CHECK(p->grad.shape() == p->value.shape());
  }
}

TEST_CASE("lstm cell examples") {
  SUBCASE("all-zero weights keep the state at zero") {
    LstmLayer layer("lstm", 2, 3);
    const auto s = layer.cell(NumericArray::from_vector({0.7, -2.0}), NumericArray({3}), NumericArray({3}));
    for (double v : s.h.values()) CHECK(v == 0.0);
    for (double v : s.c.values()) CHECK(v == 0.0);
  }

  SUBCASE("scalar cell with saturated candidate") {
    LstmLayer layer("lstm", 1, 1);
    layer.bias(Gate::candidate).value[0] = 30.0;
    const auto s = layer.cell(NumericArray::from_vector({0.4}), NumericArray({1}), NumericArray({1}));
    CHECK(s.c[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(s.h[0] == doctest::Approx(0.5 * std::tanh(0.5)).epsilon(1e-12));
    CHECK(s.h[0] == doctest::Approx(0.23106).epsilon(1e-5));
  }

  SUBCASE("forget gate saturation carries the cell state") {
    LstmLayer layer = random_lstm(2, 3, 4);
    layer.bias(Gate::forget).value.fill(20.0);
    layer.bias(Gate::input).value.fill(-20.0);
    for (Gate g : {Gate::forget, Gate::input}) {
      layer.recurrent_weight(g).value.fill(0.0);
      layer.input_weight(g).value.fill(0.0);
    }
    const NumericArray c_prev = NumericArray::from_vector({0.3, -0.9, 1.7});
    const auto s = layer.cell(NumericArray::from_vector({0.5, 0.1}), NumericArray::from_vector({0.2, 0.2, -0.4}),
                              c_prev);
    for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(s.c[k] - c_prev[k]) < 1e-8);
  }

  SUBCASE("matches the reference cell and stays in range") {
    LstmLayer layer = random_lstm(3, 4, 9);
    Rng rng(10);
    const NumericArray x = random_array({3}, rng);
    const NumericArray h = random_array({4}, rng);
    const NumericArray c = random_array({4}, rng);
    const auto s = layer.cell(x, h, c);
    const auto ref = reference_cell(layer, x, h, c);
    for (std::size_t k = 0; k < 4; ++k) {
      CHECK(s.h[k] == doctest::Approx(ref.h[k]).epsilon(1e-13));
      CHECK(s.c[k] == doctest::Approx(ref.c[k]).epsilon(1e-13));
      CHECK(std::abs(s.h[k]) < 1.0);
    }
    CHECK_THROWS_AS(layer.cell(NumericArray({2}), h, c), ShapeError);
  }
}

TEST_CASE("lstm sequence") {
  LstmLayer layer = random_lstm(2, 4, 21);
  Rng rng(22);
  const NumericArray x = random_array({5, 2}, rng);
  const NumericArray hs = layer.forward(x);
  REQUIRE(hs.shape() == Shape{5, 4});

  // Unrolled reference from (0, 0).
  NumericArray h({4});
  NumericArray c({4});
  for (std::size_t t = 0; t < 5; ++t) {
    const auto s = reference_cell(layer, row(x, t), h, c);
    h = s.h;
    c = s.c;
    for (std::size_t k = 0; k < 4; ++k) CHECK(hs.at(t, k) == doctest::Approx(h[k]).epsilon(1e-12));
  }

  // d = 1 is one cell.
  const NumericArray one = layer.forward(random_array({1, 2}, rng));
  CHECK(one.shape() == Shape{1, 4});

  // Time order matters.
  NumericArray swapped = x;
  for (std::size_t j = 0; j < 2; ++j) std::swap(swapped.at(0, j), swapped.at(3, j));
  CHECK(layer.forward(swapped) != hs);

  // A batch gives the same rows as separate sequences.
  NumericArray batch({2, 5, 2});
  const NumericArray other = random_array({5, 2}, rng);
  for (std::size_t t = 0; t < 5; ++t) {
    for (std::size_t j = 0; j < 2; ++j) {
      batch.at(0, t, j) = x.at(t, j);
      batch.at(1, t, j) = other.at(t, j);
    }
  }
  const NumericArray hb = layer.forward(batch);
  const NumericArray ho = layer.forward(other);
  for (std::size_t t = 0; t < 5; ++t) {
    for (std::size_t k = 0; k < 4; ++k) {
      CHECK(hb.at(0, t, k) == doctest::Approx(hs.at(t, k)).epsilon(1e-13));
      CHECK(hb.at(1, t, k) == doctest::Approx(ho.at(t, k)).epsilon(1e-13));
    }
  }

  LstmLayer zero("lstm", 2, 4);
  const NumericArray out = zero.forward(x);
  for (double v : out.values()) CHECK(v == 0.0);
  CHECK_THROWS_AS(layer.forward(NumericArray({0, 2})), DomainError);
  CHECK_THROWS_AS(layer.forward(NumericArray({5, 3})), ShapeError);
}

TEST_CASE("lstm backward") {
  LstmLayer layer = random_lstm(2, 4, 31);
  Rng rng(32);

  SUBCASE("before forward") { CHECK_THROWS_AS(layer.backward(NumericArray({3, 4})), StateError); }

  SUBCASE("zero upstream gradient") {
    layer.forward(random_array({3, 2}, rng));
    const NumericArray dx = layer.backward(NumericArray({3, 4}));
    for (double v : dx.values()) CHECK(v == 0.0);
    for (Parameter* p : layer.parameters()) {
      for (double v : p->grad.values()) CHECK(v == 0.0);
    }
  }

  SUBCASE("matches central differences") {
    for (std::size_t d : {1u, 3u}) {
      for (Parameter* p : layer.parameters()) p->zero_grad();
      Parameter x("x", random_array({d, 2}, rng));
      const NumericArray r = random_array({d, 4}, rng);
      auto loss = [&] { return testing::dot(layer.forward(x.value), r); };
      layer.forward(x.value);
      const NumericArray dx = layer.backward(r);

      ParameterList params = layer.parameters();
      params.push_back(&x);
      const auto numeric = finite_diff_grad(loss, params);
      for (std::size_t i = 0; i + 1 < params.size(); ++i) {
        CAPTURE(params[i]->name);
        CHECK(max_relative_error(params[i]->grad.values(), numeric[i].values()) < 1e-4);
      }
      CHECK(max_relative_error(dx.values(), numeric.back().values()) < 1e-4);
    }
  }

  SUBCASE("batched gradients equal the sum over sequences") {
    const NumericArray xa = random_array({3, 2}, rng);
    const NumericArray xb = random_array({3, 2}, rng);
    const NumericArray ra = random_array({3, 4}, rng);
    const NumericArray rb = random_array({3, 4}, rng);
    layer.forward(xa);
    layer.backward(ra);
    layer.forward(xb);
    layer.backward(rb);
    std::vector<NumericArray> separate;
    for (Parameter* p : layer.parameters()) {
      separate.push_back(p->grad);
      p->zero_grad();
    }
    NumericArray xs({2, 3, 2});
    NumericArray rs({2, 3, 4});
    std::copy(xa.values().begin(), xa.values().end(), xs.values().begin());
    std::copy(xb.values().begin(), xb.values().end(), xs.values().begin() + 6);
    std::copy(ra.values().begin(), ra.values().end(), rs.values().begin());
    std::copy(rb.values().begin(), rb.values().end(), rs.values().begin() + 12);
    layer.forward(xs);
    layer.backward(rs);
    const auto params = layer.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      CHECK(max_relative_error(params[i]->grad.values(), separate[i].values()) < 1e-12);
    }
  }
}

TEST_CASE("conv1d forward examples") {
  Conv1dLayer conv("conv1", 1, 1, 3);
  conv.weight().value = NumericArray({1, 1, 3}, std::vector<double>{1, 0, -1});
  const NumericArray y = conv.forward(NumericArray({4, 1}, std::vector<double>{1, 2, 3, 4}));
  REQUIRE(y.shape() == Shape{2, 1});
  CHECK(y[0] == -2.0);
  CHECK(y[1] == -2.0);

  Conv1dLayer unit("conv1", 1, 1, 1);
  unit.weight().value[0] = 1.0;
  const NumericArray x = NumericArray({5, 1}, std::vector<double>{0.3, -1, 2, 7, 0});
  CHECK(unit.forward(x) == x);

  Conv1dLayer zero("conv1", 2, 3, 3);
  const NumericArray zeros = zero.forward(NumericArray({6, 2}, 1.0));
  for (double v : zeros.values()) CHECK(v == 0.0);
  CHECK_THROWS_AS(zero.forward(NumericArray({2, 2})), ShapeError);
  CHECK_THROWS_AS(zero.forward(NumericArray({6, 3})), ShapeError);

  // Direct summation reference for a multi-channel case.
  Rng rng(41);
  Conv1dLayer c("conv2", 3, 2, 3);
  c.weight().value = random_array({2, 3, 3}, rng);
  c.bias().value = random_array({2}, rng);
  const NumericArray in = random_array({7, 3}, rng);
  const NumericArray out = c.forward(in);
  REQUIRE(out.shape() == Shape{5, 2});
  for (std::size_t t = 0; t < 5; ++t) {
    for (std::size_t o = 0; o < 2; ++o) {
      double s = c.bias().value[o];
      for (std::size_t a = 0; a < 3; ++a) {
        for (std::size_t ch = 0; ch < 3; ++ch) s += in.at(t + a, ch) * c.weight().value.at(o, ch, a);
      }
      CHECK(out.at(t, o) == doctest::Approx(s).epsilon(1e-13));
    }
  }
}

TEST_CASE("conv1d output length law") {
  for (std::size_t k = 1; k <= 8; ++k) {
    Conv1dLayer conv("conv1", 1, 1, k);
    for (std::size_t d = k; d <= 8; ++d) {
      CHECK(conv.output_length(d) == d - k + 1);
      CHECK(conv.forward(NumericArray({d, 1})).dim(0) == d - k + 1);
    }
  }
  CHECK_THROWS_AS(Conv1dLayer("conv1", 1, 1, 0), ConfigError);
}

TEST_CASE("conv1d linearity without bias") {
  Rng rng(51);
  Conv1dLayer conv("conv1", 4, 3, 3);
  conv.weight().value = random_array({3, 4, 3}, rng);
  const NumericArray x = random_array({9, 4}, rng);
  const NumericArray z = random_array({9, 4}, rng);
  const double alpha = rng.uniform(-2, 2);
  const double beta = rng.uniform(-2, 2);
  NumericArray mix(x.shape());
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = alpha * x[i] + beta * z[i];
  const NumericArray cx = conv.forward(x);
  const NumericArray cz = conv.forward(z);
  const NumericArray cm = conv.forward(mix);
  for (std::size_t i = 0; i < cm.size(); ++i) CHECK(cm[i] == doctest::Approx(alpha * cx[i] + beta * cz[i]).epsilon(1e-12));
}

TEST_CASE("conv1d backward") {
  Rng rng(61);
  Conv1dLayer conv("conv1", 4, 3, 3);
  conv.weight().value = random_array({3, 4, 3}, rng);
  conv.bias().value = random_array({3}, rng);

  SUBCASE("before forward") { CHECK_THROWS_AS(conv.backward(NumericArray({4, 3})), StateError); }

  SUBCASE("zero upstream gradient") {
    conv.forward(random_array({6, 4}, rng));
    const NumericArray out = conv.backward(NumericArray({4, 3}));
    for (double v : out.values()) CHECK(v == 0.0);
    for (double v : conv.weight().grad.values()) CHECK(v == 0.0);
  }

  SUBCASE("identity kernel passes dy through") {
    Conv1dLayer unit("conv1", 1, 1, 1);
    unit.weight().value[0] = 1.0;
    unit.forward(random_array({5, 1}, rng));
    const NumericArray dy = random_array({5, 1}, rng);
    CHECK(unit.backward(dy) == dy);
  }

  SUBCASE("matches central differences") {
    Parameter x("x", random_array({6, 4}, rng));
    const NumericArray r = random_array({4, 3}, rng);
    auto loss = [&] { return testing::dot(conv.forward(x.value), r); };
    conv.forward(x.value);
    const NumericArray dx = conv.backward(r);
    const auto numeric = finite_diff_grad(loss, {&conv.weight(), &conv.bias(), &x});
    CHECK(max_relative_error(conv.weight().grad.values(), numeric[0].values()) < 1e-4);
    CHECK(max_relative_error(conv.bias().grad.values(), numeric[1].values()) < 1e-4);
    CHECK(max_relative_error(dx.values(), numeric[2].values()) < 1e-4);
  }

  SUBCASE("batched input") {
    Parameter x("x", random_array({3, 6, 4}, rng));
    const NumericArray r = random_array({3, 4, 3}, rng);
    auto loss = [&] { return testing::dot(conv.forward(x.value), r); };
    conv.forward(x.value);
    const NumericArray dx = conv.backward(r);
    const auto numeric = finite_diff_grad(loss, {&conv.weight(), &x});
    CHECK(max_relative_error(conv.weight().grad.values(), numeric[0].values()) < 1e-4);
    CHECK(max_relative_error(dx.values(), numeric[1].values()) < 1e-4);
  }
}
