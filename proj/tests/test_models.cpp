#include <doctest.h>

#include "rollcast/errors.hpp"
#include "rollcast/models.hpp"
#include "support.hpp"

using namespace rollcast;
using testing::random_array;

namespace {

ModelSpec tiny_spec(ModelKind kind = ModelKind::convlstmp) {
  ModelSpec s;
  s.kind = kind;
  s.lag = 5;
  s.horizon = 5;
  s.channels = 2;
  s.lstm_hidden = 4;
  s.conv_filters = {3, 4};
  s.head_units = {6, 5};
  s.seed = 3;
  return s;
}

std::vector<NumericArray> snapshot_grads(Forecaster& m) {
  std::vector<NumericArray> g;
  for (Parameter* p : m.parameters()) g.push_back(p->grad);
  return g;
}

}  // namespace

TEST_CASE("feature widths") {
  ModelSpec s;
  s.lag = s.horizon = 10;
  CHECK(s.resolved().lstm_hidden == 64);
  CHECK(s.resolved().conv_filters == std::vector<std::size_t>{32, 64});
  CHECK(s.feature_width() == 1024);
  s.lag = s.horizon = 20;
  CHECK(s.feature_width() == 2304);

  ModelSpec lstm;
  lstm.kind = ModelKind::lstm_only;
  lstm.lag = lstm.horizon = 20;
  CHECK(lstm.feature_width() == 2000);
  lstm.lstm_head_mode = LstmHeadMode::last;
  CHECK(lstm.feature_width() == 100);

  ModelSpec cnn;
  cnn.kind = ModelKind::cnn_only;
  cnn.lag = cnn.horizon = 10;
  CHECK(cnn.feature_width() == 6 * 64);
}

TEST_CASE("spec validation") {
  ModelSpec s;
  s.lag = 10;
  s.horizon = 20;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.horizon = 10;
  CHECK_NOTHROW(s.validate());
  s.lag = s.horizon = 4;
  CHECK_THROWS_AS(s.validate(), ConfigError);  // two k=3 convs need d >= 5
  s.kind = ModelKind::lstm_only;
  CHECK_NOTHROW(s.validate());
  s.channels = 0;
  CHECK_THROWS_AS(Forecaster{s}, ConfigError);
  CHECK_THROWS_AS(parse_model_kind("transformer"), ConfigError);
  CHECK(parse_model_kind("cnn_only") == ModelKind::cnn_only);

  const nlohmann::json j = tiny_spec();
  CHECK(j.get<ModelSpec>() == tiny_spec().resolved());
}

TEST_CASE("construction is seeded") {
  Forecaster a(tiny_spec());
  Forecaster b(tiny_spec());
  ModelSpec other = tiny_spec();
  other.seed = 4;
  Forecaster c(other);
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i]->value == pb[i]->value);
    if (pa[i]->value != c.parameters()[i]->value) any_diff = true;
  }
  CHECK(any_diff);

  std::size_t expected = 0;
  for (Parameter* p : a.parameters()) expected += p->value.size();
  CHECK(a.parameter_count() == expected);
  CHECK(a.parameter("fc3.bias").value.shape() == Shape{5});
  CHECK(a.parameter("conv2.weight").value.shape() == Shape{4, 3, 3});
  CHECK_THROWS_AS(a.parameter("nope"), ConfigError);
}

TEST_CASE("forward") {
  Rng rng(5);
  for (ModelKind kind : {ModelKind::convlstmp, ModelKind::lstm_only, ModelKind::cnn_only}) {
    Forecaster m(tiny_spec(kind));
    const NumericArray w = random_array({5, 2}, rng);
    const NumericArray y = m.forward(w);
    CHECK(y.shape() == Shape{5});
    CHECK(m.forward(w) == y);

    const NumericArray batch = random_array({3, 5, 2}, rng);
    const NumericArray yb = m.forward(batch);
    CHECK(yb.shape() == Shape{3, 5});
    CHECK_THROWS_AS(m.forward(random_array({6, 2}, rng)), ShapeError);

    Affine& out = m.head(2);
    out.weight().value.fill(0.0);
    out.bias().value.fill(0.0);
    const NumericArray zeros = m.forward(w);
    for (double v : zeros.values()) CHECK(v == 0.0);
  }
}

TEST_CASE("forward matches a hand-composed pipeline") {
  Forecaster m(tiny_spec());
  Rng rng(6);
  const NumericArray w = random_array({5, 2}, rng);
  const NumericArray y = m.forward(w);

  LstmLayer lstm = *m.lstm();
  Conv1dLayer c1 = m.conv(0);
  Conv1dLayer c2 = m.conv(1);
  const NumericArray seq = lstm.forward(w);
  const NumericArray conv = relu(c2.forward(relu(c1.forward(w))));
  const std::vector<NumericArray> parts = {conv, seq};
  NumericArray a = concat_flatten(parts);
  for (std::size_t i = 0; i < 3; ++i) {
    a = affine_forward(a, m.head(i).weight().value, m.head(i).bias().value);
    if (i < 2) a = relu(a);
  }
  REQUIRE(a.size() == y.size());
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(a[i]).epsilon(1e-12));
}

TEST_CASE("backward matches central differences") {
  Rng rng(7);
  for (ModelKind kind : {ModelKind::convlstmp, ModelKind::lstm_only, ModelKind::cnn_only}) {
    CAPTURE(to_string(kind));
    Forecaster m(tiny_spec(kind));
    const NumericArray x = random_array({2, 5, 2}, rng);
    const NumericArray r = random_array({2, 5}, rng);
    auto loss = [&] { return testing::dot(m.forward(x), r); };
    m.zero_grad();
    m.forward(x);
    m.backward(r);
    const ParameterList params = m.parameters();
    const auto numeric = finite_diff_grad(loss, params);
    for (std::size_t i = 0; i < params.size(); ++i) {
      CAPTURE(params[i]->name);
      CHECK(max_relative_error(params[i]->grad.values(), numeric[i].values()) < 1e-4);
    }
  }
}

TEST_CASE("backward state and zero gradient") {
  Forecaster fresh(tiny_spec());
  CHECK_THROWS_AS(fresh.backward(NumericArray({5})), StateError);

  Forecaster m(tiny_spec());
  Rng rng(8);
  m.zero_grad();
  m.forward(random_array({5, 2}, rng));
  m.backward(NumericArray({5}));
  for (Parameter* p : m.parameters()) {
    for (double v : p->grad.values()) CHECK(v == 0.0);
  }
}

TEST_CASE("branch isolation") {
  Forecaster m(tiny_spec());
  Rng rng(9);
  const NumericArray x = random_array({3, 5, 2}, rng);
  const NumericArray r = random_array({3, 5}, rng);
  const std::size_t conv_w = m.spec().conv_feature_width();

  m.zero_grad();
  m.forward(x);
  m.backward(r);
  const auto full = snapshot_grads(m);

  m.zero_grad();
  m.forward(x);
  NumericArray d_feat = m.backward_head(r);
  for (std::size_t b = 0; b < 3; ++b) {
    for (std::size_t j = 0; j < conv_w; ++j) d_feat.at(b, j) = 0.0;
  }
  m.backward_branches(d_feat);

  const auto params = m.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string& name = params[i]->name;
    CAPTURE(name);
    if (name.rfind("lstm.", 0) == 0) {
      CHECK(max_relative_error(params[i]->grad.values(), full[i].values()) < 1e-14);
    } else if (name.rfind("conv", 0) == 0) {
      for (double v : params[i]->grad.values()) CHECK(v == 0.0);
    }
  }
}

TEST_CASE("parallel branches share no weights") {
  Forecaster m(tiny_spec());
  Rng rng(10);
  const NumericArray x = random_array({2, 5, 2}, rng);
  m.forward(x);
  const NumericArray conv0 = m.conv_features();
  const NumericArray lstm0 = m.lstm_features();

  for (Parameter* p : m.conv(0).parameters()) {
    for (double& v : p->value.values()) v += 0.1;
  }
  m.forward(x);
  CHECK(m.lstm_features() == lstm0);
  CHECK(m.conv_features() != conv0);
  const NumericArray conv1 = m.conv_features();

  for (Parameter* p : m.lstm()->parameters()) {
    for (double& v : p->value.values()) v -= 0.1;
  }
  m.forward(x);
  CHECK(m.conv_features() == conv1);
  CHECK(m.lstm_features() != lstm0);
}

TEST_CASE("every hidden state reaches the head") {
  ModelSpec s = tiny_spec(ModelKind::lstm_only);
  Forecaster m(s);
  Rng rng(11);
  const NumericArray x = random_array({5, 2}, rng);
  const NumericArray y = m.forward(x);

  // Keep only h_d in the feature vector.
  NumericArray truncated = m.features().reshaped({m.spec().feature_width()});
  const std::size_t hidden = m.spec().lstm_hidden;
  for (std::size_t j = 0; j + hidden < truncated.size(); ++j) truncated[j] = 0.0;
  const NumericArray y_last = m.forward_from_features(truncated);
  CHECK(y_last != y);

  s.lstm_head_mode = LstmHeadMode::last;
  Forecaster last(s);
  CHECK(last.spec().feature_width() == hidden);
  CHECK(last.forward(x).shape() == Shape{5});
}
