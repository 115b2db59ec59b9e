#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "rollcast/errors.hpp"
#include "rollcast/evaluator.hpp"
#include "rollcast/svgplot.hpp"
#include "rollcast/trainer.hpp"
#include "support.hpp"

using namespace rollcast;
using testing::random_array;

namespace {

EvalReport report(ModelKind kind, std::uint64_t seed, std::vector<double> per_step, std::string label = "dataset#1") {
  EvalReport r;
  r.model_kind = kind;
  r.seed = seed;
  r.per_step_rmse = std::move(per_step);
  r.average_rmse = std::accumulate(r.per_step_rmse.begin(), r.per_step_rmse.end(), 0.0) /
                   static_cast<double>(r.per_step_rmse.size());
  r.dataset_label = std::move(label);
  return r;
}

MotionRecord record(double roll_scale) {
  MotionRecord r;
  r.dt = 0.1;
  for (std::size_t i = 0; i < 240; ++i) {
    const double t = 0.1 * static_cast<double>(i);
    r.t.push_back(t);
    r.roll.push_back(roll_scale * (6.0 * std::sin(3.1 * t) + 1.5 * std::cos(0.8 * t)));
    for (std::size_t j = 0; j < 3; ++j) r.wave.push_back(0.04 * std::sin(3.1 * t + 0.3 * static_cast<double>(j)));
  }
  return r;
}

ModelSpec small_spec() {
  ModelSpec s;
  s.lag = s.horizon = 10;
  s.lstm_hidden = 6;
  s.conv_filters = {4, 4};
  s.head_units = {12, 8};
  s.seed = 9;
  return s;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void check_xml(const std::filesystem::path& p) {
  boost::property_tree::ptree tree;
  CHECK_NOTHROW(boost::property_tree::read_xml(p.string(), tree));
  CHECK(tree.count("svg") == 1);
}

}  // namespace

TEST_CASE("rmse examples") {
  const std::vector<double> a = {0.5, -2.0, 7.0};
  CHECK(rmse(a, a) == 0.0);
  CHECK(rmse(std::vector<double>{1, 1}, std::vector<double>{0, 0}) == 1.0);
  CHECK(rmse(std::vector<double>{1, 2, 3}, std::vector<double>{2, 2, 2}) == doctest::Approx(std::sqrt(2.0 / 3.0)));
  CHECK(rmse(std::vector<double>{1, 2, 3}, std::vector<double>{2, 2, 2}) == doctest::Approx(0.816497).epsilon(1e-6));
  CHECK_THROWS_AS(rmse(std::vector<double>{1, 2}, std::vector<double>{1}), ShapeError);
  CHECK_THROWS_AS(rmse(std::vector<double>{}, std::vector<double>{}), ShapeError);
}

TEST_CASE("summaries") {
  Rng rng(2);
  const NumericArray truth = random_array({30, 6}, rng, -20, 20);
  const EvalReport perfect = summarize(truth, truth);
  for (double v : perfect.per_step_rmse) CHECK(v == 0.0);
  CHECK(perfect.average_rmse == 0.0);

  const NumericArray pred = random_array({30, 6}, rng, -20, 20);
  const EvalReport r = summarize(pred, truth);
  CHECK(r.horizon() == 6);
  CHECK(r.n_eval_windows == 30);
  const double mean = std::accumulate(r.per_step_rmse.begin(), r.per_step_rmse.end(), 0.0) / 6.0;
  CHECK(std::abs(r.average_rmse - mean) < 1e-12);
  for (double v : r.per_step_rmse) CHECK(v >= 0.0);

  std::vector<double> col_p(30);
  std::vector<double> col_t(30);
  for (std::size_t i = 0; i < 30; ++i) {
    col_p[i] = pred.at(i, 3);
    col_t[i] = truth.at(i, 3);
  }
  CHECK(r.per_step_rmse[3] == rmse(col_p, col_t));

  const EvalReport pooled = summarize(pred, truth, AverageMode::pooled);
  CHECK(pooled.average_rmse == rmse(pred.values(), truth.values()));
  CHECK(pooled.average_rmse == r.pooled_rmse);
  CHECK(pooled.per_step_rmse == r.per_step_rmse);

  const EvalReport steps = report(ModelKind::cnn_only, 1, {1.0, 2.0, 3.0});
  CHECK(steps.average_rmse == 2.0);

  CHECK_THROWS_AS(summarize(NumericArray({3, 2}), NumericArray({3, 3})), ShapeError);
  CHECK_THROWS_AS(parse_average_mode("median"), ConfigError);
}

TEST_CASE("report json round trip") {
  Rng rng(3);
  EvalReport r = summarize(random_array({12, 10}, rng), random_array({12, 10}, rng));
  r.dataset_label = "dataset#2";
  r.scenario = FeatureScenario::wave_only;
  r.model_kind = ModelKind::lstm_only;
  r.seed = 4;
  const nlohmann::json j = r;
  CHECK(j.at("schema") == kReportSchema);
  CHECK(nlohmann::json::parse(j.dump()).get<EvalReport>() == r);

  nlohmann::json bad = j;
  bad["schema"] = "other/9";
  CHECK_THROWS_AS(bad.get<EvalReport>(), DataError);
  bad = j;
  bad.erase("per_step_rmse");
  CHECK_THROWS_AS(bad.get<EvalReport>(), DataError);
}

TEST_CASE("evaluate works in degrees") {
  PipelineConfig cfg;
  const PreparedData base = prepare_datasets(record(1.0), cfg);
  const PreparedData scaled = prepare_datasets(record(2.0), cfg);
  Forecaster model(small_spec());

  const Evaluation a = evaluate(model, base.validation, "dataset#1");
  const Evaluation b = evaluate(model, scaled.validation, "dataset#1");
  CHECK(a.report.n_eval_windows == base.validation.size());
  CHECK(a.report.dataset_label == "dataset#1");
  CHECK(a.report.seed == 9);
  CHECK(a.report.model_kind == ModelKind::convlstmp);
  for (std::size_t k = 0; k < 10; ++k) {
    CHECK(b.report.per_step_rmse[k] == doctest::Approx(2.0 * a.report.per_step_rmse[k]).epsilon(1e-12));
  }
  CHECK(b.report.average_rmse == doctest::Approx(2.0 * a.report.average_rmse).epsilon(1e-12));

  // Truth in degrees equals the raw record slice.
  const MotionRecord raw = record(1.0);
  const std::size_t j0 = base.validation.first_window;
  CHECK(a.truth_deg.at(0, 0) == doctest::Approx(raw.roll[j0 + 10]).epsilon(1e-12));
  CHECK(a.input_roll_deg.at(0, 9) == doctest::Approx(raw.roll[j0 + 9]).epsilon(1e-12));

  CHECK_THROWS_AS(evaluate(model, base.validation.slice(0, 0), "x"), DomainError);
}

TEST_CASE("compare") {
  const EvalReport conv = report(ModelKind::convlstmp, 1, {0.5, 1.0, 1.5});
  const EvalReport lstm = report(ModelKind::lstm_only, 1, {0.4, 1.4, 1.9});
  const EvalReport cnn = report(ModelKind::cnn_only, 1, {0.6, 0.9, 2.4});
  const std::vector<EvalReport> all = {cnn, lstm, conv};
  const Ranking r = compare(all);
  REQUIRE(r.rows.size() == 3);
  CHECK(r.rows[0].model_kind == ModelKind::convlstmp);
  CHECK(r.rows[1].model_kind == ModelKind::lstm_only);
  CHECK(r.rows[2].model_kind == ModelKind::cnn_only);
  CHECK(r.rows[0].per_step_wins == 1);  // step 3
  CHECK(r.rows[1].per_step_wins == 1);  // step 1
  CHECK(r.rows[2].per_step_wins == 1);  // step 2
  CHECK(r.horizon == 3);

  const std::vector<EvalReport> single = {lstm};
  const Ranking one = compare(single);
  CHECK(one.rows.size() == 1);
  CHECK(one.rows[0].average_rmse == lstm.average_rmse);
  CHECK(one.rows[0].per_step_wins == 3);

  // Equal averages order by kind name, then seed.
  const std::vector<EvalReport> tied = {report(ModelKind::lstm_only, 2, {1.0, 1.0}),
                                        report(ModelKind::lstm_only, 1, {1.0, 1.0}),
                                        report(ModelKind::cnn_only, 5, {1.0, 1.0})};
  const Ranking t = compare(tied);
  CHECK(t.rows[0].model_kind == ModelKind::cnn_only);
  CHECK(t.rows[1].seed == 1);
  CHECK(t.rows[2].seed == 2);
  CHECK(t.rows[0].per_step_wins == 2);

  const std::vector<EvalReport> mixed = {conv, report(ModelKind::cnn_only, 1, {1.0, 2.0})};
  CHECK_THROWS_AS(compare(mixed), DomainError);
  const std::vector<EvalReport> datasets = {conv, report(ModelKind::cnn_only, 1, {1.0, 2.0, 3.0}, "dataset#2")};
  CHECK_THROWS_AS(compare(datasets), DomainError);
  CHECK_THROWS_AS(compare(std::vector<EvalReport>{}), DomainError);
}

TEST_CASE("output files") {
  PipelineConfig cfg;
  const PreparedData data = prepare_datasets(record(1.0), cfg);
  Forecaster model(small_spec());
  const Evaluation ev = evaluate(model, data.validation, "dataset#3 <beam>");
  testing::TempDir dir("eval");
  emit_outputs(ev, dir / "out");

  const std::string csv = slurp(dir / "out" / "per_step_rmse.csv");
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "step,rmse_deg");
  std::size_t rows = 0;
  while (std::getline(lines, line)) {
    ++rows;
    CHECK(line.rfind(std::to_string(rows) + ",", 0) == 0);
    CHECK(std::stod(line.substr(line.find(',') + 1)) == ev.report.per_step_rmse[rows - 1]);
  }
  CHECK(rows == 10);

  std::ifstream js(dir / "out" / "report.json");
  CHECK(nlohmann::json::parse(js).get<EvalReport>() == ev.report);

  check_xml(dir / "out" / "per_step_rmse.svg");
  check_xml(dir / "out" / "traces.svg");
  CHECK(slurp(dir / "out" / "traces.svg").find("&lt;beam&gt;") != std::string::npos);

  const std::vector<EvalReport> reports = {report(ModelKind::convlstmp, 1, {0.5, 1.0}),
                                           report(ModelKind::cnn_only, 1, {0.7, 1.1})};
  emit_comparison(reports, dir / "cmp", "dataset#1 & co");
  check_xml(dir / "cmp" / "per_step_rmse.svg");
  CHECK(slurp(dir / "cmp" / "ranking.csv") ==
        "rank,model_kind,seed,average_rmse_deg,per_step_wins\n1,convlstmp,1,0.75,2\n2,cnn_only,1,0.9,0\n");
  std::ifstream rj(dir / "cmp" / "ranking.json");
  CHECK(nlohmann::json::parse(rj).at("rows").size() == 2);
}

TEST_CASE("svg helpers") {
  CHECK(xml_escape("a<b & \"c\"") == "a&lt;b &amp; &quot;c&quot;");
  CHECK(evenly_spaced(157, 4) == std::vector<std::size_t>{0, 52, 104, 156});
  CHECK(evenly_spaced(2, 4) == std::vector<std::size_t>{0, 1});
  CHECK(evenly_spaced(0, 4).empty());

  LinePanel panel{"flat", "x", "y", {{"const", {0, 1, 2}, {1, 1, 1}, false, true}}};
  const std::string svg = render_line_panels("t", {panel, panel}, 2);
  std::istringstream is(svg);
  boost::property_tree::ptree tree;
  CHECK_NOTHROW(boost::property_tree::read_xml(is, tree));
}
