#include "rollcast/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>

#include "rollcast/errors.hpp"
#include "rollcast/serialization.hpp"
#include "rollcast/svgplot.hpp"
#include "rollcast/trainer.hpp"

namespace rollcast {

AverageMode parse_average_mode(std::string_view name) {
  if (name == "per_step_mean") return AverageMode::per_step_mean;
  if (name == "pooled") return AverageMode::pooled;
  throw ConfigError("unknown average mode '" + std::string(name) + "' (expected per_step_mean or pooled)");
}

std::string_view to_string(AverageMode mode) {
  return mode == AverageMode::per_step_mean ? "per_step_mean" : "pooled";
}

void to_json(nlohmann::json& j, const EvalReport& r) {
  j = {{"schema", kReportSchema},
       {"dataset", r.dataset_label},
       {"scenario", to_string(r.scenario)},
       {"model_kind", to_string(r.model_kind)},
       {"seed", r.seed},
       {"horizon", r.horizon()},
       {"n_eval_windows", r.n_eval_windows},
       {"units", "deg"},
       {"average_mode", to_string(r.average_mode)},
       {"average_rmse", r.average_rmse},
       {"pooled_rmse", r.pooled_rmse},
       {"per_step_rmse", r.per_step_rmse}};
}

void from_json(const nlohmann::json& j, EvalReport& r) {
  try {
    const std::string schema = j.at("schema").get<std::string>();
    if (schema != kReportSchema) throw DataError("unsupported report schema '" + schema + "'");
    r.dataset_label = j.at("dataset").get<std::string>();
    r.scenario = parse_scenario(j.at("scenario").get<std::string>());
    r.model_kind = parse_model_kind(j.at("model_kind").get<std::string>());
    r.seed = j.at("seed").get<std::uint64_t>();
    r.n_eval_windows = j.at("n_eval_windows").get<std::size_t>();
    r.average_mode = parse_average_mode(j.at("average_mode").get<std::string>());
    r.average_rmse = j.at("average_rmse").get<double>();
    r.pooled_rmse = j.at("pooled_rmse").get<double>();
    r.per_step_rmse = j.at("per_step_rmse").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
}

double rmse(std::span<const double> prediction, std::span<const double> truth) {
  if (prediction.size() != truth.size() || prediction.empty()) {
    throw ShapeError(fmt::format("rmse: {} predictions vs {} truth values", prediction.size(), truth.size()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    const double e = prediction[i] - truth[i];
    sum += e * e;
  }
  return std::sqrt(sum / static_cast<double>(prediction.size()));
}

EvalReport summarize(const NumericArray& prediction_deg, const NumericArray& truth_deg, AverageMode mode) {
  if (prediction_deg.shape() != truth_deg.shape() || prediction_deg.rank() != 2) {
    throw ShapeError("summarize: prediction " + shape_to_string(prediction_deg.shape()) + " vs truth " +
                     shape_to_string(truth_deg.shape()));
  }
  const std::size_t n = prediction_deg.dim(0);
  const std::size_t p = prediction_deg.dim(1);
  if (n == 0 || p == 0) throw DomainError("summarize: empty evaluation set");

  EvalReport r;
  r.n_eval_windows = n;
  r.average_mode = mode;
  r.per_step_rmse.resize(p);
  std::vector<double> pred(n);
  std::vector<double> truth(n);
  for (std::size_t k = 0; k < p; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = prediction_deg.at(i, k);
      truth[i] = truth_deg.at(i, k);
    }
    r.per_step_rmse[k] = rmse(pred, truth);
  }
  r.pooled_rmse = rmse(prediction_deg.values(), truth_deg.values());
  const double mean = std::accumulate(r.per_step_rmse.begin(), r.per_step_rmse.end(), 0.0) / static_cast<double>(p);
  r.average_rmse = mode == AverageMode::per_step_mean ? mean : r.pooled_rmse;
  return r;
}

Evaluation evaluate(Forecaster& model, const WindowedDataset& data, const std::string& dataset_label,
                    AverageMode mode, double dt) {
  if (data.size() == 0) throw DomainError("evaluate: empty validation set");
  Evaluation ev;
  ev.prediction_deg = predict_dataset(model, data);
  ev.truth_deg = data.targets;
  for (double& v : ev.prediction_deg.values()) v = data.scaler.inverse_transform(v, 0);
  for (double& v : ev.truth_deg.values()) v = data.scaler.inverse_transform(v, 0);

  ev.report = summarize(ev.prediction_deg, ev.truth_deg, mode);
  ev.report.dataset_label = dataset_label;
  ev.report.scenario = data.scenario;
  ev.report.model_kind = model.spec().kind;
  ev.report.seed = model.spec().seed;
  ev.dt = dt;

  if (data.scenario != FeatureScenario::wave_only) {
    // Roll is channel 0 of every scenario that carries it.
    const std::size_t n = data.size();
    const std::size_t d = data.lag;
    const std::size_t c = data.channels();
    ev.input_roll_deg = NumericArray({n, d});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t t = 0; t < d; ++t) {
        ev.input_roll_deg.at(i, t) = data.scaler.inverse_transform(data.inputs[(i * d + t) * c], 0);
      }
    }
  }
  return ev;
}

void to_json(nlohmann::json& j, const Ranking& r) {
  j = nlohmann::json{{"dataset", r.dataset_label}, {"horizon", r.horizon}, {"rows", nlohmann::json::array()}};
  std::size_t rank = 1;
  for (const auto& row : r.rows) {
    j["rows"].push_back({{"rank", rank++},
                         {"model_kind", to_string(row.model_kind)},
                         {"seed", row.seed},
                         {"average_rmse", row.average_rmse},
                         {"per_step_wins", row.per_step_wins}});
  }
}

Ranking compare(std::span<const EvalReport> reports) {
  if (reports.empty()) throw DomainError("compare: no reports");
  const std::size_t p = reports.front().horizon();
  const std::string& label = reports.front().dataset_label;
  for (const auto& r : reports) {
    if (r.horizon() != p) throw DomainError(fmt::format("compare: mixed horizons {} and {}", p, r.horizon()));
    if (r.dataset_label != label) {
      throw DomainError("compare: mixed datasets '" + label + "' and '" + r.dataset_label + "'");
    }
  }

  std::vector<std::size_t> order(reports.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const EvalReport& ra = reports[a];
    const EvalReport& rb = reports[b];
    if (ra.average_rmse != rb.average_rmse) return ra.average_rmse < rb.average_rmse;
    const auto na = to_string(ra.model_kind);
    const auto nb = to_string(rb.model_kind);
    if (na != nb) return na < nb;
    return ra.seed < rb.seed;
  });

  Ranking ranking;
  ranking.dataset_label = label;
  ranking.horizon = p;
  for (std::size_t idx : order) {
    ranking.rows.push_back({reports[idx].model_kind, reports[idx].seed, reports[idx].average_rmse, 0});
  }
  for (std::size_t k = 0; k < p; ++k) {
    std::size_t best = 0;
    for (std::size_t r = 1; r < order.size(); ++r) {
      if (reports[order[r]].per_step_rmse[k] < reports[order[best]].per_step_rmse[k]) best = r;
    }
    ++ranking.rows[best].per_step_wins;
  }
  return ranking;
}

std::vector<std::size_t> evenly_spaced(std::size_t n, std::size_t count) {
  std::vector<std::size_t> out;
  if (n == 0 || count == 0) return out;
  if (count == 1) return {0};
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t idx = (i * (n - 1) + (count - 1) / 2) / (count - 1);
    if (out.empty() || out.back() != idx) out.push_back(idx);
  }
  return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os << text;
  if (!os) throw DataError("write failed for " + path.string());
}

namespace {

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::vector<double> step_axis(std::size_t p) {
  std::vector<double> x(p);
  std::iota(x.begin(), x.end(), 1.0);
  return x;
}

std::string cell_title(const EvalReport& r) {
  return fmt::format("{} / {} / {} / {}-step", r.dataset_label, to_string(r.model_kind), to_string(r.scenario),
                     r.horizon());
}

}  // namespace

void emit_outputs(const Evaluation& evaluation, const std::filesystem::path& out_dir) {
  ensure_dir(out_dir);
  const EvalReport& r = evaluation.report;
  write_text_file(out_dir / "report.json", nlohmann::json(r).dump(2) + "\n");

  std::string csv = "step,rmse_deg\n";
  for (std::size_t k = 0; k < r.horizon(); ++k) csv += fmt::format("{},{}\n", k + 1, r.per_step_rmse[k]);
  write_text_file(out_dir / "per_step_rmse.csv", csv);

  LinePanel curve{"RMSE per prediction step", "step", "RMSE (deg)", {}};
  curve.series.push_back({std::string(to_string(r.model_kind)), step_axis(r.horizon()), r.per_step_rmse, false, true});
  write_text_file(out_dir / "per_step_rmse.svg", render_line_panels(cell_title(r), {curve}));

  const std::size_t n = evaluation.prediction_deg.dim(0);
  const std::size_t p = evaluation.prediction_deg.dim(1);
  const double dt = evaluation.dt;
  std::vector<LinePanel> panels;
  for (std::size_t w : evenly_spaced(n, 4)) {
    LinePanel panel{fmt::format("validation window {}", w), "time relative to forecast origin (s)", "roll (deg)", {}};
    if (!evaluation.input_roll_deg.empty()) {
      const std::size_t d = evaluation.input_roll_deg.dim(1);
      LineSeries past{"observed input", {}, {}, false, false};
      for (std::size_t t = 0; t < d; ++t) {
        past.x.push_back(-static_cast<double>(d - 1 - t) * dt);
        past.y.push_back(evaluation.input_roll_deg.at(w, t));
      }
      panel.series.push_back(std::move(past));
    }
    LineSeries truth{"true", {}, {}, false, true};
    LineSeries pred{"predicted", {}, {}, true, true};
    for (std::size_t k = 0; k < p; ++k) {
      const double t = static_cast<double>(k + 1) * dt;
      truth.x.push_back(t);
      truth.y.push_back(evaluation.truth_deg.at(w, k));
      pred.x.push_back(t);
      pred.y.push_back(evaluation.prediction_deg.at(w, k));
    }
    panel.series.push_back(std::move(truth));
    panel.series.push_back(std::move(pred));
    panels.push_back(std::move(panel));
  }
  write_text_file(out_dir / "traces.svg", render_line_panels(cell_title(r), panels, 2));
}

void emit_comparison(std::span<const EvalReport> reports, const std::filesystem::path& out_dir,
                     const std::string& title) {
  const Ranking ranking = compare(reports);
  ensure_dir(out_dir);
  write_text_file(out_dir / "ranking.json", nlohmann::json(ranking).dump(2) + "\n");

  std::string csv = "rank,model_kind,seed,average_rmse_deg,per_step_wins\n";
  for (std::size_t i = 0; i < ranking.rows.size(); ++i) {
    const auto& row = ranking.rows[i];
    csv += fmt::format("{},{},{},{},{}\n", i + 1, to_string(row.model_kind), row.seed, row.average_rmse,
                       row.per_step_wins);
  }
  write_text_file(out_dir / "ranking.csv", csv);

  LinePanel curve{"RMSE per prediction step", "step", "RMSE (deg)", {}};
  for (const auto& r : reports) {
    curve.series.push_back({std::string(to_string(r.model_kind)) + (reports.size() > 3 ? fmt::format(" s{}", r.seed) : ""),
                            step_axis(r.horizon()), r.per_step_rmse, false, true});
  }
  write_text_file(out_dir / "per_step_rmse.svg", render_line_panels(title, {curve}));
}

}  // namespace rollcast
