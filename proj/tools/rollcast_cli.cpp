// rollcast: simulate roll records, train forecasters, run the study grids.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "rollcast/errors.hpp"
#include "rollcast/experiment.hpp"
#include "rollcast/serialization.hpp"

namespace fs = std::filesystem;
using namespace rollcast;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kDivergence = 4 };

struct GlobalOptions {
  std::string config_path;
  std::string output_dir;
  std::size_t jobs = 1;
  std::vector<std::uint64_t> seeds;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> learning_rate;
  std::optional<std::size_t> patience;
  std::optional<std::string> optimizer;
  std::optional<std::string> average_mode;
  bool quiet = false;
};

ExperimentConfig resolve_config(const GlobalOptions& g) {
  ExperimentConfig c = g.config_path.empty() ? default_experiment_config() : load_experiment_config(g.config_path);
  if (!g.output_dir.empty()) c.output_dir = g.output_dir;
  if (!g.seeds.empty()) c.seeds = g.seeds;
  if (g.epochs) c.train.epochs = *g.epochs;
  if (g.batch_size) c.train.batch_size = *g.batch_size;
  if (g.learning_rate) c.train.learning_rate = *g.learning_rate;
  if (g.patience) c.train.patience = *g.patience;
  if (g.optimizer) c.train.optimizer = parse_optimizer(*g.optimizer);
  if (g.average_mode) c.average_mode = parse_average_mode(*g.average_mode);
  c.validate();
  return c;
}

void log(const GlobalOptions& g, const std::string& line) {
  if (!g.quiet) std::cerr << line << '\n';
}

std::map<std::string, MotionRecord> load_records(const ExperimentConfig& c, const std::vector<CellSpec>& cells) {
  std::map<std::string, MotionRecord> records;
  for (const auto& cell : cells) {
    if (!records.contains(cell.dataset)) records.emplace(cell.dataset, load_dataset_record(c, cell.dataset));
  }
  return records;
}

CellProgress progress_logger(const GlobalOptions& g) {
  return [&g](const CellResult& r, std::size_t done, std::size_t total) {
    log(g, fmt::format("[{}/{}] {} {} p={} {} seed {}: average RMSE {:.4f} deg ({} epochs, best {})", done, total,
                       r.cell.dataset, to_string(r.cell.scenario), r.cell.horizon, to_string(r.cell.model),
                       r.cell.seed, r.report.average_rmse, r.history.epochs_run(), r.history.best_epoch));
  };
}

// ---------------------------------------------------------------------------

struct SimulateOptions {
  std::optional<double> heading;
  std::optional<std::uint64_t> seed;
  std::string label;
  std::string out;
};

int cmd_simulate(const GlobalOptions& g, const SimulateOptions& o) {
  ExperimentConfig c = resolve_config(g);
  if (o.seed) c.data_seed = *o.seed;

  std::vector<std::pair<DatasetSpec, fs::path>> runs;
  if (o.heading) {
    DatasetSpec ds{o.label, *o.heading};
    if (ds.label.empty()) {
      for (const auto& d : c.datasets) {
        if (d.heading == *o.heading) ds.label = d.label;
      }
      if (ds.label.empty()) ds.label = fmt::format("heading{:g}", *o.heading);
    }
    runs.emplace_back(ds, o.out.empty() ? record_path(c, ds.label) : fs::path(o.out));
  } else {
    if (!o.out.empty()) throw ConfigError("--out names a single CSV file and needs --heading");
    for (const auto& d : c.datasets) runs.emplace_back(d, record_path(c, d.label));
  }

  for (const auto& [ds, path] : runs) {
    const MotionRecord rec = simulate_dataset(c, ds);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    save_motion_record(path, rec);
    double peak = 0.0;
    for (double v : rec.roll) peak = std::max(peak, std::abs(v));
    log(g, fmt::format("{} (heading {:g} deg, seed {}): {} samples, max |roll| {:.2f} deg -> {}", ds.label, ds.heading,
                       c.data_seed, rec.size(), peak, path.string()));
  }
  return kOk;
}

// ---------------------------------------------------------------------------

struct GridOptions {
  std::vector<std::string> datasets;
  std::vector<std::size_t> horizons;
};

int cmd_ablate(const GlobalOptions& g, const GridOptions& o) {
  ExperimentConfig c = resolve_config(g);
  if (!o.datasets.empty()) c.ablation.datasets = o.datasets;
  if (!o.horizons.empty()) c.ablation.horizons = o.horizons;
  c.validate();

  const auto cells = ablation_cells(c);
  const auto records = load_records(c, cells);
  const fs::path out = c.output_dir / "ablation";
  log(g, fmt::format("ablation: {} cells, {} job(s) -> {}", cells.size(), g.jobs, out.string()));
  const auto results = run_cells(c, records, cells, g.jobs, out / "cells", progress_logger(g));
  write_ablation_outputs(results, out);

  const auto groups = summarize_groups(results);
  std::cout << fmt::format("{:<12} {:>4} {:>14} {:>14} {:>14}\n", "dataset", "p", "roll_only", "wave_only",
                           "roll_and_wave");
  for (const auto& ds : c.ablation.datasets) {
    for (std::size_t p : c.ablation.horizons) {
      std::cout << fmt::format("{:<12} {:>4}", ds, p);
      for (auto sc : {FeatureScenario::roll_only, FeatureScenario::wave_only, FeatureScenario::roll_and_wave}) {
        try {
          std::cout << fmt::format(" {:>14.5f}", find_group(groups, ds, sc, p, c.ablation.model).median_average_rmse);
        } catch (const DomainError&) {
          std::cout << fmt::format(" {:>14}", "-");
        }
      }
      std::cout << '\n';
    }
  }
  return kOk;
}

int cmd_compare(const GlobalOptions& g, const GridOptions& o) {
  ExperimentConfig c = resolve_config(g);
  if (!o.datasets.empty()) c.comparison.datasets = o.datasets;
  if (!o.horizons.empty()) {
    if (o.horizons.size() != 1) throw ConfigError("compare takes a single --horizon");
    c.comparison.horizon = o.horizons.front();
  }
  c.validate();

  const auto cells = comparison_cells(c);
  const auto records = load_records(c, cells);
  const fs::path out = c.output_dir / "comparison";
  log(g, fmt::format("comparison: {} cells, {} job(s) -> {}", cells.size(), g.jobs, out.string()));
  const auto results = run_cells(c, records, cells, g.jobs, out / "cells", progress_logger(g));
  write_comparison_outputs(results, out);

  const auto groups = summarize_groups(results);
  for (const auto& ds : c.comparison.datasets) {
    std::vector<EvalReport> medians;
    for (const auto& grp : groups) {
      if (grp.dataset != ds) continue;
      EvalReport r;
      r.dataset_label = ds;
      r.model_kind = grp.model;
      r.average_rmse = grp.median_average_rmse;
      r.per_step_rmse = grp.median_per_step_rmse;
      medians.push_back(std::move(r));
    }
    const Ranking ranking = compare(medians);
    std::cout << fmt::format("{} ({}-step, median over {} seeds)\n", ds, c.comparison.horizon, c.seeds.size());
    for (std::size_t i = 0; i < ranking.rows.size(); ++i) {
      const auto& row = ranking.rows[i];
      std::cout << fmt::format("  {}. {:<10} {:.5f} deg  ({} step wins)\n", i + 1, to_string(row.model_kind),
                               row.average_rmse, row.per_step_wins);
    }
  }
  return kOk;
}

// ---------------------------------------------------------------------------

struct CellOptions {
  std::string dataset;
  std::string record;
  std::string model = "convlstmp";
  std::string scenario;
  std::optional<std::size_t> horizon;
  std::uint64_t seed = 1;
  std::string out;
};

MotionRecord cell_record(const ExperimentConfig& c, const CellOptions& o, std::string& label) {
  if (!o.record.empty()) {
    MotionRecord rec = load_motion_record(o.record);
    label = o.dataset.empty() ? (rec.label.empty() ? fs::path(o.record).stem().string() : rec.label) : o.dataset;
    return rec;
  }
  label = o.dataset.empty() ? c.datasets.front().label : o.dataset;
  c.dataset(label);
  return load_dataset_record(c, label);
}

int cmd_train(const GlobalOptions& g, const CellOptions& o) {
  const ExperimentConfig c = resolve_config(g);
  std::string label;
  const MotionRecord rec = cell_record(c, o, label);
  CellSpec cell;
  cell.dataset = label;
  cell.model = parse_model_kind(o.model);
  cell.scenario = o.scenario.empty() ? c.pipeline.scenario : parse_scenario(o.scenario);
  cell.horizon = o.horizon.value_or(c.pipeline.horizon);
  cell.seed = o.seed;
  const fs::path out = o.out.empty() ? c.output_dir / "train" / cell.id() : fs::path(o.out);

  log(g, fmt::format("training {} -> {}", cell.id(), out.string()));
  const CellResult r = run_cell(c, rec, cell, out, true);
  std::cout << fmt::format("{}: {} epochs (best {}), best val MSE {:.6g}, average RMSE {:.5f} deg\n", cell.id(),
                           r.history.epochs_run(), r.history.best_epoch, r.history.best_val_mse(),
                           r.report.average_rmse);
  return kOk;
}

struct LoadedCheckpoint {
  Forecaster model;
  PipelineConfig pipeline;
  MinMaxScaler scaler;
  std::string dataset;
};

LoadedCheckpoint open_checkpoint(const std::string& dir) {
  Checkpoint ck = load_checkpoint(dir);
  PipelineConfig pc;
  MinMaxScaler scaler;
  try {
    pc = ck.manifest.at("pipeline").get<PipelineConfig>();
    scaler = ck.manifest.at("scaler").get<MinMaxScaler>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("checkpoint " + dir + " lacks pipeline metadata: " + e.what());
  }
  if (pc.lag != ck.model.spec().lag || pc.horizon != ck.model.spec().horizon ||
      channel_count(pc.scenario) != ck.model.spec().channels) {
    throw CheckpointError("checkpoint " + dir + ": pipeline metadata disagrees with the model spec");
  }
  return {std::move(ck.model), pc, scaler, ck.manifest.value("dataset", std::string())};
}

struct EvaluateOptions {
  std::string checkpoint;
  std::string dataset;
  std::string record;
  std::string out;
  bool all_windows = false;
};

int cmd_evaluate(const GlobalOptions& g, const EvaluateOptions& o) {
  const ExperimentConfig c = resolve_config(g);
  LoadedCheckpoint ck = open_checkpoint(o.checkpoint);
  MotionRecord rec;
  std::string label;
  if (!o.record.empty()) {
    rec = load_motion_record(o.record);
    label = rec.label.empty() ? fs::path(o.record).stem().string() : rec.label;
  } else {
    label = o.dataset.empty() ? ck.dataset : o.dataset;
    if (label.empty()) throw ConfigError("evaluate needs --dataset or --record");
    rec = load_dataset_record(c, label);
  }
  const MotionRecord resampled = resample(rec, ck.pipeline.target_dt);
  WindowedDataset all =
      make_windows(resampled, ck.pipeline.lag, ck.pipeline.horizon, ck.pipeline.scenario, ck.scaler);
  WindowedDataset eval_set = o.all_windows ? std::move(all) : split(all, ck.pipeline.ratio).second;
  const Evaluation ev = evaluate(ck.model, eval_set, label, c.average_mode, ck.pipeline.target_dt);
  const fs::path out = o.out.empty() ? fs::path(o.checkpoint).parent_path() / "evaluation" : fs::path(o.out);
  emit_outputs(ev, out);
  std::cout << fmt::format("{}: {} windows, average RMSE {:.5f} deg -> {}\n", label, ev.report.n_eval_windows,
                           ev.report.average_rmse, out.string());
  return kOk;
}

struct PredictOptions {
  std::string checkpoint;
  std::string window;
  std::string out;
};

int cmd_predict(const GlobalOptions&, const PredictOptions& o) {
  LoadedCheckpoint ck = open_checkpoint(o.checkpoint);
  std::ifstream is(o.window);
  if (!is) throw DataError("cannot open window file " + o.window);
  MotionRecord rec = read_motion_csv(is, o.window);
  if (rec.size() > 1) {
    try {
      rec = resample(rec, ck.pipeline.target_dt);
    } catch (const ConfigError& e) {
      throw DataError(o.window + ": " + e.what());
    }
  }
  const std::size_t d = ck.pipeline.lag;
  const std::size_t p = ck.pipeline.horizon;
  if (rec.size() < d) {
    throw DataError(fmt::format("{}: window has {} samples at dt={}, the model needs {}", o.window, rec.size(),
                                ck.pipeline.target_dt, d));
  }

  std::vector<double> table = record_channels(rec);
  ck.scaler.transform_inplace(table);
  const auto channels = scenario_channels(ck.pipeline.scenario);
  NumericArray input({d, channels.size()});
  const std::size_t first = rec.size() - d;
  for (std::size_t t = 0; t < d; ++t) {
    for (std::size_t k = 0; k < channels.size(); ++k) input.at(t, k) = table[(first + t) * 4 + channels[k]];
  }
  const NumericArray pred = ck.model.forward(input);

  std::ostringstream csv;
  csv << "step,t,roll_pred_deg\n";
  const double t_last = rec.t.back();
  for (std::size_t k = 0; k < p; ++k) {
    csv << fmt::format("{},{},{}\n", k + 1, t_last + static_cast<double>(k + 1) * ck.pipeline.target_dt,
                       ck.scaler.inverse_transform(pred[k], 0));
  }
  if (o.out.empty()) {
    std::cout << csv.str();
  } else {
    write_text_file(o.out, csv.str());
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ship roll forecasting: surrogate data, ConvLSTMPNet and baselines, study grids"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", "rollcast 1.0.0");

  GlobalOptions g;
  app.add_option("-c,--config", g.config_path, "Experiment config (JSON); built-in defaults when omitted")
      ->check(CLI::ExistingFile);
  app.add_option("-o,--output-dir", g.output_dir, "Override the config output_dir");
  app.add_option("-j,--jobs", g.jobs, "Concurrent grid cells")->check(CLI::PositiveNumber);
  app.add_option("--seeds", g.seeds, "Override the seed list, e.g. --seeds 1,2,3")->delimiter(',');
  app.add_option("--epochs", g.epochs, "Override train.epochs")->check(CLI::PositiveNumber);
  app.add_option("--batch-size", g.batch_size, "Override train.batch_size")->check(CLI::PositiveNumber);
  app.add_option("--learning-rate", g.learning_rate, "Override train.learning_rate");
  app.add_option("--patience", g.patience, "Override train.patience (0 disables early stopping)");
  app.add_option("--optimizer", g.optimizer, "Override train.optimizer")->check(CLI::IsMember({"adam", "sgd"}));
  app.add_option("--average-mode", g.average_mode, "per_step_mean (default) or pooled")
      ->check(CLI::IsMember({"per_step_mean", "pooled"}));
  app.add_flag("-q,--quiet", g.quiet, "Suppress progress messages");

  SimulateOptions sim;
  auto* simulate = app.add_subcommand("simulate", "Generate motion records (all configured datasets by default)");
  simulate->add_option("--heading", sim.heading, "Single run at this heading (deg)");
  simulate->add_option("--seed", sim.seed, "Override data_seed");
  simulate->add_option("--label", sim.label, "Label for a single --heading run");
  simulate->add_option("--out", sim.out, "CSV path for a single --heading run");

  GridOptions abl;
  auto* ablate = app.add_subcommand("ablate", "Feature-scenario ablation grid with the LSTM learner");
  ablate->add_option("--datasets", abl.datasets, "Dataset labels (default: config ablation.datasets)")->delimiter(',');
  ablate->add_option("--horizons", abl.horizons, "Horizons d = p (default: config ablation.horizons)")->delimiter(',');

  GridOptions cmp;
  auto* compare_cmd = app.add_subcommand("compare", "ConvLSTMPNet vs LSTM vs CNN on the configured datasets");
  compare_cmd->add_option("--datasets", cmp.datasets, "Dataset labels (default: config comparison.datasets)")
      ->delimiter(',');
  compare_cmd->add_option("--horizon", cmp.horizons, "Horizon d = p (default: config comparison.horizon)")
      ->expected(1);

  CellOptions cell;
  auto* train_cmd = app.add_subcommand("train", "Train one model and save a checkpoint");
  train_cmd->add_option("--dataset", cell.dataset, "Dataset label (record from `simulate`)");
  train_cmd->add_option("--record", cell.record, "Motion record CSV instead of a dataset label")
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--model", cell.model, "convlstmp, lstm_only or cnn_only")
      ->check(CLI::IsMember({"convlstmp", "lstm_only", "cnn_only", "lstm", "cnn"}));
  train_cmd->add_option("--scenario", cell.scenario, "roll_only, wave_only or roll_and_wave")
      ->check(CLI::IsMember({"roll_only", "wave_only", "roll_and_wave"}));
  train_cmd->add_option("--horizon", cell.horizon, "Horizon d = p")->check(CLI::PositiveNumber);
  train_cmd->add_option("--seed", cell.seed, "Model and shuffle seed");
  train_cmd->add_option("--out", cell.out, "Run directory");

  EvaluateOptions ev;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score a checkpoint on a record");
  evaluate_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  evaluate_cmd->add_option("--dataset", ev.dataset, "Dataset label (default: the training dataset)");
  evaluate_cmd->add_option("--record", ev.record, "Motion record CSV")->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--out", ev.out, "Output directory");
  evaluate_cmd->add_flag("--all-windows", ev.all_windows, "Score every window, not only the validation split");

  PredictOptions pr;
  auto* predict_cmd = app.add_subcommand("predict", "Forecast p steps after a window of observations");
  predict_cmd->add_option("--checkpoint", pr.checkpoint, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  predict_cmd->add_option("--window", pr.window, "CSV with header t,roll_deg,wave1,wave2,wave3")->required();
  predict_cmd->add_option("--out", pr.out, "Output CSV (stdout when omitted)");

  auto* config_cmd = app.add_subcommand("config", "Print the effective config (defaults, file and flag overrides) as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*config_cmd) {
      std::cout << nlohmann::json(resolve_config(g)).dump(2) << '\n';
      return kOk;
    }
    if (*simulate) return cmd_simulate(g, sim);
    if (*ablate) return cmd_ablate(g, abl);
    if (*compare_cmd) return cmd_compare(g, cmp);
    if (*train_cmd) return cmd_train(g, cell);
    if (*evaluate_cmd) return cmd_evaluate(g, ev);
    if (*predict_cmd) return cmd_predict(g, pr);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const DivergenceError& e) {
    std::cerr << "numeric divergence: " << e.what() << '\n';
    return kDivergence;
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
