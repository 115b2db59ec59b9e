#include "rollcast/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include <fmt/format.h>

#include "rollcast/errors.hpp"
#include "rollcast/serialization.hpp"

namespace rollcast {

using nlohmann::json;

ModelSpec ArchitectureConfig::spec_for(ModelKind kind, std::size_t horizon, std::size_t channels,
                                       std::uint64_t seed) const {
  ModelSpec s;
  s.kind = kind;
  s.lag = horizon;
  s.horizon = horizon;
  s.channels = channels;
  s.seed = seed;
  s.kernel_size = kernel_size;
  s.head_units = head_units;
  s.lstm_head_mode = lstm_head_mode;
  switch (kind) {
    case ModelKind::convlstmp:
      s.lstm_hidden = convlstmp_lstm_hidden;
      s.conv_filters = convlstmp_conv_filters;
      break;
    case ModelKind::lstm_only:
      s.lstm_hidden = lstm_only_hidden;
      break;
    case ModelKind::cnn_only:
      s.conv_filters = cnn_only_conv_filters;
      break;
  }
  return s;
}

void ExperimentConfig::validate() const {
  spectrum.validate();
  roll.validate();
  kinematics.validate();
  train.validate();
  if (simulation.probes.size() != MotionRecord::kProbes) {
    throw ConfigError(fmt::format("simulation needs exactly {} probes", MotionRecord::kProbes));
  }
  if (pipeline.lag != pipeline.horizon) {
    throw ConfigError(fmt::format("pipeline lag ({}) must equal horizon ({})", pipeline.lag, pipeline.horizon));
  }
  if (!(pipeline.ratio > 0.0 && pipeline.ratio < 1.0)) throw ConfigError("pipeline ratio must lie in (0, 1)");
  if (!(pipeline.target_dt > 0.0)) throw ConfigError("pipeline target_dt must be > 0");
  if (datasets.empty()) throw ConfigError("at least one dataset is required");
  std::set<std::string> labels;
  for (const auto& d : datasets) {
    if (d.label.empty()) throw ConfigError("dataset labels must be non-empty");
    if (!labels.insert(d.label).second) throw ConfigError("duplicate dataset label '" + d.label + "'");
  }
  if (seeds.empty()) throw ConfigError("seeds must list at least one seed");
  for (const auto& label : ablation.datasets) dataset(label);
  for (const auto& label : comparison.datasets) dataset(label);
  if (ablation.horizons.empty() || ablation.scenarios.empty()) throw ConfigError("ablation grid is empty");
  if (comparison.models.empty()) throw ConfigError("comparison needs at least one model");
  for (std::size_t p : ablation.horizons) {
    if (p == 0) throw ConfigError("ablation horizons must be >= 1");
  }
  if (comparison.horizon == 0) throw ConfigError("comparison horizon must be >= 1");
  // Every architecture that the grids will build must be constructible.
  for (std::size_t p : ablation.horizons) {
    architecture.spec_for(ablation.model, p, 4, 1).validate();
  }
  for (ModelKind kind : comparison.models) {
    architecture.spec_for(kind, comparison.horizon, channel_count(comparison.scenario), 1).validate();
  }
}

const DatasetSpec& ExperimentConfig::dataset(const std::string& label) const {
  for (const auto& d : datasets) {
    if (d.label == label) return d;
  }
  throw ConfigError("unknown dataset label '" + label + "'");
}

ExperimentConfig default_experiment_config() {
  ExperimentConfig c;
  c.spectrum = SpectrumParams::with_default_band(0.284, 2.15, 240);
  c.kinematics.ship_speed = 2.196;
  c.kinematics.heading_angle = 90.0;
  return c;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

void reject_unknown(const json& j, const json& reference, const std::string& block) {
  if (!j.is_object()) throw ConfigError("config block '" + block + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!reference.contains(key)) {
      throw ConfigError(fmt::format("unknown key '{}' in config block '{}'", key, block.empty() ? "<root>" : block));
    }
  }
}

template <typename T>
void read_block(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  reject_unknown(j.at(key), json(out), key);
  try {
    j.at(key).get_to(out);
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("invalid config block '{}': {}", key, e.what()));
  }
}

template <typename T, typename Parse>
void read_enum_list(const json& j, const char* key, std::vector<T>& out, Parse parse) {
  std::vector<std::string> names;
  read_optional(j, key, names);
  if (!j.contains(key)) return;
  out.clear();
  for (const auto& n : names) out.push_back(parse(n));
}

template <typename T>
std::vector<std::string> names_of(const std::vector<T>& values) {
  std::vector<std::string> out;
  for (const auto& v : values) out.emplace_back(to_string(v));
  return out;
}

}  // namespace

void to_json(json& j, const DatasetSpec& d) { j = {{"label", d.label}, {"heading", d.heading}}; }

void from_json(const json& j, DatasetSpec& d) {
  reject_unknown(j, json(DatasetSpec{}), "datasets[]");
  read_optional(j, "label", d.label);
  read_optional(j, "heading", d.heading);
}

void to_json(json& j, const ArchitectureConfig& a) {
  j = {{"convlstmp_lstm_hidden", a.convlstmp_lstm_hidden},
       {"convlstmp_conv_filters", a.convlstmp_conv_filters},
       {"lstm_only_hidden", a.lstm_only_hidden},
       {"cnn_only_conv_filters", a.cnn_only_conv_filters},
       {"kernel_size", a.kernel_size},
       {"head_units", a.head_units},
       {"lstm_head_mode", to_string(a.lstm_head_mode)}};
}

void from_json(const json& j, ArchitectureConfig& a) {
  read_optional(j, "convlstmp_lstm_hidden", a.convlstmp_lstm_hidden);
  read_optional(j, "convlstmp_conv_filters", a.convlstmp_conv_filters);
  read_optional(j, "lstm_only_hidden", a.lstm_only_hidden);
  read_optional(j, "cnn_only_conv_filters", a.cnn_only_conv_filters);
  read_optional(j, "kernel_size", a.kernel_size);
  read_optional(j, "head_units", a.head_units);
  if (j.contains("lstm_head_mode")) {
    std::string s;
    read_optional(j, "lstm_head_mode", s);
    a.lstm_head_mode = parse_lstm_head_mode(s);
  }
}

void to_json(json& j, const AblationConfig& a) {
  j = {{"datasets", a.datasets},
       {"scenarios", names_of(a.scenarios)},
       {"horizons", a.horizons},
       {"model", to_string(a.model)}};
}

void from_json(const json& j, AblationConfig& a) {
  read_optional(j, "datasets", a.datasets);
  read_enum_list(j, "scenarios", a.scenarios, parse_scenario);
  read_optional(j, "horizons", a.horizons);
  if (j.contains("model")) {
    std::string s;
    read_optional(j, "model", s);
    a.model = parse_model_kind(s);
  }
}

void to_json(json& j, const ComparisonConfig& c) {
  j = {{"datasets", c.datasets},
       {"models", names_of(c.models)},
       {"horizon", c.horizon},
       {"scenario", to_string(c.scenario)}};
}

void from_json(const json& j, ComparisonConfig& c) {
  read_optional(j, "datasets", c.datasets);
  read_enum_list(j, "models", c.models, parse_model_kind);
  read_optional(j, "horizon", c.horizon);
  if (j.contains("scenario")) {
    std::string s;
    read_optional(j, "scenario", s);
    c.scenario = parse_scenario(s);
  }
}

void to_json(json& j, const ExperimentConfig& c) {
  j = {{"spectrum", c.spectrum},
       {"roll", c.roll},
       {"kinematics", {{"ship_speed", c.kinematics.ship_speed}}},
       {"simulation", c.simulation},
       {"data_seed", c.data_seed},
       {"datasets", c.datasets},
       {"pipeline", c.pipeline},
       {"train", c.train},
       {"architecture", c.architecture},
       {"average_mode", to_string(c.average_mode)},
       {"seeds", c.seeds},
       {"ablation", c.ablation},
       {"comparison", c.comparison},
       {"output_dir", c.output_dir.string()}};
}

void from_json(const json& j, ExperimentConfig& c) {
  reject_unknown(j, json(default_experiment_config()), "");
  read_block(j, "spectrum", c.spectrum);
  if (j.contains("spectrum") && !j.at("spectrum").contains("omega_min") && !j.at("spectrum").contains("omega_max")) {
    c.spectrum = SpectrumParams::with_default_band(c.spectrum.significant_wave_height, c.spectrum.peak_period,
                                                   c.spectrum.n_components);
    c.spectrum.gravity = j.at("spectrum").value("gravity", c.spectrum.gravity);
  }
  read_block(j, "roll", c.roll);
  if (j.contains("kinematics")) {
    reject_unknown(j.at("kinematics"), json{{"ship_speed", 0.0}}, "kinematics");
    read_optional(j.at("kinematics"), "ship_speed", c.kinematics.ship_speed);
  }
  read_block(j, "simulation", c.simulation);
  read_optional(j, "data_seed", c.data_seed);
  if (j.contains("datasets")) {
    try {
      c.datasets = j.at("datasets").get<std::vector<DatasetSpec>>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("invalid datasets list: ") + e.what());
    }
  }
  read_block(j, "pipeline", c.pipeline);
  read_block(j, "train", c.train);
  read_block(j, "architecture", c.architecture);
  if (j.contains("average_mode")) {
    std::string s;
    read_optional(j, "average_mode", s);
    c.average_mode = parse_average_mode(s);
  }
  read_optional(j, "seeds", c.seeds);
  read_block(j, "ablation", c.ablation);
  read_block(j, "comparison", c.comparison);
  std::string out;
  read_optional(j, "output_dir", out);
  if (!out.empty()) c.output_dir = out;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
  ExperimentConfig c = default_experiment_config();
  from_json(j, c);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Data

MotionRecord simulate_dataset(const ExperimentConfig& config, const DatasetSpec& dataset) {
  SeaKinematics kin = config.kinematics;
  kin.heading_angle = dataset.heading;
  return simulate_run(config.spectrum, config.roll, kin, config.simulation, config.data_seed, dataset.label);
}

std::filesystem::path record_path(const ExperimentConfig& config, const std::string& label) {
  std::string file;
  for (char c : label) file += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  return config.output_dir / "data" / (file + ".csv");
}

MotionRecord load_dataset_record(const ExperimentConfig& config, const std::string& label) {
  const auto path = record_path(config, label);
  if (!std::filesystem::exists(path)) {
    throw DataError("no record for " + label + " at " + path.string() +
                    "; generate it first with `rollcast simulate` using the same config");
  }
  MotionRecord rec = load_motion_record(path);
  if (rec.label.empty()) rec.label = label;
  return rec;
}

// ---------------------------------------------------------------------------
// Cells

std::string CellSpec::id() const {
  std::string ds;
  for (char c : dataset) {
    if (std::isalnum(static_cast<unsigned char>(c))) ds += c;
  }
  return fmt::format("{}_{}_p{}_{}_s{}", ds, to_string(scenario), horizon, to_string(model), seed);
}

CellResult run_cell(const ExperimentConfig& config, const MotionRecord& record, const CellSpec& cell,
                    const std::optional<std::filesystem::path>& out_dir, bool save_model) {
  PipelineConfig pc = config.pipeline;
  pc.lag = cell.horizon;
  pc.horizon = cell.horizon;
  pc.scenario = cell.scenario;
  const PreparedData data = prepare_datasets(record, pc);

  Forecaster model(config.architecture.spec_for(cell.model, cell.horizon, channel_count(cell.scenario), cell.seed));
  TrainConfig tc = config.train;
  tc.shuffle_seed = cell.seed;

  CellResult result;
  result.cell = cell;
  result.history = train(model, data.train, data.validation, tc);
  const Evaluation ev = evaluate(model, data.validation, cell.dataset, config.average_mode, pc.target_dt);
  result.report = ev.report;

  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    write_history_csv(*out_dir / "history.csv", result.history);
    emit_outputs(ev, *out_dir);
    if (save_model) {
      save_checkpoint(model, *out_dir / "checkpoint",
                      {{"pipeline", pc},
                       {"scaler", data.train.scaler},
                       {"dataset", cell.dataset},
                       {"record_checksum", data.train.source_checksum},
                       {"train", tc}});
    }
  }
  return result;
}

std::vector<CellResult> run_cells(const ExperimentConfig& config, const std::map<std::string, MotionRecord>& records,
                                  const std::vector<CellSpec>& cells, std::size_t jobs,
                                  const std::optional<std::filesystem::path>& out_root,
                                  const CellProgress& progress) {
  for (const auto& c : cells) {
    if (!records.contains(c.dataset)) throw DataError("no record loaded for " + c.dataset);
  }
  std::vector<CellResult> results(cells.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex mutex;
  std::size_t done = 0;

  auto worker = [&] {
    while (!failed) {
      const std::size_t i = next++;
      if (i >= cells.size()) return;
      try {
        std::optional<std::filesystem::path> dir;
        if (out_root) dir = *out_root / cells[i].id();
        results[i] = run_cell(config, records.at(cells[i].dataset), cells[i], dir);
        std::lock_guard lock(mutex);
        ++done;
        if (progress) progress(results[i], done, cells.size());
      } catch (...) {
        std::lock_guard lock(mutex);
        if (!error) error = std::current_exception();
        failed = true;
      }
    }
  };

  jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(cells.size(), 1));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);
  return results;
}

std::vector<CellSpec> ablation_cells(const ExperimentConfig& config) {
  std::vector<CellSpec> cells;
  for (const auto& ds : config.ablation.datasets) {
    for (std::size_t p : config.ablation.horizons) {
      for (FeatureScenario sc : config.ablation.scenarios) {
        for (std::uint64_t seed : config.seeds) cells.push_back({ds, sc, p, config.ablation.model, seed});
      }
    }
  }
  return cells;
}

std::vector<CellSpec> comparison_cells(const ExperimentConfig& config) {
  std::vector<CellSpec> cells;
  for (const auto& ds : config.comparison.datasets) {
    for (ModelKind kind : config.comparison.models) {
      for (std::uint64_t seed : config.seeds) {
        cells.push_back({ds, config.comparison.scenario, config.comparison.horizon, kind, seed});
      }
    }
  }
  return cells;
}

double median(std::vector<double> values) {
  if (values.empty()) throw DomainError("median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<GroupSummary> summarize_groups(const std::vector<CellResult>& results) {
  std::vector<GroupSummary> groups;
  for (const auto& r : results) {
    auto it = std::find_if(groups.begin(), groups.end(), [&](const GroupSummary& g) {
      return g.dataset == r.cell.dataset && g.scenario == r.cell.scenario && g.horizon == r.cell.horizon &&
             g.model == r.cell.model;
    });
    if (it == groups.end()) {
      groups.push_back({r.cell.dataset, r.cell.scenario, r.cell.horizon, r.cell.model, {}, {}, 0.0, {}});
      it = groups.end() - 1;
    }
    it->seeds.push_back(r.cell.seed);
    it->average_rmse.push_back(r.report.average_rmse);
  }
  for (auto& g : groups) {
    g.median_average_rmse = median(g.average_rmse);
    g.median_per_step_rmse.assign(g.horizon, 0.0);
    for (std::size_t k = 0; k < g.horizon; ++k) {
      std::vector<double> col;
      for (const auto& r : results) {
        if (r.cell.dataset == g.dataset && r.cell.scenario == g.scenario && r.cell.horizon == g.horizon &&
            r.cell.model == g.model) {
          col.push_back(r.report.per_step_rmse.at(k));
        }
      }
      g.median_per_step_rmse[k] = median(col);
    }
  }
  return groups;
}

const GroupSummary& find_group(const std::vector<GroupSummary>& groups, const std::string& dataset,
                               FeatureScenario scenario, std::size_t horizon, ModelKind model) {
  for (const auto& g : groups) {
    if (g.dataset == dataset && g.scenario == scenario && g.horizon == horizon && g.model == model) return g;
  }
  throw DomainError(fmt::format("no results for {} / {} / p={} / {}", dataset, to_string(scenario), horizon,
                                to_string(model)));
}

namespace {

json group_json(const GroupSummary& g) {
  return {{"dataset", g.dataset},
          {"scenario", to_string(g.scenario)},
          {"horizon", g.horizon},
          {"model_kind", to_string(g.model)},
          {"seeds", g.seeds},
          {"average_rmse", g.average_rmse},
          {"median_average_rmse", g.median_average_rmse},
          {"median_per_step_rmse", g.median_per_step_rmse}};
}

std::string cells_csv(const std::vector<CellResult>& results) {
  std::string csv = "dataset,scenario,horizon,model_kind,seed,average_rmse_deg,pooled_rmse_deg,epochs_run,best_epoch\n";
  for (const auto& r : results) {
    csv += fmt::format("{},{},{},{},{},{},{},{},{}\n", r.cell.dataset, to_string(r.cell.scenario),
                       r.cell.horizon, to_string(r.cell.model), r.cell.seed, r.report.average_rmse,
                       r.report.pooled_rmse, r.history.epochs_run(), r.history.best_epoch);
  }
  return csv;
}

}  // namespace

void write_ablation_outputs(const std::vector<CellResult>& results, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const auto groups = summarize_groups(results);
  json grid = {{"schema", "rollcast.ablation/1"}, {"units", "deg"}, {"groups", json::array()}};
  for (const auto& g : groups) grid["groups"].push_back(group_json(g));
  write_text_file(out_dir / "grid.json", grid.dump(2) + "\n");
  write_text_file(out_dir / "grid.csv", cells_csv(results));

  // Rows: dataset x horizon, columns: scenarios (Table 3 layout), seed medians.
  std::vector<FeatureScenario> scenarios;
  std::vector<std::pair<std::string, std::size_t>> rows;
  for (const auto& g : groups) {
    if (std::find(scenarios.begin(), scenarios.end(), g.scenario) == scenarios.end()) scenarios.push_back(g.scenario);
    const std::pair<std::string, std::size_t> key{g.dataset, g.horizon};
    if (std::find(rows.begin(), rows.end(), key) == rows.end()) rows.push_back(key);
  }
  std::string table = "dataset,horizon";
  for (auto sc : scenarios) table += fmt::format(",{}", to_string(sc));
  table += "\n";
  for (const auto& [ds, p] : rows) {
    table += fmt::format("{},{}", ds, p);
    for (auto sc : scenarios) {
      auto it = std::find_if(groups.begin(), groups.end(), [&](const GroupSummary& g) {
        return g.dataset == ds && g.horizon == p && g.scenario == sc;
      });
      table += it == groups.end() ? std::string(",") : fmt::format(",{}", it->median_average_rmse);
    }
    table += "\n";
  }
  write_text_file(out_dir / "table.csv", table);
}

void write_comparison_outputs(const std::vector<CellResult>& results, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const auto groups = summarize_groups(results);
  json out = {{"schema", "rollcast.comparison/1"}, {"units", "deg"}, {"groups", json::array()}, {"rankings", json::array()}};
  for (const auto& g : groups) out["groups"].push_back(group_json(g));

  std::vector<std::string> datasets;
  for (const auto& g : groups) {
    if (std::find(datasets.begin(), datasets.end(), g.dataset) == datasets.end()) datasets.push_back(g.dataset);
  }
  for (const auto& ds : datasets) {
    // Rank the seed medians of each model; seed 0 marks an aggregate row.
    std::vector<EvalReport> medians;
    for (const auto& g : groups) {
      if (g.dataset != ds) continue;
      EvalReport r;
      r.dataset_label = g.dataset;
      r.scenario = g.scenario;
      r.model_kind = g.model;
      r.per_step_rmse = g.median_per_step_rmse;
      r.average_rmse = g.median_average_rmse;
      medians.push_back(std::move(r));
    }
    out["rankings"].push_back(compare(medians));
    std::string dir;
    for (char c : ds) {
      if (std::isalnum(static_cast<unsigned char>(c))) dir += c;
    }
    emit_comparison(medians, out_dir / dir, ds + ": median per-step RMSE");
  }
  write_text_file(out_dir / "comparison.json", out.dump(2) + "\n");
  write_text_file(out_dir / "comparison.csv", cells_csv(results));
}

}  // namespace rollcast
