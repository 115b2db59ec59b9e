#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "support.hpp"

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Run run_cli(const testing::TempDir& dir, const std::string& args) {
  const auto out = dir / "stdout.txt";
  const auto err = dir / "stderr.txt";
  const std::string cmd = "cd '" + dir.path().string() + "' && '" ROLLCAST_CLI_PATH "' " + args + " > '" +
                          out.string() + "' 2> '" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::size_t count_lines(const std::string& text) {
  std::size_t n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

// Small network and budget so the end-to-end commands finish quickly.
const char* kSmallConfig = R"({
  "train": {"epochs": 2, "patience": 0},
  "architecture": {"convlstmp_lstm_hidden": 8, "convlstmp_conv_filters": [4, 4], "lstm_only_hidden": 8,
                   "cnn_only_conv_filters": [4, 4], "head_units": [8, 8]},
  "seeds": [1]
})";

}  // namespace

TEST_CASE("help and argument errors") {
  testing::TempDir dir("cli_args");
  const Run help = run_cli(dir, "--help");
  CHECK(help.code == 0);
  for (const char* flag : {"--config", "--output-dir", "--jobs", "--seeds", "--epochs", "--batch-size",
                           "--learning-rate", "--patience", "--optimizer", "--average-mode", "simulate", "ablate",
                           "compare", "train", "evaluate", "predict"}) {
    CAPTURE(flag);
    CHECK(help.out.find(flag) != std::string::npos);
  }
  CHECK(run_cli(dir, "train --help").out.find("--horizon") != std::string::npos);

  CHECK(run_cli(dir, "--bogus simulate").code == 2);
  CHECK(run_cli(dir, "simulate --bogus").code == 2);
  CHECK(run_cli(dir, "").code == 2);
  CHECK(run_cli(dir, "--epochs 0 train").code == 2);
  CHECK(run_cli(dir, "--config missing.json simulate").code == 2);

  std::ofstream(dir / "bad.json") << R"({"pipeline": {"lag": 10, "horizon": 20}})";
  const Run bad = run_cli(dir, "--config bad.json simulate");
  CHECK(bad.code == 2);
  CHECK(bad.err.find("lag") != std::string::npos);

  std::ofstream(dir / "typo.json") << R"({"trian": {}})";
  CHECK(run_cli(dir, "--config typo.json simulate").code == 2);
}

TEST_CASE("config command prints the shipped defaults") {
  testing::TempDir dir("cli_config");
  const Run r = run_cli(dir, "config");
  REQUIRE(r.code == 0);
  const auto shipped = std::filesystem::path(ROLLCAST_SOURCE_DIR) / "configs" / "default.json";
  CHECK(nlohmann::json::parse(r.out) == nlohmann::json::parse(slurp(shipped)));
  CHECK(nlohmann::json::parse(run_cli(dir, "--epochs 9 config").out)["train"]["epochs"] == 9);
}

TEST_CASE("simulate") {
  testing::TempDir dir("cli_sim");
  REQUIRE(run_cli(dir, "-q -o runs simulate").code == 0);
  for (const char* name : {"dataset_1", "dataset_2", "dataset_3"}) {
    CHECK(std::filesystem::exists(dir / "runs" / "data" / (std::string(name) + ".csv")));
    CHECK(std::filesystem::exists(dir / "runs" / "data" / (std::string(name) + ".json")));
  }
  const std::string csv = slurp(dir / "runs" / "data" / "dataset_3.csv");
  CHECK(csv.rfind("t,roll_deg,wave1,wave2,wave3\n", 0) == 0);
  CHECK(count_lines(csv) == 802);
  const auto side = nlohmann::json::parse(slurp(dir / "runs" / "data" / "dataset_1.json"));
  CHECK(side.at("heading") == 150.0);
  CHECK(side.at("label") == "dataset#1");

  REQUIRE(run_cli(dir, "-q simulate --heading 120 --seed 7 --out a.csv").code == 0);
  REQUIRE(run_cli(dir, "-q simulate --heading 120 --seed 7 --out b.csv").code == 0);
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
  REQUIRE(run_cli(dir, "-q simulate --heading 120 --seed 8 --out c.csv").code == 0);
  CHECK(slurp(dir / "a.csv") != slurp(dir / "c.csv"));

  CHECK(run_cli(dir, "simulate --out x.csv").code == 2);
}

TEST_CASE("train, evaluate and predict") {
  testing::TempDir dir("cli_train");
  std::ofstream(dir / "small.json") << kSmallConfig;
  const std::string base = "-q -c small.json -o runs ";

  const Run missing = run_cli(dir, base + "train --dataset dataset#2");
  CHECK(missing.code == 3);
  CHECK(missing.err.find("rollcast simulate") != std::string::npos);

  REQUIRE(run_cli(dir, base + "simulate").code == 0);
  const Run train = run_cli(dir, base + "train --dataset dataset#2 --horizon 10 --out run");
  REQUIRE(train.code == 0);
  CHECK(count_lines(slurp(dir / "run" / "history.csv")) == 3);
  CHECK(std::filesystem::exists(dir / "run" / "checkpoint" / "params.bin"));

  // Same flags, same bytes.
  REQUIRE(run_cli(dir, base + "train --dataset dataset#2 --horizon 10 --out run2").code == 0);
  CHECK(slurp(dir / "run" / "history.csv") == slurp(dir / "run2" / "history.csv"));
  CHECK(slurp(dir / "run" / "report.json") == slurp(dir / "run2" / "report.json"));

  const Run ev = run_cli(dir, base + "evaluate --checkpoint run/checkpoint --out ev");
  REQUIRE(ev.code == 0);
  const auto report = nlohmann::json::parse(slurp(dir / "ev" / "report.json"));
  CHECK(report.at("n_eval_windows") == 157);
  CHECK(report == nlohmann::json::parse(slurp(dir / "run" / "report.json")));

  // A window of 10 samples taken from the record.
  const std::string record = slurp(dir / "runs" / "data" / "dataset_2.csv");
  std::istringstream lines(record);
  std::string line;
  std::ofstream window(dir / "window.csv");
  for (int i = 0; i < 11 && std::getline(lines, line); ++i) window << line << '\n';
  window.close();
  const Run pred = run_cli(dir, base + "predict --checkpoint run/checkpoint --window window.csv");
  REQUIRE(pred.code == 0);
  CHECK(pred.out.rfind("step,t,roll_pred_deg\n", 0) == 0);
  CHECK(count_lines(pred.out) == 11);
  CHECK(pred.out.find("\n10,1.9") != std::string::npos);

  std::ofstream(dir / "broken.csv") << "t,roll_deg,wave1,wave2,wave3\n0,1,2,3,4\n0.1,1,2,oops,4\n";
  const Run broken = run_cli(dir, base + "predict --checkpoint run/checkpoint --window broken.csv");
  CHECK(broken.code == 3);
  CHECK(broken.err.find("broken.csv:3") != std::string::npos);

  std::ofstream(dir / "short.csv") << "t,roll_deg,wave1,wave2,wave3\n0,1,2,3,4\n";
  CHECK(run_cli(dir, base + "predict --checkpoint run/checkpoint --window short.csv").code == 3);

  const Run diverged = run_cli(dir, base + "--learning-rate 1e200 train --dataset dataset#2 --out boom");
  CHECK(diverged.code == 4);
}

TEST_CASE("grid commands") {
  testing::TempDir dir("cli_grid");
  std::ofstream(dir / "small.json") << kSmallConfig;
  const std::string base = "-q -c small.json -o runs ";
  REQUIRE(run_cli(dir, base + "simulate").code == 0);

  const Run abl = run_cli(dir, base + "-j 2 ablate --datasets dataset#3 --horizons 10");
  REQUIRE(abl.code == 0);
  CHECK(abl.out.find("dataset#3") != std::string::npos);
  const std::string table = slurp(dir / "runs" / "ablation" / "table.csv");
  CHECK(table.rfind("dataset,horizon,roll_only,wave_only,roll_and_wave\n", 0) == 0);
  CHECK(count_lines(slurp(dir / "runs" / "ablation" / "grid.csv")) == 4);

  const Run cmp = run_cli(dir, base + "compare --datasets dataset#1 --horizon 10");
  REQUIRE(cmp.code == 0);
  CHECK(cmp.out.find("convlstmp") != std::string::npos);
  CHECK(std::filesystem::exists(dir / "runs" / "comparison" / "comparison.csv"));

  const std::string first = slurp(dir / "runs" / "comparison" / "comparison.json");
  REQUIRE(run_cli(dir, base + "compare --datasets dataset#1 --horizon 10").code == 0);
  CHECK(slurp(dir / "runs" / "comparison" / "comparison.json") == first);

  CHECK(run_cli(dir, base + "compare --datasets dataset#7").code == 2);
}
