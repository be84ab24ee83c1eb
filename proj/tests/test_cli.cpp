// End-to-end command-line checks: each subcommand is executed as a real
// subprocess and judged by its exit status, its manifest, and the files it
// leaves behind. MFAMD_CLI_PATH is injected by the build.

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

#include "test_util.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const std::string kCli = MFAMD_CLI_PATH;

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

// Runs a shell command, capturing stdout/stderr to files in `dir`.
RunResult run(const fs::path& dir, const std::string& command) {
  const fs::path out = dir / "stdout.txt";
  const fs::path err = dir / "stderr.txt";
  const std::string full =
      command + " > '" + out.string() + "' 2> '" + err.string() + "'";
  const int status = std::system(full.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = testutil::slurp(out.string());
  r.err = testutil::slurp(err.string());
  return r;
}

fs::path fresh_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() /
                     ("mfamd_cli_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

json read_manifest(const fs::path& dir) {
  const std::string text = testutil::slurp((dir / "manifest.json").string());
  REQUIRE_FALSE(text.empty());
  return json::parse(text);
}

int count_csv_rows(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  int n = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++n;
  return n - 1;  // minus header
}

const std::string kTinyFitFlags =
    " --clusters 2 --factors 1 --burn-in 40 --check-every 20"
    " --stop-after-clean 2 --posterior 60 --thin 10 --kmeans-warm-start"
    " --heartbeat-every 0";

}  // namespace

TEST_CASE("version flag") {
  const fs::path dir = fresh_dir("version");
  const RunResult r = run(dir, "'" + kCli + "' --version");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("mfamd") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("no subcommand is an error") {
  const fs::path dir = fresh_dir("nosub");
  const RunResult r = run(dir, "'" + kCli + "'");
  CHECK(r.exit_code != 0);
  fs::remove_all(dir);
}

TEST_CASE("simulate writes a complete, self-describing dataset") {
  const fs::path dir = fresh_dir("simulate");
  const fs::path out = dir / "sim";
  const RunResult r = run(dir, "'" + kCli + "' simulate --seed 7 --n-rows 120 --out '" +
                                   out.string() + "'");
  CHECK(r.exit_code == 0);
  for (const char* f : {"data.csv", "schema.json", "true_labels.csv",
                        "true_params.json", "manifest.json", "timing.json"})
    CHECK(testutil::file_exists((out / f).string()));
  CHECK(count_csv_rows(out / "data.csv") == 120);
  CHECK(count_csv_rows(out / "true_labels.csv") == 120);

  const json m = read_manifest(out);
  CHECK(m.at("complete").get<bool>() == true);
  CHECK(m.at("kind").get<std::string>() == "mfamd-simulate");
  CHECK(m.at("effective_config").at("seed").get<long>() == 7);
  CHECK(m.at("config_hash").get<std::string>().size() == 16);

  // Same seed, fresh directory: byte-identical data.
  const fs::path out2 = dir / "sim2";
  run(dir, "'" + kCli + "' simulate --seed 7 --n-rows 120 --out '" + out2.string() + "'");
  CHECK(testutil::slurp((out / "data.csv").string()) ==
        testutil::slurp((out2 / "data.csv").string()));

  // Different seed: different data.
  const fs::path out3 = dir / "sim3";
  run(dir, "'" + kCli + "' simulate --seed 8 --n-rows 120 --out '" + out3.string() + "'");
  CHECK(testutil::slurp((out / "data.csv").string()) !=
        testutil::slurp((out3 / "data.csv").string()));

  // Seed is required.
  const RunResult r4 = run(dir, "'" + kCli + "' simulate --out '" + (dir / "x").string() + "'");
  CHECK(r4.exit_code == 1);
  CHECK(r4.err.find("seed") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("preprocess standardizes and reports") {
  const fs::path dir = fresh_dir("preprocess");
  const fs::path sim = dir / "sim";
  REQUIRE(run(dir, "'" + kCli + "' simulate --seed 3 --n-rows 150 --out '" +
                       sim.string() + "'").exit_code == 0);

  const fs::path pre = dir / "pre";
  const RunResult r =
      run(dir, "'" + kCli + "' preprocess --data '" + (sim / "data.csv").string() +
                   "' --schema '" + (sim / "schema.json").string() + "' --out '" +
                   pre.string() + "'");
  CHECK(r.exit_code == 0);
  for (const char* f : {"clean.csv", "schema.json", "merge_log.csv",
                        "load_report.json", "manifest.json"})
    CHECK(testutil::file_exists((pre / f).string()));
  CHECK(count_csv_rows(pre / "clean.csv") == 150);
  const json m = read_manifest(pre);
  CHECK(m.at("complete").get<bool>() == true);
  CHECK(m.at("kind").get<std::string>() == "mfamd-preprocess");

  // Missing inputs fail loudly.
  const RunResult bad = run(dir, "'" + kCli + "' preprocess --data nope.csv --schema '" +
                                     (sim / "schema.json").string() + "' --out '" +
                                     (dir / "b").string() + "'");
  CHECK(bad.exit_code == 1);
  CHECK(bad.err.find("error:") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("fit produces a complete sample store and summaries") {
  const fs::path dir = fresh_dir("fit");
  const fs::path sim = dir / "sim";
  const fs::path pre = dir / "pre";
  REQUIRE(run(dir, "'" + kCli + "' simulate --seed 5 --n-rows 100 --out '" +
                       sim.string() + "'").exit_code == 0);
  REQUIRE(run(dir, "'" + kCli + "' preprocess --data '" + (sim / "data.csv").string() +
                       "' --schema '" + (sim / "schema.json").string() + "' --out '" +
                       pre.string() + "'").exit_code == 0);

  const fs::path fit = dir / "fit";
  const RunResult r =
      run(dir, "'" + kCli + "' fit --data '" + (pre / "clean.csv").string() +
                   "' --schema '" + (pre / "schema.json").string() + "' --seed 11" +
                   kTinyFitFlags + " --out '" + fit.string() + "'");
  CAPTURE(r.err);
  CHECK(r.exit_code == 0);
  for (const char* f : {"manifest.json", "pi.f64", "lambda.f64", "psi.f64",
                        "alloc.i32", "loglik.f64", "membership.csv",
                        "residuals.csv", "varsel_trace.csv", "score.csv",
                        "timing.json"})
    CHECK(testutil::file_exists((fit / f).string()));
  CHECK(count_csv_rows(fit / "membership.csv") == 100);

  const json m = read_manifest(fit);
  CHECK(m.at("complete").get<bool>() == true);
  CHECK(m.at("kind").get<std::string>() == "mfamd-sample-store");
  CHECK(m.at("command").get<std::string>() == "fit");
  CHECK(m.at("model").at("n_clusters").get<int>() == 2);
  CHECK(m.at("chain").at("n_draws").get<int>() == 6);
  CHECK(m.at("data").at("n_rows").get<int>() == 100);

  // Missing required options fail before any work happens.
  const RunResult bad = run(dir, "'" + kCli + "' fit --schema '" +
                                     (pre / "schema.json").string() + "' --seed 1 --out '" +
                                     (dir / "b").string() + "'");
  CHECK(bad.exit_code == 1);
  fs::remove_all(dir);
}

TEST_CASE("diagnose computes membership metrics and agreement with labels") {
  const fs::path dir = fresh_dir("diagnose");
  const fs::path sim = dir / "sim";
  const fs::path pre = dir / "pre";
  const fs::path fit = dir / "fit";
  REQUIRE(run(dir, "'" + kCli + "' simulate --seed 19 --n-rows 100 --out '" +
                       sim.string() + "'").exit_code == 0);
  REQUIRE(run(dir, "'" + kCli + "' preprocess --data '" + (sim / "data.csv").string() +
                       "' --schema '" + (sim / "schema.json").string() + "' --out '" +
                       pre.string() + "'").exit_code == 0);
  REQUIRE(run(dir, "'" + kCli + "' fit --data '" + (pre / "clean.csv").string() +
                       "' --schema '" + (pre / "schema.json").string() + "' --seed 11" +
                       kTinyFitFlags + " --out '" + fit.string() + "'").exit_code == 0);

  const fs::path dia = dir / "dia";
  const RunResult r =
      run(dir, "'" + kCli + "' diagnose --store '" + fit.string() + "' --labels '" +
                   (sim / "true_labels.csv").string() + "' --out '" + dia.string() + "'");
  CAPTURE(r.err);
  CHECK(r.exit_code == 0);
  CHECK(testutil::file_exists((dia / "metrics.csv").string()));
  CHECK(testutil::file_exists((dia / "membership.csv").string()));
  const std::string metrics = testutil::slurp((dia / "metrics.csv").string());
  CHECK(metrics.find("rand_index") != std::string::npos);
  CHECK(metrics.find("adjusted_rand_index") != std::string::npos);
  CHECK(metrics.find("mean_uncertainty") != std::string::npos);
  const json m = read_manifest(dia);
  CHECK(m.at("complete").get<bool>() == true);

  // With G = 2 every uncertainty is bounded by 1 - 1/G = 0.5.
  std::ifstream mem((dia / "membership.csv").string());
  std::string line;
  std::getline(mem, line);  // header
  int rows = 0;
  while (std::getline(mem, line)) {
    const auto pos = line.rfind(',');
    REQUIRE(pos != std::string::npos);
    const double u = std::stod(line.substr(pos + 1));
    CHECK(u <= 0.5 + 1e-12);
    CHECK(u >= 0.0);
    ++rows;
  }
  CHECK(rows == 100);

  // Without labels the agreement columns are absent but the run succeeds.
  const fs::path dia2 = dir / "dia2";
  const RunResult r2 = run(dir, "'" + kCli + "' diagnose --store '" + fit.string() +
                                    "' --out '" + dia2.string() + "'");
  CHECK(r2.exit_code == 0);
  const std::string metrics2 = testutil::slurp((dia2 / "metrics.csv").string());
  CHECK(metrics2.find("rand_index") == std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("configuration precedence: flags beat config file, env beats config") {
  const fs::path dir = fresh_dir("config");
  const fs::path sim = dir / "sim";
  REQUIRE(run(dir, "'" + kCli + "' simulate --seed 23 --n-rows 60 --out '" +
                       sim.string() + "'").exit_code == 0);

  // Config asks for 3 clusters; the flag overrides with 2.
  const fs::path cfg = dir / "run.json";
  {
    std::ofstream out(cfg);
    out << R"({"model": {"n_clusters": 3, "n_factors": 1},
               "schedule": {"burn_in_iters": 40, "varsel_check_every": 20,
                            "varsel_stop_after_clean": 2,
                            "posterior_iters": 60, "thin": 10},
               "flags": {"kmeans_warm_start": true},
               "heartbeat_every": 0})";
  }
  const fs::path fit = dir / "fit";
  const RunResult r =
      run(dir, "'" + kCli + "' fit --config '" + cfg.string() + "' --data '" +
                   (sim / "data.csv").string() + "' --schema '" +
                   (sim / "schema.json").string() + "' --seed 1 --clusters 2 --out '" +
                   fit.string() + "'");
  CAPTURE(r.err);
  CHECK(r.exit_code == 0);
  const json m = read_manifest(fit);
  CHECK(m.at("effective_config").at("model").at("n_clusters").get<int>() == 2);
  CHECK(m.at("effective_config").at("model").at("n_factors").get<int>() == 1);
  CHECK(m.at("effective_config").at("schedule").at("burn_in_iters").get<int>() == 40);
  CHECK(m.at("effective_config").at("flags").at("kmeans_warm_start").get<bool>() == true);

  // Unknown config keys are rejected by name.
  const fs::path bad = dir / "bad.json";
  {
    std::ofstream out(bad);
    out << R"({"model": {"n_clusterz": 3}})";
  }
  const RunResult rb = run(dir, "'" + kCli + "' fit --config '" + bad.string() +
                                    "' --data x --schema y --seed 1 --out '" +
                                    (dir / "o").string() + "'");
  CHECK(rb.exit_code == 1);
  CHECK(rb.err.find("n_clusterz") != std::string::npos);

  // Wrong-typed config values are rejected.
  const fs::path wrong = dir / "wrong.json";
  {
    std::ofstream out(wrong);
    out << R"({"model": {"n_clusters": "three"}})";
  }
  const RunResult rw = run(dir, "'" + kCli + "' fit --config '" + wrong.string() +
                                    "' --data x --schema y --seed 1 --out '" +
                                    (dir / "o2").string() + "'");
  CHECK(rw.exit_code == 1);

  // MFAMD_OUT_DIR supplies the output directory when --out is absent.
  const fs::path envout = dir / "envout";
  const RunResult re =
      run(dir, "MFAMD_OUT_DIR='" + envout.string() + "' '" + kCli +
                   "' simulate --seed 2 --n-rows 40");
  CHECK(re.exit_code == 0);
  CHECK(testutil::file_exists((envout / "data.csv").string()));

  // ...and --out still wins over the environment.
  const fs::path flagout = dir / "flagout";
  const RunResult rf =
      run(dir, "MFAMD_OUT_DIR='" + (dir / "ignored").string() + "' '" + kCli +
                   "' simulate --seed 2 --n-rows 40 --out '" + flagout.string() + "'");
  CHECK(rf.exit_code == 0);
  CHECK(testutil::file_exists((flagout / "data.csv").string()));
  CHECK_FALSE(testutil::file_exists((dir / "ignored" / "data.csv").string()));
  fs::remove_all(dir);
}

TEST_CASE("select scores a grid and keeps the winner's artifacts") {
  const fs::path dir = fresh_dir("select");
  const fs::path sim = dir / "sim";
  const fs::path pre = dir / "pre";
  REQUIRE(run(dir, "'" + kCli + "' simulate --seed 29 --n-rows 90 --out '" +
                       sim.string() + "'").exit_code == 0);
  REQUIRE(run(dir, "'" + kCli + "' preprocess --data '" + (sim / "data.csv").string() +
                       "' --schema '" + (sim / "schema.json").string() + "' --out '" +
                       pre.string() + "'").exit_code == 0);

  const fs::path sel = dir / "sel";
  const RunResult r =
      run(dir, "'" + kCli + "' select --data '" + (pre / "clean.csv").string() +
                   "' --schema '" + (pre / "schema.json").string() +
                   "' --seed 37 --g-values 1,2 --q-values 1"
                   " --burn-in 40 --check-every 20 --stop-after-clean 2"
                   " --posterior 60 --thin 10 --kmeans-warm-start"
                   " --heartbeat-every 0 --out '" + sel.string() + "'");
  CAPTURE(r.err);
  CHECK(r.exit_code == 0);
  CHECK(testutil::file_exists((sel / "scores.csv").string()));
  CHECK(testutil::file_exists((sel / "grid_cells.csv").string()));
  CHECK(testutil::file_exists((sel / "best" / "manifest.json").string()));
  CHECK(testutil::file_exists((sel / "best" / "pi.f64").string()));
  CHECK(count_csv_rows(sel / "grid_cells.csv") == 2);

  const json m = read_manifest(sel);
  CHECK(m.at("complete").get<bool>() == true);
  CHECK(m.at("kind").get<std::string>() == "mfamd-select");
  CHECK(m.at("best").at("n_clusters").get<int>() >= 1);
  CHECK(m.at("best").contains("bic_mcmc"));
  fs::remove_all(dir);
}
