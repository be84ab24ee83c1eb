// Command line front end: preprocess, fit, select, diagnose, simulate.
//
// One JSON config file can drive every command; explicit flags override it,
// and the two environment variables MFAMD_OUT_DIR / MFAMD_WORKERS sit in
// between (CLI > env > file > defaults). Every command finishes by writing
// manifest.json into its output directory; exit code 0 means exactly that
// the manifest was written and complete. Wall-clock timings go to a separate
// timing.json so reruns with the same config and seed produce byte-identical
// manifests and sample files.

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mfamd/csv.hpp"
#include "mfamd/data.hpp"
#include "mfamd/diagnostics.hpp"
#include "mfamd/errors.hpp"
#include "mfamd/fit.hpp"
#include "mfamd/select.hpp"
#include "mfamd/simulate.hpp"
#include "mfamd/store.hpp"
#include "mfamd/varsel.hpp"
#include "mfamd/version.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mfamd;

// ---------------------------------------------------------------------------
// Run configuration: defaults, then config file, then env, then flags.

struct RunConfig {
  // Paths.
  std::string config_path;
  std::string data_path;
  std::string schema_path;
  std::string out_dir;
  std::string store_dir;
  std::string labels_path;
  std::string label_column = "cluster";

  // Model.
  int G = 2;
  int Q = 2;
  std::vector<int> g_values{1, 2, 3};
  std::vector<int> q_values{1, 2, 3};

  // Priors.
  double dirichlet_alpha = 0.5;
  double lambda_scale = 5.0;
  double psi_shape = 7.0;
  double psi_scale = 7.0;

  // Phase schedule.
  int burn_in_iters = 20000;
  int varsel_check_every = 1000;
  int varsel_stop_after_clean = 4;
  int posterior_iters = 100000;
  int thin = 100;

  // Variable selection.
  bool varsel_enabled = true;
  double epsilon_continuous = 0.95;
  double epsilon_categorical = 0.99;
  bool fuzzy_variance_ratio = false;

  // Execution flags.
  bool parallel = false;  // sequential chain is the reproducible default
  bool literal_psi_residuals = false;
  bool kmeans_warm_start = false;
  bool alloc_conditional_on_theta = false;
  int residual_rows = 50;
  int heartbeat_every = 500;
  int workers = 1;

  std::uint64_t seed = 0;
  bool seed_set = false;

  // Preprocess.
  bool standardize = true;
  bool merge_rare = true;
  double merge_threshold = 0.10;
  int max_missing = -1;
  bool error_on_unobserved_level = false;

  // Simulate.
  int sim_rows = 500;
};

// ---------------------------------------------------------------------------
// Small file and hashing helpers.

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("short write to " + path.string());
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

json vec_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json mat_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Config file loading with field-level errors.

void expect_keys(const json& j, const std::string& section,
                 std::initializer_list<const char*> keys) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : keys)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known) {
      std::string where = section.empty() ? it.key() : section + "." + it.key();
      throw ConfigError("config: unknown key '" + where + "'");
    }
  }
}

template <typename T>
void take(const json& j, const std::string& section, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(out);
  } catch (const json::exception&) {
    std::string where = section.empty() ? key : section + "." + key;
    throw ConfigError("config: field '" + where + "' has the wrong type");
  }
}

void apply_config_json(RunConfig& cfg, const json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  expect_keys(j, "",
              {"data", "schema", "out", "store", "labels", "label_column",
               "seed", "workers", "residual_rows", "heartbeat_every", "model",
               "priors", "schedule", "varsel", "flags", "preprocess",
               "simulate"});
  take(j, "", "data", cfg.data_path);
  take(j, "", "schema", cfg.schema_path);
  take(j, "", "out", cfg.out_dir);
  take(j, "", "store", cfg.store_dir);
  take(j, "", "labels", cfg.labels_path);
  take(j, "", "label_column", cfg.label_column);
  if (j.contains("seed")) {
    take(j, "", "seed", cfg.seed);
    cfg.seed_set = true;
  }
  take(j, "", "workers", cfg.workers);
  take(j, "", "residual_rows", cfg.residual_rows);
  take(j, "", "heartbeat_every", cfg.heartbeat_every);

  if (j.contains("model")) {
    const json& m = j.at("model");
    expect_keys(m, "model", {"n_clusters", "n_factors", "g_values", "q_values"});
    take(m, "model", "n_clusters", cfg.G);
    take(m, "model", "n_factors", cfg.Q);
    take(m, "model", "g_values", cfg.g_values);
    take(m, "model", "q_values", cfg.q_values);
  }
  if (j.contains("priors")) {
    const json& p = j.at("priors");
    expect_keys(p, "priors",
                {"dirichlet_alpha", "lambda_scale", "psi_shape", "psi_scale"});
    take(p, "priors", "dirichlet_alpha", cfg.dirichlet_alpha);
    take(p, "priors", "lambda_scale", cfg.lambda_scale);
    take(p, "priors", "psi_shape", cfg.psi_shape);
    take(p, "priors", "psi_scale", cfg.psi_scale);
  }
  if (j.contains("schedule")) {
    const json& s = j.at("schedule");
    expect_keys(s, "schedule",
                {"burn_in_iters", "varsel_check_every", "varsel_stop_after_clean",
                 "posterior_iters", "thin"});
    take(s, "schedule", "burn_in_iters", cfg.burn_in_iters);
    take(s, "schedule", "varsel_check_every", cfg.varsel_check_every);
    take(s, "schedule", "varsel_stop_after_clean", cfg.varsel_stop_after_clean);
    take(s, "schedule", "posterior_iters", cfg.posterior_iters);
    take(s, "schedule", "thin", cfg.thin);
  }
  if (j.contains("varsel")) {
    const json& v = j.at("varsel");
    expect_keys(v, "varsel",
                {"enabled", "epsilon_continuous", "epsilon_categorical", "fuzzy"});
    take(v, "varsel", "enabled", cfg.varsel_enabled);
    take(v, "varsel", "epsilon_continuous", cfg.epsilon_continuous);
    take(v, "varsel", "epsilon_categorical", cfg.epsilon_categorical);
    take(v, "varsel", "fuzzy", cfg.fuzzy_variance_ratio);
  }
  if (j.contains("flags")) {
    const json& f = j.at("flags");
    expect_keys(f, "flags",
                {"parallel", "literal_psi_residuals", "kmeans_warm_start",
                 "alloc_conditional_on_theta"});
    take(f, "flags", "parallel", cfg.parallel);
    take(f, "flags", "literal_psi_residuals", cfg.literal_psi_residuals);
    take(f, "flags", "kmeans_warm_start", cfg.kmeans_warm_start);
    take(f, "flags", "alloc_conditional_on_theta", cfg.alloc_conditional_on_theta);
  }
  if (j.contains("preprocess")) {
    const json& p = j.at("preprocess");
    expect_keys(p, "preprocess",
                {"standardize", "merge_rare", "merge_threshold", "max_missing",
                 "error_on_unobserved_level"});
    take(p, "preprocess", "standardize", cfg.standardize);
    take(p, "preprocess", "merge_rare", cfg.merge_rare);
    take(p, "preprocess", "merge_threshold", cfg.merge_threshold);
    take(p, "preprocess", "max_missing", cfg.max_missing);
    take(p, "preprocess", "error_on_unobserved_level", cfg.error_on_unobserved_level);
  }
  if (j.contains("simulate")) {
    const json& s = j.at("simulate");
    expect_keys(s, "simulate", {"n_rows"});
    take(s, "simulate", "n_rows", cfg.sim_rows);
  }
}

void apply_env(RunConfig& cfg) {
  if (const char* v = std::getenv("MFAMD_OUT_DIR"); v && *v) cfg.out_dir = v;
  if (const char* v = std::getenv("MFAMD_WORKERS"); v && *v) {
    try {
      cfg.workers = std::stoi(v);
    } catch (const std::exception&) {
      throw ConfigError("MFAMD_WORKERS is not an integer: " + std::string(v));
    }
  }
}

// The fully resolved settings, echoed into every manifest and hashed so a
// run is re-derivable from its outputs alone.
json effective_config(const RunConfig& cfg, const std::string& command) {
  json j;
  j["command"] = command;
  j["data"] = cfg.data_path;
  j["schema"] = cfg.schema_path;
  j["out"] = cfg.out_dir;
  j["store"] = cfg.store_dir;
  j["labels"] = cfg.labels_path;
  j["label_column"] = cfg.label_column;
  j["seed"] = cfg.seed;
  j["workers"] = cfg.workers;
  j["residual_rows"] = cfg.residual_rows;
  j["heartbeat_every"] = cfg.heartbeat_every;
  j["model"] = json{{"n_clusters", cfg.G},
                    {"n_factors", cfg.Q},
                    {"g_values", cfg.g_values},
                    {"q_values", cfg.q_values}};
  j["priors"] = json{{"dirichlet_alpha", cfg.dirichlet_alpha},
                     {"lambda_scale", cfg.lambda_scale},
                     {"psi_shape", cfg.psi_shape},
                     {"psi_scale", cfg.psi_scale}};
  j["schedule"] = json{{"burn_in_iters", cfg.burn_in_iters},
                       {"varsel_check_every", cfg.varsel_check_every},
                       {"varsel_stop_after_clean", cfg.varsel_stop_after_clean},
                       {"posterior_iters", cfg.posterior_iters},
                       {"thin", cfg.thin}};
  j["varsel"] = json{{"enabled", cfg.varsel_enabled},
                     {"epsilon_continuous", cfg.epsilon_continuous},
                     {"epsilon_categorical", cfg.epsilon_categorical},
                     {"fuzzy", cfg.fuzzy_variance_ratio}};
  j["flags"] = json{{"parallel", cfg.parallel},
                    {"literal_psi_residuals", cfg.literal_psi_residuals},
                    {"kmeans_warm_start", cfg.kmeans_warm_start},
                    {"alloc_conditional_on_theta", cfg.alloc_conditional_on_theta}};
  j["preprocess"] = json{{"standardize", cfg.standardize},
                         {"merge_rare", cfg.merge_rare},
                         {"merge_threshold", cfg.merge_threshold},
                         {"max_missing", cfg.max_missing},
                         {"error_on_unobserved_level", cfg.error_on_unobserved_level}};
  j["simulate"] = json{{"n_rows", cfg.sim_rows}};
  return j;
}

// ---------------------------------------------------------------------------
// Output helpers.

void ensure_out_dir(const std::string& dir) {
  if (dir.empty()) throw ConfigError("config: field 'out' is required");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

void write_timing(const fs::path& dir, const std::string& command,
                  double wall_seconds) {
  json t;
  t["command"] = command;
  t["wall_seconds"] = wall_seconds;
  write_text_file(dir / "timing.json", t.dump(2) + "\n");
}

// manifest.json is written last, so its presence certifies a complete run.
void write_manifest(const fs::path& dir, json manifest) {
  manifest["complete"] = true;
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

json base_manifest(const std::string& kind, const json& eff) {
  json m;
  m["kind"] = kind;
  m["version"] = kMfamdVersion;
  m["command"] = eff.at("command");
  m["effective_config"] = eff;
  m["config_hash"] = hex64(fnv1a64(eff.dump()));
  m["timing_file"] = "timing.json";
  return m;
}

HeartbeatFn stderr_heartbeat(const std::string& command) {
  return [command](const Heartbeat& hb) {
    std::cerr << "hb command=" << command << " phase=" << hb.phase
              << " sweep=" << hb.sweep << " total=" << hb.phase_total
              << " retained=" << hb.n_retained << " draws=" << hb.n_draws
              << "\n";
  };
}

std::vector<std::string> dim_names(const MixedDataset& ds,
                                   const std::vector<int>& dims) {
  std::vector<std::string> names;
  names.reserve(dims.size());
  for (int d : dims) {
    const int j = ds.layout.dim_var[static_cast<size_t>(d)];
    const VariableSpec& v = ds.schema[static_cast<size_t>(j)];
    if (v.latent_width() > 1)
      names.push_back(v.name + "#" +
                      std::to_string(d - ds.layout.offset[static_cast<size_t>(j)]));
    else
      names.push_back(v.name);
  }
  return names;
}

FitOptions fit_options(const RunConfig& cfg, const std::string& command) {
  FitOptions opt;
  opt.sweep.parallel = cfg.parallel;
  opt.sweep.alloc_conditional_on_theta = cfg.alloc_conditional_on_theta;
  opt.varsel.epsilon_continuous = cfg.epsilon_continuous;
  opt.varsel.epsilon_categorical = cfg.epsilon_categorical;
  opt.varsel.fuzzy = cfg.fuzzy_variance_ratio;
  opt.varsel_enabled = cfg.varsel_enabled;
  opt.kmeans_warm_start = cfg.kmeans_warm_start;
  opt.residual_rows = cfg.residual_rows;
  opt.literal_psi_residuals = cfg.literal_psi_residuals;
  opt.heartbeat = stderr_heartbeat(command);
  opt.heartbeat_every = cfg.heartbeat_every;
  return opt;
}

PhaseSchedule schedule_from(const RunConfig& cfg) {
  PhaseSchedule s;
  s.burn_in_iters = cfg.burn_in_iters;
  s.varsel_check_every = cfg.varsel_check_every;
  s.varsel_stop_after_clean = cfg.varsel_stop_after_clean;
  s.posterior_iters = cfg.posterior_iters;
  s.thin = cfg.thin;
  s.validate();
  return s;
}

PriorSettings prior_settings(const RunConfig& cfg) {
  PriorSettings p;
  p.dirichlet_alpha = cfg.dirichlet_alpha;
  p.lambda_scale = cfg.lambda_scale;
  p.psi_shape = cfg.psi_shape;
  p.psi_scale = cfg.psi_scale;
  return p;
}

StoreMeta store_meta(const RunConfig& cfg, const json& eff) {
  StoreMeta meta;
  meta.seed = cfg.seed;
  meta.schedule = schedule_from(cfg);
  meta.parallel = cfg.parallel;
  meta.varsel_enabled = cfg.varsel_enabled;
  meta.kmeans_warm_start = cfg.kmeans_warm_start;
  meta.fuzzy_variance_ratio = cfg.fuzzy_variance_ratio;
  meta.literal_psi_residuals = cfg.literal_psi_residuals;
  meta.alloc_conditional_on_theta = cfg.alloc_conditional_on_theta;
  meta.config_hash = hex64(fnv1a64(eff.dump()));
  return meta;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

// Writes the per-model artifacts (sample store, membership, residuals,
// selection trace, score row) into `dir` and returns the file list.
std::vector<std::string> write_fit_artifacts(const fs::path& dir,
                                             const FitResult& res,
                                             const MixedDataset& ds,
                                             const StoreMeta& meta) {
  write_sample_store(dir.string(), res, ds, meta);
  write_membership_csv((dir / "membership.csv").string(), res.membership);
  write_residuals_csv((dir / "residuals.csv").string(), res.residuals,
                      dim_names(ds, res.residuals.cont_dims),
                      dim_names(ds, res.residuals.cat_dims));
  write_varsel_trace_csv((dir / "varsel_trace.csv").string(), res.varsel_trace);
  write_score_table_csv((dir / "score.csv").string(), {res.score});
  return {"manifest.json", "pi.f64",          "lambda.f64",
          "psi.f64",       "alloc.i32",       "loglik.f64",
          "membership.csv", "residuals.csv",  "varsel_trace.csv",
          "score.csv"};
}

// Re-opens the store manifest and folds in the run-level fields, keeping a
// single manifest per output directory.
void decorate_store_manifest(const fs::path& dir, const json& eff,
                             const std::vector<std::string>& outputs) {
  json m = json::parse(read_text_file((dir / "manifest.json").string()));
  m["command"] = eff.at("command");
  m["effective_config"] = eff;
  m["config_hash"] = hex64(fnv1a64(eff.dump()));
  m["outputs"] = outputs;
  m["timing_file"] = "timing.json";
  write_manifest(dir, std::move(m));
}

// ---------------------------------------------------------------------------
// Commands.

int cmd_preprocess(const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  require(!cfg.data_path.empty(), "config: field 'data' is required");
  require(!cfg.schema_path.empty(), "config: field 'schema' is required");
  ensure_out_dir(cfg.out_dir);
  const json eff = effective_config(cfg, "preprocess");
  const fs::path out(cfg.out_dir);

  const std::vector<VariableSpec> schema = load_schema(cfg.schema_path);
  LoadOptions lopt;
  lopt.max_missing_per_variable = cfg.max_missing;
  lopt.on_unobserved_level = cfg.error_on_unobserved_level
                                 ? UnobservedLevelPolicy::Error
                                 : UnobservedLevelPolicy::Drop;
  LoadReport report;
  MixedDataset ds = load_csv(cfg.data_path, schema, lopt, &report);

  std::vector<MergeLogEntry> merge_log;
  if (cfg.merge_rare) merge_log = merge_rare_levels(ds, cfg.merge_threshold);

  json rj;
  rj["rows_read"] = report.rows_read;
  rj["rows_dropped"] = report.rows_dropped;
  rj["rows_kept"] = ds.n_rows();
  rj["dropped_variables"] = report.dropped_variables;
  rj["warnings"] = report.warnings;
  rj["levels_merged"] = static_cast<int>(merge_log.size());
  if (cfg.standardize) {
    StandardizeParams sp = standardize(ds);
    rj["standardize"] = json{{"variables", sp.names},
                             {"means", sp.means},
                             {"sds", sp.sds}};
  }

  write_dataset_csv((out / "clean.csv").string(), ds);
  save_schema((out / "schema.json").string(), ds.schema);
  write_merge_log_csv((out / "merge_log.csv").string(), merge_log);
  write_text_file(out / "load_report.json", rj.dump(2) + "\n");

  json m = base_manifest("mfamd-preprocess", eff);
  m["data"] = json{{"n_rows", ds.n_rows()},
                   {"n_variables", ds.n_vars()},
                   {"n_latent_dims", ds.layout.D}};
  m["outputs"] = {"clean.csv", "schema.json", "merge_log.csv",
                  "load_report.json", "manifest.json"};
  const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
  write_timing(out, "preprocess", dt.count());
  write_manifest(out, std::move(m));
  return 0;
}

int cmd_fit(const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  require(!cfg.data_path.empty(), "config: field 'data' is required");
  require(!cfg.schema_path.empty(), "config: field 'schema' is required");
  require(cfg.seed_set, "config: field 'seed' is required");
  ensure_out_dir(cfg.out_dir);
  const json eff = effective_config(cfg, "fit");
  const fs::path out(cfg.out_dir);

  const std::vector<VariableSpec> schema = load_schema(cfg.schema_path);
  const MixedDataset ds = load_csv(cfg.data_path, schema);
  const PhaseSchedule schedule = schedule_from(cfg);
  const Priors priors = prior_settings(cfg).instantiate(cfg.G, cfg.Q);

  RngStream rng(cfg.seed);
  const FitResult res =
      fit(ds, cfg.G, cfg.Q, priors, schedule, rng, fit_options(cfg, "fit"));

  const std::vector<std::string> outputs =
      write_fit_artifacts(out, res, ds, store_meta(cfg, eff));
  const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
  write_timing(out, "fit", dt.count());
  decorate_store_manifest(out, eff, outputs);
  return 0;
}

int cmd_select(const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  require(!cfg.data_path.empty(), "config: field 'data' is required");
  require(!cfg.schema_path.empty(), "config: field 'schema' is required");
  require(cfg.seed_set, "config: field 'seed' is required");
  ensure_out_dir(cfg.out_dir);
  const json eff = effective_config(cfg, "select");
  const fs::path out(cfg.out_dir);

  const std::vector<VariableSpec> schema = load_schema(cfg.schema_path);
  const MixedDataset ds = load_csv(cfg.data_path, schema);
  const PhaseSchedule schedule = schedule_from(cfg);

  const GridResult grid =
      grid_search(ds, cfg.g_values, cfg.q_values, prior_settings(cfg), schedule,
                  cfg.seed, fit_options(cfg, "select"), cfg.workers);

  write_score_table_csv((out / "scores.csv").string(), grid.scores);
  CsvTable cells{{"G", "Q", "status", "note"}};
  for (const GridCell& c : grid.cells)
    cells.push_back({std::to_string(c.G), std::to_string(c.Q),
                     c.failed ? "failed" : "ok", c.note});
  write_csv_file((out / "grid_cells.csv").string(), cells);

  const fs::path best_dir = out / "best";
  ensure_out_dir(best_dir.string());
  const std::vector<std::string> best_outputs =
      write_fit_artifacts(best_dir, grid.best_fit, ds, store_meta(cfg, eff));
  decorate_store_manifest(best_dir, eff, best_outputs);

  json m = base_manifest("mfamd-select", eff);
  m["best"] = json{{"n_clusters", grid.best_fit.G},
                   {"n_factors", grid.best_fit.Q},
                   {"bic_mcmc", grid.best_fit.score.bic},
                   {"max_loglik", grid.best_fit.score.max_loglik},
                   {"n_parameters", grid.best_fit.score.nu},
                   {"n_retained", grid.best_fit.score.n_retained},
                   {"directory", "best"}};
  m["outputs"] = {"scores.csv", "grid_cells.csv", "best", "manifest.json"};
  const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
  write_timing(out, "select", dt.count());
  write_manifest(out, std::move(m));
  return 0;
}

std::vector<int> read_label_column(const std::string& path,
                                   const std::string& column) {
  const CsvTable table = read_csv_file(path);
  if (table.empty()) throw ConfigError("labels file " + path + " is empty");
  const std::vector<std::string>& header = table.front();
  int col = -1;
  for (size_t c = 0; c < header.size(); ++c)
    if (header[c] == column) {
      col = static_cast<int>(c);
      break;
    }
  if (col < 0) {
    std::string available;
    for (const std::string& h : header)
      available += (available.empty() ? "" : ", ") + h;
    throw ConfigError("labels file has no column '" + column +
                      "' (available: " + available + ")");
  }
  std::vector<int> labels;
  std::map<std::string, int> ids;
  for (size_t r = 1; r < table.size(); ++r) {
    const std::string& cell = table[r].at(static_cast<size_t>(col));
    const auto it = ids.emplace(cell, static_cast<int>(ids.size())).first;
    labels.push_back(it->second);
  }
  return labels;
}

int cmd_diagnose(const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  require(!cfg.store_dir.empty(), "config: field 'store' is required");
  ensure_out_dir(cfg.out_dir);
  const json eff = effective_config(cfg, "diagnose");
  const fs::path out(cfg.out_dir);

  const SampleStore store = read_sample_store(cfg.store_dir);
  std::vector<std::vector<int>> alloc_draws;
  alloc_draws.reserve(store.draws.size());
  for (const Draw& d : store.draws) alloc_draws.push_back(d.alloc);
  const MembershipSummary ms = membership_summary(alloc_draws, store.G);
  write_membership_csv((out / "membership.csv").string(), ms);

  std::vector<std::string> outputs{"membership.csv", "metrics.csv",
                                   "manifest.json"};

  CsvTable metrics{{"metric", "value"}};
  metrics.push_back({"n_rows", std::to_string(store.n_rows)});
  metrics.push_back({"n_draws", std::to_string(store.draws.size())});
  metrics.push_back({"n_clusters", std::to_string(store.G)});
  metrics.push_back({"mean_uncertainty",
                     format_double(ms.uncertainty.size() > 0
                                       ? ms.uncertainty.mean()
                                       : 0.0)});
  metrics.push_back({"max_uncertainty",
                     format_double(ms.uncertainty.size() > 0
                                       ? ms.uncertainty.maxCoeff()
                                       : 0.0)});
  metrics.push_back(
      {"uncertainty_bound", format_double(1.0 - 1.0 / store.G)});
  if (!cfg.labels_path.empty()) {
    const std::vector<int> labels =
        read_label_column(cfg.labels_path, cfg.label_column);
    if (static_cast<Eigen::Index>(labels.size()) != store.n_rows)
      throw ConfigError("labels file has " + std::to_string(labels.size()) +
                        " rows, store has " + std::to_string(store.n_rows));
    metrics.push_back(
        {"rand_index", format_double(rand_index(ms.hard, labels))});
    metrics.push_back({"adjusted_rand_index",
                       format_double(adjusted_rand_index(ms.hard, labels))});
  }
  write_csv_file((out / "metrics.csv").string(), metrics);

  // Residual draws are produced at fit time (they need the latent data);
  // carry the file over when the store has one.
  const fs::path stored_residuals = fs::path(cfg.store_dir) / "residuals.csv";
  if (fs::exists(stored_residuals)) {
    const fs::path target = out / "residuals.csv";
    if (!(fs::exists(target) && fs::equivalent(stored_residuals, target))) {
      fs::copy_file(stored_residuals, target,
                    fs::copy_options::overwrite_existing);
    }
    outputs.insert(outputs.begin() + 2, "residuals.csv");
  }

  json m = base_manifest("mfamd-diagnose", eff);
  m["store"] = json{{"n_clusters", store.G},
                    {"n_factors", store.Q},
                    {"n_rows", store.n_rows},
                    {"n_draws", store.draws.size()},
                    {"seed", store.meta.seed}};
  m["outputs"] = outputs;
  const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
  write_timing(out, "diagnose", dt.count());
  write_manifest(out, std::move(m));
  return 0;
}

int cmd_simulate(const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  require(cfg.seed_set, "config: field 'seed' is required");
  require(cfg.sim_rows > 0, "config: field 'simulate.n_rows' must be positive");
  ensure_out_dir(cfg.out_dir);
  const json eff = effective_config(cfg, "simulate");
  const fs::path out(cfg.out_dir);

  const TrueModel model = TrueModel::default_recovery_scenario();
  RngStream rng(cfg.seed);
  const SimulatedData sim = generate(model, cfg.sim_rows, rng);

  write_dataset_csv((out / "data.csv").string(), sim.ds);
  save_schema((out / "schema.json").string(), sim.ds.schema);

  CsvTable labels{{"row", "cluster"}};
  for (size_t i = 0; i < sim.alloc.size(); ++i)
    labels.push_back({std::to_string(i), std::to_string(sim.alloc[i] + 1)});
  write_csv_file((out / "true_labels.csv").string(), labels);

  json truth;
  truth["n_clusters"] = model.G;
  truth["n_factors"] = model.Q;
  truth["pi"] = vec_to_json(model.pi);
  truth["psi"] = vec_to_json(model.psi);
  json lt = json::array();
  for (const Eigen::MatrixXd& m : model.lambda_tilde) lt.push_back(mat_to_json(m));
  truth["lambda_tilde"] = lt;
  json noise = json::array();
  for (int v : model.noise_vars)
    noise.push_back(model.schema[static_cast<size_t>(v)].name);
  truth["noise_variables"] = noise;
  write_text_file(out / "true_params.json", truth.dump(2) + "\n");

  json m = base_manifest("mfamd-simulate", eff);
  m["data"] = json{{"n_rows", sim.ds.n_rows()},
                   {"n_variables", sim.ds.n_vars()},
                   {"n_latent_dims", sim.ds.layout.D}};
  m["outputs"] = {"data.csv", "schema.json", "true_labels.csv",
                  "true_params.json", "manifest.json"};
  const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
  write_timing(out, "simulate", dt.count());
  write_manifest(out, std::move(m));
  return 0;
}

// ---------------------------------------------------------------------------

// The config file must be applied before CLI11 assigns flag values (flags
// win), so --config is found by a pre-scan of argv.
std::string find_config_arg(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) return argv[i + 1];
    if (a.rfind("--config=", 0) == 0) return a.substr(9);
  }
  return {};
}

void add_common_options(CLI::App* sub, RunConfig& cfg, CLI::Option** seed_opt) {
  sub->add_option("--config", cfg.config_path,
                  "JSON config file; explicit flags override its values");
  sub->add_option("--out", cfg.out_dir,
                  "output directory (env MFAMD_OUT_DIR overrides config)");
  if (seed_opt)
    *seed_opt = sub->add_option("--seed", cfg.seed, "root RNG seed (required)");
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig cfg;
  CLI::App app{"mixture-of-factor-analyzers clustering for mixed data"};
  app.set_version_flag("--version", std::string("mfamd ") + kMfamdVersion);
  app.require_subcommand(1);

  try {
    const std::string config_path = find_config_arg(argc, argv);
    if (!config_path.empty()) {
      json j;
      try {
        j = json::parse(read_text_file(config_path));
      } catch (const json::exception& e) {
        throw ConfigError("config: cannot parse " + config_path + ": " +
                          e.what());
      }
      apply_config_json(cfg, j);
    }
    apply_env(cfg);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  CLI::Option* seed_fit = nullptr;
  CLI::Option* seed_select = nullptr;
  CLI::Option* seed_sim = nullptr;

  CLI::App* pre = app.add_subcommand(
      "preprocess", "validate, filter, merge and standardize a raw CSV");
  add_common_options(pre, cfg, nullptr);
  pre->add_option("--data", cfg.data_path, "raw CSV with header row");
  pre->add_option("--schema", cfg.schema_path, "schema JSON");
  pre->add_flag("--standardize,!--no-standardize", cfg.standardize,
                "center and scale continuous variables (default on)");
  pre->add_flag("--merge-rare,!--no-merge-rare", cfg.merge_rare,
                "merge rare third genotype levels to binary (default on)");
  pre->add_option("--merge-threshold", cfg.merge_threshold,
                  "rare-level frequency threshold (default 0.10)");
  pre->add_option("--max-missing", cfg.max_missing,
                  "drop variables with more missing raw cells (default off)");
  pre->add_flag("--error-on-unobserved-level", cfg.error_on_unobserved_level,
                "fail instead of dropping categorical variables with an "
                "unobserved level");

  CLI::App* fit_cmd = app.add_subcommand(
      "fit", "run the three-phase sampler for a single (G, Q)");
  add_common_options(fit_cmd, cfg, &seed_fit);
  fit_cmd->add_option("--data", cfg.data_path, "preprocessed CSV");
  fit_cmd->add_option("--schema", cfg.schema_path, "schema JSON");
  fit_cmd->add_option("-G,--clusters", cfg.G, "number of clusters");
  fit_cmd->add_option("-Q,--factors", cfg.Q, "number of latent factors");

  CLI::App* sel = app.add_subcommand(
      "select", "fit a (G, Q) grid and keep the best BIC-MCMC model");
  add_common_options(sel, cfg, &seed_select);
  sel->add_option("--data", cfg.data_path, "preprocessed CSV");
  sel->add_option("--schema", cfg.schema_path, "schema JSON");
  sel->add_option("--g-values", cfg.g_values, "cluster counts to try")
      ->delimiter(',');
  sel->add_option("--q-values", cfg.q_values, "factor counts to try")
      ->delimiter(',');
  sel->add_option("--workers", cfg.workers,
                  "concurrent grid cells (env MFAMD_WORKERS overrides config)");

  CLI::App* dia = app.add_subcommand(
      "diagnose", "membership, uncertainty and agreement tables from a store");
  add_common_options(dia, cfg, nullptr);
  dia->add_option("--store", cfg.store_dir, "sample store directory (fit output)");
  dia->add_option("--labels", cfg.labels_path,
                  "CSV with reference labels for Rand/adjusted Rand");
  dia->add_option("--label-column", cfg.label_column,
                  "label column name (default 'cluster')");

  CLI::App* sim = app.add_subcommand(
      "simulate", "draw a dataset from the built-in two-cluster scenario");
  add_common_options(sim, cfg, &seed_sim);
  sim->add_option("--n-rows", cfg.sim_rows, "observations to draw (default 500)");

  // Shared schedule / prior / execution flags on the sampling commands.
  for (CLI::App* sub : {fit_cmd, sel}) {
    sub->add_option("--burn-in", cfg.burn_in_iters, "burn-in sweeps");
    sub->add_option("--check-every", cfg.varsel_check_every,
                    "sweeps between selection checks");
    sub->add_option("--stop-after-clean", cfg.varsel_stop_after_clean,
                    "consecutive clean checks that end selection");
    sub->add_option("--posterior", cfg.posterior_iters, "posterior sweeps");
    sub->add_option("--thin", cfg.thin, "keep every thin-th sweep");
    sub->add_option("--dirichlet-alpha", cfg.dirichlet_alpha,
                    "mixing-weight prior concentration");
    sub->add_option("--lambda-scale", cfg.lambda_scale,
                    "loading prior covariance scale");
    sub->add_option("--psi-shape", cfg.psi_shape, "uniqueness prior shape");
    sub->add_option("--psi-scale", cfg.psi_scale, "uniqueness prior scale");
    sub->add_flag("--varsel,!--no-varsel", cfg.varsel_enabled,
                  "variance-ratio variable selection (default on)");
    sub->add_option("--epsilon-continuous", cfg.epsilon_continuous,
                    "removal threshold for continuous variables");
    sub->add_option("--epsilon-categorical", cfg.epsilon_categorical,
                    "removal threshold for categorical variables");
    sub->add_flag("--fuzzy-variance-ratio", cfg.fuzzy_variance_ratio,
                  "weight selection sums by membership probabilities");
    sub->add_flag("--parallel,!--sequential", cfg.parallel,
                  "block-parallel sweep kernels (default sequential)");
    sub->add_flag("--kmeans-warm-start", cfg.kmeans_warm_start,
                  "initialize allocations by k-means on the latent data");
    sub->add_flag("--literal-psi-residuals", cfg.literal_psi_residuals,
                  "divide residuals by the uniqueness instead of its root");
    sub->add_flag("--conditional-allocations", cfg.alloc_conditional_on_theta,
                  "condition allocation updates on the latent traits");
    sub->add_option("--residual-rows", cfg.residual_rows,
                    "observations in the residual export");
    sub->add_option("--heartbeat-every", cfg.heartbeat_every,
                    "sweeps between progress lines (0 disables)");
  }

  CLI11_PARSE(app, argc, argv);

  if (seed_fit && seed_fit->count() > 0) cfg.seed_set = true;
  if (seed_select && seed_select->count() > 0) cfg.seed_set = true;
  if (seed_sim && seed_sim->count() > 0) cfg.seed_set = true;

  try {
    if (app.got_subcommand(pre)) return cmd_preprocess(cfg);
    if (app.got_subcommand(fit_cmd)) return cmd_fit(cfg);
    if (app.got_subcommand(sel)) return cmd_select(cfg);
    if (app.got_subcommand(dia)) return cmd_diagnose(cfg);
    if (app.got_subcommand(sim)) return cmd_simulate(cfg);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
