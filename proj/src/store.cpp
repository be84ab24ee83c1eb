#include "mfamd/store.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "mfamd/errors.hpp"
#include "mfamd/version.hpp"

namespace mfamd {

namespace {

using nlohmann::json;

constexpr int kFormatVersion = 1;

// All arrays are stored little endian regardless of host order.
void append_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_f64_le(std::string& out, double v) {
  append_u64_le(out, std::bit_cast<std::uint64_t>(v));
}

void append_i32_le(std::string& out, std::int32_t v) {
  auto u = static_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

double read_f64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return std::bit_cast<double>(v);
}

std::int32_t read_i32_le(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return static_cast<std::int32_t>(v);
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return bytes;
}

json schedule_to_json(const PhaseSchedule& s) {
  return json{{"burn_in_iters", s.burn_in_iters},
              {"varsel_check_every", s.varsel_check_every},
              {"varsel_stop_after_clean", s.varsel_stop_after_clean},
              {"posterior_iters", s.posterior_iters},
              {"thin", s.thin}};
}

PhaseSchedule schedule_from_json(const json& j) {
  PhaseSchedule s;
  s.burn_in_iters = j.at("burn_in_iters").get<int>();
  s.varsel_check_every = j.at("varsel_check_every").get<int>();
  s.varsel_stop_after_clean = j.at("varsel_stop_after_clean").get<int>();
  s.posterior_iters = j.at("posterior_iters").get<int>();
  s.thin = j.at("thin").get<int>();
  return s;
}

}  // namespace

void write_sample_store(const std::string& dir, const FitResult& fit,
                        const MixedDataset& data, const StoreMeta& meta) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());

  const auto n_draws = static_cast<long>(fit.draws.size());
  const int G = fit.G;
  const int Q = fit.Q;
  const auto n_dims = static_cast<long>(fit.retained_dims.size());
  const auto n_cont = static_cast<long>(fit.retained_cont_dims.size());
  const Eigen::Index N = data.n_rows();

  std::string pi_bytes, lambda_bytes, psi_bytes, alloc_bytes, loglik_bytes;
  pi_bytes.reserve(static_cast<std::size_t>(n_draws) * G * 8);
  lambda_bytes.reserve(static_cast<std::size_t>(n_draws) * G * n_dims * (Q + 1) * 8);
  psi_bytes.reserve(static_cast<std::size_t>(n_draws) * n_cont * 8);
  alloc_bytes.reserve(static_cast<std::size_t>(n_draws) * static_cast<std::size_t>(N) * 4);
  loglik_bytes.reserve(static_cast<std::size_t>(n_draws) * 8);

  for (const Draw& d : fit.draws) {
    if (d.pi.size() != G || static_cast<int>(d.lambda_tilde.size()) != G ||
        d.psi.size() != n_cont || static_cast<long>(d.alloc.size()) != N)
      throw DimensionError("draw shape does not match the fit result header");
    for (int g = 0; g < G; ++g) append_f64_le(pi_bytes, d.pi[g]);
    for (int g = 0; g < G; ++g) {
      const Eigen::MatrixXd& lt = d.lambda_tilde[g];
      if (lt.rows() != n_dims || lt.cols() != Q + 1)
        throw DimensionError("loading block shape does not match the header");
      for (long r = 0; r < n_dims; ++r)
        for (int c = 0; c < Q + 1; ++c) append_f64_le(lambda_bytes, lt(r, c));
    }
    for (long k = 0; k < n_cont; ++k) append_f64_le(psi_bytes, d.psi[k]);
    for (int a : d.alloc) append_i32_le(alloc_bytes, static_cast<std::int32_t>(a));
    append_f64_le(loglik_bytes, d.loglik);
  }

  std::vector<std::string> retained_names;
  retained_names.reserve(fit.retained_vars.size());
  for (int j : fit.retained_vars) retained_names.push_back(data.schema[j].name);

  json manifest;
  manifest["kind"] = "mfamd-sample-store";
  manifest["version"] = kMfamdVersion;
  manifest["format_version"] = kFormatVersion;
  manifest["model"] = json{{"n_clusters", G}, {"n_factors", Q}};
  manifest["data"] = json{{"n_rows", N},
                          {"n_variables_total", static_cast<long>(data.schema.size())},
                          {"n_latent_dims_total", data.layout.D}};
  manifest["retained"] = json{{"variables", retained_names},
                              {"variable_indices", fit.retained_vars},
                              {"latent_dims", fit.retained_dims},
                              {"continuous_latent_dims", fit.retained_cont_dims}};
  manifest["chain"] = json{{"seed", meta.seed},
                           {"schedule", schedule_to_json(meta.schedule)},
                           {"n_draws", n_draws},
                           {"total_sweeps", fit.total_sweeps}};
  manifest["flags"] = json{{"parallel", meta.parallel},
                           {"varsel_enabled", meta.varsel_enabled},
                           {"kmeans_warm_start", meta.kmeans_warm_start},
                           {"fuzzy_variance_ratio", meta.fuzzy_variance_ratio},
                           {"literal_psi_residuals", meta.literal_psi_residuals},
                           {"alloc_conditional_on_theta", meta.alloc_conditional_on_theta}};
  manifest["score"] = json{{"max_loglik", fit.score.max_loglik},
                           {"n_parameters", fit.score.nu},
                           {"bic_mcmc", fit.score.bic},
                           {"n_retained", fit.score.n_retained}};
  manifest["files"] = json{{"pi", "pi.f64"},
                           {"lambda", "lambda.f64"},
                           {"psi", "psi.f64"},
                           {"alloc", "alloc.i32"},
                           {"loglik", "loglik.f64"}};
  if (!meta.config_hash.empty()) manifest["config_hash"] = meta.config_hash;

  const fs::path root(dir);
  write_file(root / "pi.f64", pi_bytes);
  write_file(root / "lambda.f64", lambda_bytes);
  write_file(root / "psi.f64", psi_bytes);
  write_file(root / "alloc.i32", alloc_bytes);
  write_file(root / "loglik.f64", loglik_bytes);
  write_file(root / "manifest.json", manifest.dump(2) + "\n");
}

SampleStore read_sample_store(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);

  json manifest;
  try {
    manifest = json::parse(read_file(root / "manifest.json"));
  } catch (const json::exception& e) {
    throw IoError("cannot parse manifest.json in " + dir + ": " + e.what());
  }

  SampleStore st;
  try {
    if (manifest.at("kind").get<std::string>() != "mfamd-sample-store")
      throw IoError(dir + " is not a sample store");
    st.format_version = manifest.at("format_version").get<int>();
    if (st.format_version != kFormatVersion)
      throw IoError("unsupported store format version " +
                    std::to_string(st.format_version));
    st.G = manifest.at("model").at("n_clusters").get<int>();
    st.Q = manifest.at("model").at("n_factors").get<int>();
    st.n_rows = manifest.at("data").at("n_rows").get<Eigen::Index>();
    const json& ret = manifest.at("retained");
    st.retained_variables = ret.at("variables").get<std::vector<std::string>>();
    st.retained_variable_indices = ret.at("variable_indices").get<std::vector<int>>();
    st.retained_dims = ret.at("latent_dims").get<std::vector<int>>();
    st.retained_cont_dims = ret.at("continuous_latent_dims").get<std::vector<int>>();
    const json& chain = manifest.at("chain");
    st.meta.seed = chain.at("seed").get<std::uint64_t>();
    st.meta.schedule = schedule_from_json(chain.at("schedule"));
    st.total_sweeps = chain.at("total_sweeps").get<long>();
    const json& flags = manifest.at("flags");
    st.meta.parallel = flags.at("parallel").get<bool>();
    st.meta.varsel_enabled = flags.at("varsel_enabled").get<bool>();
    st.meta.kmeans_warm_start = flags.at("kmeans_warm_start").get<bool>();
    st.meta.fuzzy_variance_ratio = flags.at("fuzzy_variance_ratio").get<bool>();
    st.meta.literal_psi_residuals = flags.at("literal_psi_residuals").get<bool>();
    st.meta.alloc_conditional_on_theta =
        flags.at("alloc_conditional_on_theta").get<bool>();
    if (manifest.contains("config_hash"))
      st.meta.config_hash = manifest.at("config_hash").get<std::string>();
    const json& score = manifest.at("score");
    st.score.G = st.G;
    st.score.Q = st.Q;
    st.score.max_loglik = score.at("max_loglik").get<double>();
    st.score.nu = score.at("n_parameters").get<long>();
    st.score.bic = score.at("bic_mcmc").get<double>();
    st.score.n_retained = score.at("n_retained").get<int>();

    const long n_draws = chain.at("n_draws").get<long>();
    const int G = st.G;
    const int Q = st.Q;
    const auto n_dims = static_cast<long>(st.retained_dims.size());
    const auto n_cont = static_cast<long>(st.retained_cont_dims.size());
    const long N = static_cast<long>(st.n_rows);

    const std::string pi_bytes = read_file(root / "pi.f64");
    const std::string lambda_bytes = read_file(root / "lambda.f64");
    const std::string psi_bytes = read_file(root / "psi.f64");
    const std::string alloc_bytes = read_file(root / "alloc.i32");
    const std::string loglik_bytes = read_file(root / "loglik.f64");

    auto expect = [&](const std::string& bytes, std::size_t want,
                      const char* name) {
      if (bytes.size() != want)
        throw IoError(std::string(name) + " has " + std::to_string(bytes.size()) +
                      " bytes, expected " + std::to_string(want));
    };
    const auto ud = static_cast<std::size_t>(n_draws);
    expect(pi_bytes, ud * G * 8, "pi.f64");
    expect(lambda_bytes, ud * G * static_cast<std::size_t>(n_dims) * (Q + 1) * 8,
           "lambda.f64");
    expect(psi_bytes, ud * static_cast<std::size_t>(n_cont) * 8, "psi.f64");
    expect(alloc_bytes, ud * static_cast<std::size_t>(N) * 4, "alloc.i32");
    expect(loglik_bytes, ud * 8, "loglik.f64");

    const auto* pi_p = reinterpret_cast<const unsigned char*>(pi_bytes.data());
    const auto* lam_p = reinterpret_cast<const unsigned char*>(lambda_bytes.data());
    const auto* psi_p = reinterpret_cast<const unsigned char*>(psi_bytes.data());
    const auto* alloc_p = reinterpret_cast<const unsigned char*>(alloc_bytes.data());
    const auto* ll_p = reinterpret_cast<const unsigned char*>(loglik_bytes.data());

    st.draws.resize(static_cast<std::size_t>(n_draws));
    for (long t = 0; t < n_draws; ++t) {
      Draw& d = st.draws[static_cast<std::size_t>(t)];
      d.pi.resize(G);
      for (int g = 0; g < G; ++g) d.pi[g] = read_f64_le(pi_p), pi_p += 8;
      d.lambda_tilde.assign(static_cast<std::size_t>(G),
                            Eigen::MatrixXd(n_dims, Q + 1));
      for (int g = 0; g < G; ++g)
        for (long r = 0; r < n_dims; ++r)
          for (int c = 0; c < Q + 1; ++c)
            d.lambda_tilde[g](r, c) = read_f64_le(lam_p), lam_p += 8;
      d.psi.resize(n_cont);
      for (long k = 0; k < n_cont; ++k) d.psi[k] = read_f64_le(psi_p), psi_p += 8;
      d.alloc.resize(static_cast<std::size_t>(N));
      for (long i = 0; i < N; ++i)
        d.alloc[static_cast<std::size_t>(i)] = read_i32_le(alloc_p), alloc_p += 4;
      d.loglik = read_f64_le(ll_p), ll_p += 8;
    }
  } catch (const json::exception& e) {
    throw IoError("malformed manifest.json in " + dir + ": " + e.what());
  }
  return st;
}

}  // namespace mfamd
