#include "mfamd/select.hpp"

#include <algorithm>
#include <cmath>

#include "mfamd/csv.hpp"
#include "mfamd/data.hpp"
#include "mfamd/errors.hpp"
#include "mfamd/identify.hpp"

namespace mfamd {

CategoricalTable empirical_category_probs(const MixedDataset& ds, int var,
                                          const std::vector<int>& alloc, int G) {
  if (var < 0 || var >= ds.n_vars() || ds.cat_col[var] < 0)
    throw DimensionError("empirical_category_probs: not a categorical variable");
  if (static_cast<int>(alloc.size()) != ds.n_rows())
    throw DimensionError("empirical_category_probs: allocation length mismatch");
  const int K = ds.schema[var].n_levels();
  const int c = ds.cat_col[var];

  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(G, K);
  for (int i = 0; i < ds.n_rows(); ++i) {
    const int g = alloc[i];
    if (g < 0 || g >= G) throw DimensionError("empirical_category_probs: bad label");
    counts(g, ds.codes(i, c)) += 1.0;
  }
  CategoricalTable table;
  table.var = var;
  table.probs.resize(G, K);
  for (int g = 0; g < G; ++g) {
    const double n = counts.row(g).sum();
    if (counts.row(g).minCoeff() > 0.0) {
      table.probs.row(g) = counts.row(g) / n;
    } else {
      // A zero cell would send the log likelihood to -inf for a code the
      // cluster never held; add-1/2 keeps every level possible.
      table.probs.row(g) = (counts.row(g).array() + 0.5) / (n + 0.5 * K);
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// Noise block
// ---------------------------------------------------------------------------

void fit_noise_fa(const Eigen::MatrixXd& values, int Q, double psi_shape,
                  double psi_scale, RngStream& rng, const NoiseFaSchedule& sched,
                  NoiseBlock* out) {
  const int N = static_cast<int>(values.rows());
  const int D = static_cast<int>(values.cols());
  if (N < 2 || D < 1) throw DimensionError("fit_noise_fa: need at least 2 rows, 1 column");
  // A factor dimension above the column count adds nothing the uniquenesses
  // cannot express; cap it so the sampler stays well posed.
  const int q = std::min(Q, D);

  std::vector<VariableSpec> schema(D);
  for (int d = 0; d < D; ++d) schema[d] = {"noise_" + std::to_string(d),
                                           VarKind::Continuous, {}, false};
  MixedDataset ds = make_dataset(std::move(schema), values, Eigen::MatrixXi(N, 0));
  Priors priors = Priors::defaults(1, q);
  priors.psi_shape = psi_shape;
  priors.psi_scale = psi_scale;

  // Assembled by hand rather than via init_state: a one-column noise block
  // legitimately runs with q == D, which the mixture entry point rejects.
  MCMCState st;
  st.G = 1;
  st.Q = q;
  st.Z = ds.continuous;
  st.theta.resize(N, q);
  for (int i = 0; i < N; ++i)
    for (int k = 0; k < q; ++k) st.theta(i, k) = rng.normal();
  st.alloc.assign(N, 0);
  st.pi = Eigen::VectorXd::Ones(1);
  st.lambda_tilde.assign(1, Eigen::MatrixXd(D, q + 1));
  for (int d = 0; d < D; ++d)
    st.lambda_tilde[0].row(d) =
        sample_mvn(priors.lambda_mean, priors.lambda_cov, rng).transpose();
  st.psi = Eigen::VectorXd::Ones(D);
  st.var_active.assign(D, 1);

  auto sweep = [&] {
    ++st.sweep_id;
    update_latent_traits(st, ds, rng);
    update_item_parameters(st, ds, priors, rng);
    update_uniquenesses(st, ds, priors, rng);
  };
  for (int t = 0; t < sched.burn_in_iters; ++t) sweep();

  std::vector<Draw> draws;
  for (int t = 1; t <= sched.iters; ++t) {
    sweep();
    if (t % sched.thin != 0) continue;
    Draw d;
    d.pi = st.pi;
    d.lambda_tilde = {st.lambda_tilde[0]};
    d.psi = st.psi;
    d.alloc = st.alloc;
    const LowRankGaussian lrg(st.lambda_tilde[0].col(0),
                              st.lambda_tilde[0].rightCols(q), st.psi);
    d.loglik = 0.0;
    for (int i = 0; i < N; ++i) d.loglik += lrg.logpdf(values.row(i).transpose());
    draws.push_back(std::move(d));
  }

  if (draws.empty()) throw ConfigError("fit_noise_fa: schedule kept no draws");

  out->rotation_aligned = true;
  try {
    align_loadings(draws);
  } catch (const RankDeficientTemplateError&) {
    out->rotation_aligned = false;
  }

  Eigen::VectorXd mu = Eigen::VectorXd::Zero(D);
  Eigen::MatrixXd lambda = Eigen::MatrixXd::Zero(D, q);
  Eigen::VectorXd psi = Eigen::VectorXd::Zero(D);
  for (const Draw& d : draws) {
    mu += d.lambda_tilde[0].col(0);
    lambda += d.lambda_tilde[0].rightCols(q);
    psi += d.psi;
  }
  const double nd = static_cast<double>(draws.size());
  out->mu = mu / nd;
  out->lambda = lambda / nd;
  out->psi = psi / nd;
}

NoiseBlock build_noise_block(const MCMCState& st, const MixedDataset& ds,
                             const Priors& priors, RngStream& rng,
                             const NoiseFaSchedule& sched) {
  NoiseBlock noise;
  for (int j = 0; j < ds.n_vars(); ++j) {
    if (st.var_active[j]) continue;
    if (ds.cont_col[j] >= 0)
      noise.removed_cont_vars.push_back(j);
    else
      noise.removed_cat_vars.push_back(j);
  }
  const int N = ds.n_rows();
  const std::vector<int> pooled(N, 0);
  for (int j : noise.removed_cat_vars)
    noise.cat_probs.push_back(empirical_category_probs(ds, j, pooled, 1));

  if (!noise.removed_cont_vars.empty()) {
    Eigen::MatrixXd values(N, noise.removed_cont_vars.size());
    for (size_t a = 0; a < noise.removed_cont_vars.size(); ++a)
      values.col(a) = ds.continuous.col(ds.cont_col[noise.removed_cont_vars[a]]);
    fit_noise_fa(values, st.Q, priors.psi_shape, priors.psi_scale, rng, sched, &noise);
  }

  // Total noise factor of the likelihood; constant across posterior draws.
  noise.loglik = 0.0;
  if (!noise.removed_cont_vars.empty()) {
    const LowRankGaussian lrg(noise.mu, noise.lambda, noise.psi);
    for (int i = 0; i < N; ++i) {
      Eigen::VectorXd y(noise.removed_cont_vars.size());
      for (size_t a = 0; a < noise.removed_cont_vars.size(); ++a)
        y[a] = ds.continuous(i, ds.cont_col[noise.removed_cont_vars[a]]);
      noise.loglik += lrg.logpdf(y);
    }
  }
  for (size_t t = 0; t < noise.removed_cat_vars.size(); ++t) {
    const int c = ds.cat_col[noise.removed_cat_vars[t]];
    for (int i = 0; i < N; ++i)
      noise.loglik += std::log(noise.cat_probs[t].probs(0, ds.codes(i, c)));
  }
  return noise;
}

// ---------------------------------------------------------------------------
// Likelihood and score
// ---------------------------------------------------------------------------

double approx_loglik(const MCMCState& st, const MixedDataset& ds,
                     const NoiseBlock& noise) {
  const LatentLayout& lay = ds.layout;
  const int N = st.n_rows();
  const int G = st.G;

  const std::vector<int> cont_dims = st.active_continuous_dims(lay);
  const int nc = static_cast<int>(cont_dims.size());
  std::vector<LowRankGaussian> comp;
  if (nc > 0) {
    comp.reserve(G);
    for (int g = 0; g < G; ++g) {
      Eigen::VectorXd mu(nc), psi(nc);
      Eigen::MatrixXd lam(nc, st.Q);
      for (int a = 0; a < nc; ++a) {
        mu[a] = st.lambda_tilde[g](cont_dims[a], 0);
        lam.row(a) = st.lambda_tilde[g].row(cont_dims[a]).tail(st.Q);
        psi[a] = st.psi[cont_dims[a]];
      }
      comp.emplace_back(std::move(mu), std::move(lam), std::move(psi));
    }
  }

  std::vector<CategoricalTable> tables;
  std::vector<int> table_col;
  for (int j = 0; j < ds.n_vars(); ++j)
    if (st.var_active[j] && ds.cat_col[j] >= 0) {
      tables.push_back(empirical_category_probs(ds, j, st.alloc, G));
      table_col.push_back(ds.cat_col[j]);
    }

  const Eigen::VectorXd logpi = st.pi.array().log();
  double total = 0.0;
  for (int i = 0; i < N; ++i) {
    Eigen::VectorXd z;
    if (nc > 0) {
      z.resize(nc);
      for (int a = 0; a < nc; ++a) z[a] = st.Z(i, cont_dims[a]);
    }
    double best = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd lg(G);
    for (int g = 0; g < G; ++g) {
      double acc = logpi[g];
      if (nc > 0) acc += comp[g].logpdf(z);
      for (size_t t = 0; t < tables.size(); ++t)
        acc += std::log(tables[t].probs(g, ds.codes(i, table_col[t])));
      lg[g] = acc;
      best = std::max(best, acc);
    }
    total += best + std::log((lg.array() - best).exp().sum());
  }
  return total + noise.loglik;
}

long count_parameters(int G, int Q, const MixedDataset& ds,
                      const std::vector<char>& var_active) {
  if (var_active.size() != ds.schema.size())
    throw DimensionError("count_parameters: mask length mismatch");
  long ret_cont = 0, rem_cont = 0, ret_cat_cells = 0, rem_cat_cells = 0;
  for (int j = 0; j < ds.n_vars(); ++j) {
    const bool cont = ds.cont_col[j] >= 0;
    const long cells = cont ? 0 : ds.schema[j].n_levels() - 1;
    if (var_active[j]) {
      ret_cont += cont ? 1 : 0;
      ret_cat_cells += cells;
    } else {
      rem_cont += cont ? 1 : 0;
      rem_cat_cells += cells;
    }
  }
  const long q_eff = std::min<long>(Q, ret_cont);
  long nu = G - 1;
  nu += G * (ret_cont + ret_cont * q_eff) + ret_cont;
  nu += G * ret_cat_cells;
  if (rem_cont > 0) {
    // The noise factor analysis caps its factor dimension at the column
    // count, so its parameter count does too.
    const long q_noise = std::min<long>(Q, rem_cont);
    nu += rem_cont + rem_cont * q_noise + rem_cont;
  }
  nu += rem_cat_cells;
  return nu;
}

double bic_mcmc(const std::vector<double>& logliks, long nu, int n_rows) {
  if (logliks.empty()) throw DimensionError("bic_mcmc: no log likelihood draws");
  if (n_rows < 1) throw DimensionError("bic_mcmc: need n_rows >= 1");
  const double max_ll = *std::max_element(logliks.begin(), logliks.end());
  return 2.0 * max_ll - static_cast<double>(nu) * std::log(static_cast<double>(n_rows));
}

void write_score_table_csv(const std::string& path, const std::vector<ModelScore>& scores) {
  CsvTable table;
  table.push_back({"G", "Q", "max_loglik", "nu", "bic_mcmc", "n_retained"});
  for (const auto& s : scores)
    table.push_back({std::to_string(s.G), std::to_string(s.Q),
                     format_double(s.max_loglik), std::to_string(s.nu),
                     format_double(s.bic), std::to_string(s.n_retained)});
  write_csv_file(path, table);
}

}  // namespace mfamd
