#include "mfamd/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mfamd/errors.hpp"

namespace mfamd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Kernel ids for substream derivation; distinct per drawing kernel.
enum KernelId : std::uint64_t { kLatentData = 1, kLatentTraits = 2, kAllocDraw = 3 };

// Contiguous observation blocks of near-equal size.
std::vector<std::pair<int, int>> make_blocks(int n_rows, int n_blocks) {
  n_blocks = std::clamp(n_blocks, 1, std::max(1, n_rows));
  std::vector<std::pair<int, int>> blocks;
  blocks.reserve(n_blocks);
  const int base = n_rows / n_blocks, extra = n_rows % n_blocks;
  int start = 0;
  for (int b = 0; b < n_blocks; ++b) {
    const int len = base + (b < extra ? 1 : 0);
    blocks.emplace_back(start, start + len);
    start += len;
  }
  return blocks;
}

inline Eigen::VectorXd theta_tilde(const MCMCState& st, int i) {
  Eigen::VectorXd tt(st.Q + 1);
  tt[0] = 1.0;
  tt.tail(st.Q) = st.theta.row(i).transpose();
  return tt;
}

// Runs fn(i, rng) for every row. Serial: one pass with the chain RNG.
// Parallel: fixed blocks with per-block substreams keyed by the state's
// rng_epoch, scheduled across whatever threads OpenMP provides.
template <typename Fn>
void for_each_row(MCMCState& st, RngStream& rng, const SweepOptions& opt,
                  KernelId kernel, Fn&& fn) {
  ++st.rng_epoch;
  const int N = st.n_rows();
  if (!opt.parallel) {
    for (int i = 0; i < N; ++i) fn(i, rng);
    return;
  }
  const auto blocks = make_blocks(N, opt.n_blocks);
  const int nb = static_cast<int>(blocks.size());
#pragma omp parallel for schedule(dynamic)
  for (int b = 0; b < nb; ++b) {
    RngStream local = rng.substream(st.rng_epoch * 16 + kernel, static_cast<std::uint64_t>(b));
    for (int i = blocks[b].first; i < blocks[b].second; ++i) fn(i, local);
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Priors and schedule
// ---------------------------------------------------------------------------

Priors Priors::defaults(int G, int Q) {
  Priors p;
  p.dirichlet_alpha = Eigen::VectorXd::Constant(G, 0.5);
  p.lambda_mean = Eigen::VectorXd::Zero(Q + 1);
  p.lambda_cov = 5.0 * Eigen::MatrixXd::Identity(Q + 1, Q + 1);
  return p;
}

void Priors::validate(int G, int Q) const {
  if (dirichlet_alpha.size() != G)
    throw DimensionError("priors: dirichlet_alpha must have length G");
  for (int g = 0; g < G; ++g)
    if (!(dirichlet_alpha[g] > 0.0))
      throw NonPositiveParameterError("priors: dirichlet_alpha must be > 0");
  if (lambda_mean.size() != Q + 1 || lambda_cov.rows() != Q + 1 ||
      lambda_cov.cols() != Q + 1)
    throw DimensionError("priors: item parameter prior must have dimension Q+1");
  if (Eigen::LLT<Eigen::MatrixXd>(lambda_cov).info() != Eigen::Success)
    throw NonSpdCovarianceError("priors: lambda_cov is not SPD");
  if (!(psi_shape > 0.0) || !(psi_scale > 0.0))
    throw NonPositiveParameterError("priors: psi shape/scale must be > 0");
}

void PhaseSchedule::validate() const {
  if (burn_in_iters < 0 || varsel_check_every <= 0 || varsel_stop_after_clean <= 0 ||
      posterior_iters <= 0 || thin <= 0)
    throw ConfigError("schedule: iteration counts must be positive");
  if (posterior_iters % thin != 0)
    throw ConfigError("schedule: thin must divide posterior_iters");
}

// ---------------------------------------------------------------------------
// State
// ---------------------------------------------------------------------------

std::vector<int> MCMCState::active_vars() const {
  std::vector<int> out;
  for (size_t j = 0; j < var_active.size(); ++j)
    if (var_active[j]) out.push_back(static_cast<int>(j));
  return out;
}

std::vector<int> MCMCState::active_dims(const LatentLayout& lay) const {
  std::vector<int> out;
  for (int d = 0; d < lay.D; ++d)
    if (var_active[lay.dim_var[d]]) out.push_back(d);
  return out;
}

std::vector<int> MCMCState::active_continuous_dims(const LatentLayout& lay) const {
  std::vector<int> out;
  for (int d = 0; d < lay.D; ++d)
    if (var_active[lay.dim_var[d]] && lay.dim_is_continuous[d]) out.push_back(d);
  return out;
}

std::vector<int> MCMCState::cluster_sizes() const {
  std::vector<int> n(G, 0);
  for (int a : alloc) ++n[a];
  return n;
}

MCMCState init_state(const MixedDataset& ds, int G, int Q, const Priors& priors,
                     RngStream& rng) {
  const int N = ds.n_rows();
  const int D = ds.layout.D;
  if (N == 0) throw EmptyDatasetError("init_state: no rows");
  if (G < 1) throw DimensionError("init_state: G must be >= 1");
  if (Q < 1 || Q >= D) throw DimensionError("init_state: need 1 <= Q < D");
  priors.validate(G, Q);

  MCMCState st;
  st.G = G;
  st.Q = Q;
  st.Z = Eigen::MatrixXd::Zero(N, D);
  for (int j = 0; j < ds.n_vars(); ++j)
    if (ds.cont_col[j] >= 0)
      st.Z.col(ds.layout.offset[j]) = ds.continuous.col(ds.cont_col[j]);
  st.theta.resize(N, Q);
  for (int i = 0; i < N; ++i)
    for (int q = 0; q < Q; ++q) st.theta(i, q) = rng.normal();
  st.alloc.resize(N);
  for (int i = 0; i < N; ++i)
    st.alloc[i] = G == 1 ? 0 : static_cast<int>(rng.uniform_index(G));
  st.pi = Eigen::VectorXd::Constant(G, 1.0 / G);
  st.lambda_tilde.assign(G, Eigen::MatrixXd(D, Q + 1));
  for (int g = 0; g < G; ++g)
    for (int d = 0; d < D; ++d)
      st.lambda_tilde[g].row(d) = sample_mvn(priors.lambda_mean, priors.lambda_cov, rng).transpose();
  st.psi = Eigen::VectorXd::Ones(D);
  st.var_active.assign(ds.n_vars(), 1);

  // Draw the categorical latents from their truncated conditionals so the
  // sign/argmax invariants hold from sweep zero.
  update_latent_data(st, ds, rng);
  return st;
}

MCMCState init_state_kmeans(const MixedDataset& ds, int G, int Q, const Priors& priors,
                            RngStream& rng) {
  MCMCState st = init_state(ds, G, Q, priors, rng);
  if (G == 1) return st;
  const int N = st.n_rows();

  // Cluster on column-standardized latents. At initialization the
  // categorical columns are drawn under prior-scale loadings and can carry
  // many times the variance of the data-pinned continuous columns, dragging
  // k-means toward meaningless high-variance directions.
  Eigen::MatrixXd Zs = st.Z;
  for (Eigen::Index c = 0; c < Zs.cols(); ++c) {
    const double mean = Zs.col(c).mean();
    Zs.col(c).array() -= mean;
    const double sd =
        std::sqrt(Zs.col(c).squaredNorm() / std::max(1, N - 1));
    if (sd > 0.0) Zs.col(c) /= sd;
  }

  // Several Lloyd restarts with distance-weighted seeding, keeping the
  // assignment with the lowest within-cluster sum of squares. A single
  // uniformly seeded run can place two centers inside one true cluster and
  // converge to a split of that cluster, which poisons the warm start.
  const int restarts = 8;
  Eigen::MatrixXd centers(G, Zs.cols());
  std::vector<double> dist2(N);
  std::vector<int> assign(N, 0), best_assign(N, 0);
  double best_ss = kInf;
  for (int r = 0; r < restarts; ++r) {
    centers.row(0) = Zs.row(static_cast<int>(rng.uniform_index(N)));
    for (int g = 1; g < G; ++g) {
      double total = 0.0;
      for (int i = 0; i < N; ++i) {
        double near = kInf;
        for (int h = 0; h < g; ++h)
          near = std::min(near, (Zs.row(i) - centers.row(h)).squaredNorm());
        dist2[i] = near;
        total += near;
      }
      double u = rng.uniform() * total;
      int pick = N - 1;
      for (int i = 0; i < N; ++i) {
        u -= dist2[i];
        if (u <= 0.0) {
          pick = i;
          break;
        }
      }
      centers.row(g) = Zs.row(pick);
    }
    std::fill(assign.begin(), assign.end(), 0);
    for (int pass = 0; pass < 25; ++pass) {
      for (int i = 0; i < N; ++i) {
        double best = kInf;
        for (int g = 0; g < G; ++g) {
          const double d2 = (Zs.row(i) - centers.row(g)).squaredNorm();
          if (d2 < best) {
            best = d2;
            assign[i] = g;
          }
        }
      }
      for (int g = 0; g < G; ++g) {
        Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(Zs.cols());
        int n = 0;
        for (int i = 0; i < N; ++i)
          if (assign[i] == g) {
            sum += Zs.row(i);
            ++n;
          }
        if (n > 0)
          centers.row(g) = sum / n;
        else
          centers.row(g) = Zs.row(static_cast<int>(rng.uniform_index(N)));
      }
    }
    double ss = 0.0;
    for (int i = 0; i < N; ++i)
      ss += (Zs.row(i) - centers.row(assign[i])).squaredNorm();
    if (ss < best_ss) {
      best_ss = ss;
      best_assign = assign;
    }
  }
  st.alloc = best_assign;
  return st;
}

// ---------------------------------------------------------------------------
// Conditional updates
// ---------------------------------------------------------------------------

void update_latent_data(MCMCState& st, const MixedDataset& ds, RngStream& rng,
                        const SweepOptions& opt) {
  const LatentLayout& lay = ds.layout;
  std::vector<int> cat_vars;
  for (int j = 0; j < ds.n_vars(); ++j)
    if (st.var_active[j] && ds.cat_col[j] >= 0) cat_vars.push_back(j);
  if (cat_vars.empty()) {
    ++st.rng_epoch;
    return;
  }

  for_each_row(st, rng, opt, kLatentData, [&](int i, RngStream& r) {
    const Eigen::MatrixXd& L = st.lambda_tilde[st.alloc[i]];
    const Eigen::VectorXd tt = theta_tilde(st, i);
    for (int j : cat_vars) {
      const int off = lay.offset[j];
      const int w = lay.width[j];
      const int code = ds.codes(i, ds.cat_col[j]);
      if (w == 1) {
        const double m = L.row(off).dot(tt);
        st.Z(i, off) = code == 0
                           ? sample_truncated_normal(m, 1.0, {-kInf, 0.0}, r)
                           : sample_truncated_normal(m, 1.0, {0.0, kInf}, r);
        continue;
      }
      if (code == 0) {
        // Observed baseline level: every component is negative.
        for (int k = 0; k < w; ++k) {
          const double m = L.row(off + k).dot(tt);
          st.Z(i, off + k) = sample_truncated_normal(m, 1.0, {-kInf, 0.0}, r);
        }
        continue;
      }
      // Observed level k: its component is drawn above both zero and the
      // current values of the others, then the others are redrawn below it.
      const int k = code - 1;
      double tau = 0.0;
      for (int l = 0; l < w; ++l)
        if (l != k) tau = std::max(tau, st.Z(i, off + l));
      const double mk = L.row(off + k).dot(tt);
      const double zk = sample_truncated_normal(mk, 1.0, {tau, kInf}, r);
      st.Z(i, off + k) = zk;
      for (int l = 0; l < w; ++l) {
        if (l == k) continue;
        const double m = L.row(off + l).dot(tt);
        st.Z(i, off + l) = sample_truncated_normal(m, 1.0, {-kInf, zk}, r);
      }
    }
  });
}

void update_latent_traits(MCMCState& st, const MixedDataset& ds, RngStream& rng,
                          const SweepOptions& opt) {
  const std::vector<int> dims = st.active_dims(ds.layout);
  const int nd = static_cast<int>(dims.size());
  const int Q = st.Q;

  // Per-cluster pieces of the conditional: precision I + Lambda^T Psi^-1
  // Lambda is shared by every member, so factor it once.
  std::vector<Eigen::MatrixXd> lam(st.G);      // nd x Q
  std::vector<Eigen::VectorXd> mu(st.G);       // nd
  std::vector<Eigen::MatrixXd> lam_psi(st.G);  // Q x nd, Lambda^T Psi^-1
  std::vector<Eigen::LLT<Eigen::MatrixXd>> chol(st.G);
  for (int g = 0; g < st.G; ++g) {
    lam[g].resize(nd, Q);
    mu[g].resize(nd);
    for (int a = 0; a < nd; ++a) {
      mu[g][a] = st.lambda_tilde[g](dims[a], 0);
      lam[g].row(a) = st.lambda_tilde[g].row(dims[a]).tail(Q);
    }
    lam_psi[g].resize(Q, nd);
    for (int a = 0; a < nd; ++a)
      lam_psi[g].col(a) = lam[g].row(a).transpose() / st.psi[dims[a]];
    Eigen::MatrixXd prec = Eigen::MatrixXd::Identity(Q, Q);
    prec.noalias() += lam_psi[g] * lam[g];
    chol[g].compute(prec);
    if (chol[g].info() != Eigen::Success)
      throw NonSpdCovarianceError("update_latent_traits: precision is not SPD");
  }

  for_each_row(st, rng, opt, kLatentTraits, [&](int i, RngStream& r) {
    const int g = st.alloc[i];
    Eigen::VectorXd z(nd);
    for (int a = 0; a < nd; ++a) z[a] = st.Z(i, dims[a]);
    const Eigen::VectorXd h = lam_psi[g] * (z - mu[g]);
    st.theta.row(i) = sample_mvn_precision(chol[g], h, r).transpose();
  });
}

void update_item_parameters(MCMCState& st, const MixedDataset& ds, const Priors& priors,
                            RngStream& rng) {
  const LatentLayout& lay = ds.layout;
  const int Q = st.Q;
  const int P = Q + 1;
  const int N = st.n_rows();

  Eigen::LLT<Eigen::MatrixXd> prior_llt(priors.lambda_cov);
  if (prior_llt.info() != Eigen::Success)
    throw NonSpdCovarianceError("update_item_parameters: lambda_cov is not SPD");
  const Eigen::MatrixXd prior_prec = prior_llt.solve(Eigen::MatrixXd::Identity(P, P));
  const Eigen::VectorXd prior_h = prior_prec * priors.lambda_mean;

  const std::vector<int> dims = st.active_dims(lay);
  const int nd = static_cast<int>(dims.size());

  for (int g = 0; g < st.G; ++g) {
    std::vector<int> members;
    for (int i = 0; i < N; ++i)
      if (st.alloc[i] == g) members.push_back(i);
    const int n_g = static_cast<int>(members.size());

    Eigen::MatrixXd tt(n_g, P);
    Eigen::MatrixXd zsub(n_g, nd);
    for (int m = 0; m < n_g; ++m) {
      tt(m, 0) = 1.0;
      tt.row(m).tail(Q) = st.theta.row(members[m]);
      for (int a = 0; a < nd; ++a) zsub(m, a) = st.Z(members[m], dims[a]);
    }
    const Eigen::MatrixXd S = tt.transpose() * tt;          // P x P
    const Eigen::MatrixXd B = tt.transpose() * zsub;        // P x nd

    // All categorical dims share psi = 1, hence one factorization; an empty
    // cluster has S = 0 and falls back to the prior on its own.
    Eigen::LLT<Eigen::MatrixXd> llt_cat(prior_prec + S);
    if (llt_cat.info() != Eigen::Success)
      throw NonSpdCovarianceError("update_item_parameters: precision is not SPD");
    for (int a = 0; a < nd; ++a) {
      const int d = dims[a];
      Eigen::VectorXd draw;
      if (lay.dim_is_continuous[d] && st.psi[d] != 1.0) {
        Eigen::LLT<Eigen::MatrixXd> llt(prior_prec + S / st.psi[d]);
        if (llt.info() != Eigen::Success)
          throw NonSpdCovarianceError("update_item_parameters: precision is not SPD");
        draw = sample_mvn_precision(llt, prior_h + B.col(a) / st.psi[d], rng);
      } else {
        draw = sample_mvn_precision(llt_cat, prior_h + B.col(a), rng);
      }
      st.lambda_tilde[g].row(d) = draw.transpose();
    }
  }
}

void update_uniquenesses(MCMCState& st, const MixedDataset& ds, const Priors& priors,
                         RngStream& rng) {
  const std::vector<int> cont_dims = st.active_continuous_dims(ds.layout);
  if (cont_dims.empty()) return;
  const int N = st.n_rows();
  const int nc = static_cast<int>(cont_dims.size());

  Eigen::VectorXd rss = Eigen::VectorXd::Zero(nc);
  for (int i = 0; i < N; ++i) {
    const Eigen::MatrixXd& L = st.lambda_tilde[st.alloc[i]];
    const Eigen::VectorXd tt = theta_tilde(st, i);
    for (int a = 0; a < nc; ++a) {
      const double e = st.Z(i, cont_dims[a]) - L.row(cont_dims[a]).dot(tt);
      rss[a] += e * e;
    }
  }
  for (int a = 0; a < nc; ++a)
    st.psi[cont_dims[a]] = sample_inverse_gamma(priors.psi_shape + 0.5 * N,
                                                priors.psi_scale + 0.5 * rss[a], rng);
}

Eigen::MatrixXd allocation_logprobs(const MCMCState& st, const MixedDataset& ds,
                                    bool conditional_on_theta, bool parallel) {
  const int N = st.n_rows();
  const int G = st.G;
  const std::vector<int> dims = st.active_dims(ds.layout);
  const int nd = static_cast<int>(dims.size());
  Eigen::MatrixXd logp(N, G);

  if (!conditional_on_theta) {
    std::vector<LowRankGaussian> comp;
    comp.reserve(G);
    for (int g = 0; g < G; ++g) {
      Eigen::VectorXd mu(nd), psi(nd);
      Eigen::MatrixXd lam(nd, st.Q);
      for (int a = 0; a < nd; ++a) {
        mu[a] = st.lambda_tilde[g](dims[a], 0);
        lam.row(a) = st.lambda_tilde[g].row(dims[a]).tail(st.Q);
        psi[a] = st.psi[dims[a]];
      }
      comp.emplace_back(std::move(mu), std::move(lam), std::move(psi));
    }
    const Eigen::VectorXd logpi = st.pi.array().log();
#pragma omp parallel for schedule(static) if (parallel)
    for (int i = 0; i < N; ++i) {
      Eigen::VectorXd z(nd);
      for (int a = 0; a < nd; ++a) z[a] = st.Z(i, dims[a]);
      for (int g = 0; g < G; ++g) logp(i, g) = logpi[g] + comp[g].logpdf(z);
    }
  } else {
    const Eigen::VectorXd logpi = st.pi.array().log();
#pragma omp parallel for schedule(static) if (parallel)
    for (int i = 0; i < N; ++i) {
      const Eigen::VectorXd tt = theta_tilde(st, i);
      for (int g = 0; g < G; ++g) {
        double acc = logpi[g];
        for (int a = 0; a < nd; ++a) {
          const int d = dims[a];
          acc += normal_logpdf(st.Z(i, d), st.lambda_tilde[g].row(d).dot(tt),
                               std::sqrt(st.psi[d]));
        }
        logp(i, g) = acc;
      }
    }
  }

  // Normalize in log space row by row.
#pragma omp parallel for schedule(static) if (parallel)
  for (int i = 0; i < N; ++i) {
    const double m = logp.row(i).maxCoeff();
    const double lse = m + std::log((logp.row(i).array() - m).exp().sum());
    logp.row(i).array() -= lse;
  }
  return logp;
}

void update_allocations(MCMCState& st, const MixedDataset& ds, RngStream& rng,
                        const SweepOptions& opt) {
  const Eigen::MatrixXd logp =
      allocation_logprobs(st, ds, opt.alloc_conditional_on_theta, opt.parallel);
  for_each_row(st, rng, opt, kAllocDraw, [&](int i, RngStream& r) {
    st.alloc[i] = sample_categorical_logits(logp.row(i).transpose(), r);
  });
}

void update_mixing_proportions(MCMCState& st, const Priors& priors, RngStream& rng) {
  Eigen::VectorXd alpha = priors.dirichlet_alpha;
  for (int a : st.alloc) alpha[a] += 1.0;
  st.pi = sample_dirichlet(alpha, rng);
}

void gibbs_sweep(MCMCState& st, const MixedDataset& ds, const Priors& priors,
                 RngStream& rng, const SweepOptions& opt) {
  ++st.sweep_id;
  update_latent_data(st, ds, rng, opt);
  update_latent_traits(st, ds, rng, opt);
  update_item_parameters(st, ds, priors, rng);
  update_uniquenesses(st, ds, priors, rng);
  update_allocations(st, ds, rng, opt);
  update_mixing_proportions(st, priors, rng);
}

// ---------------------------------------------------------------------------
// Invariants
// ---------------------------------------------------------------------------

int count_consistency_violations(const MCMCState& st, const MixedDataset& ds) {
  const LatentLayout& lay = ds.layout;
  int violations = 0;
  for (int j = 0; j < ds.n_vars(); ++j) {
    if (!st.var_active[j] || ds.cat_col[j] < 0) continue;
    const int off = lay.offset[j];
    const int w = lay.width[j];
    for (int i = 0; i < st.n_rows(); ++i) {
      const int code = ds.codes(i, ds.cat_col[j]);
      bool ok;
      if (w == 1) {
        ok = code == 0 ? st.Z(i, off) < 0.0 : st.Z(i, off) > 0.0;
      } else if (code == 0) {
        ok = true;
        for (int k = 0; k < w; ++k) ok = ok && st.Z(i, off + k) < 0.0;
      } else {
        const double zk = st.Z(i, off + code - 1);
        ok = zk > 0.0;
        for (int k = 0; k < w && ok; ++k)
          if (k != code - 1) ok = st.Z(i, off + k) < zk;
      }
      if (!ok) ++violations;
    }
  }
  return violations;
}

void validate_state(const MCMCState& st, const MixedDataset& ds) {
  const LatentLayout& lay = ds.layout;
  const int N = ds.n_rows();
  if (st.Z.rows() != N || st.Z.cols() != lay.D || st.theta.rows() != N ||
      st.theta.cols() != st.Q || static_cast<int>(st.alloc.size()) != N ||
      st.pi.size() != st.G || static_cast<int>(st.lambda_tilde.size()) != st.G ||
      st.psi.size() != lay.D || st.var_active.size() != ds.schema.size())
    throw DimensionError("state: shape mismatch");
  if (std::abs(st.pi.sum() - 1.0) > 1e-10 || (st.pi.array() < 0.0).any())
    throw NonPositiveParameterError("state: pi is not a probability vector");
  for (int d = 0; d < lay.D; ++d) {
    if (!(st.psi[d] > 0.0))
      throw NonPositiveParameterError("state: psi must be positive");
    if (!lay.dim_is_continuous[d] && st.psi[d] != 1.0)
      throw NonPositiveParameterError("state: categorical psi must be exactly 1");
  }
  for (int a : st.alloc)
    if (a < 0 || a >= st.G) throw DimensionError("state: allocation out of range");
  if (!st.Z.allFinite() || !st.theta.allFinite() || !st.pi.allFinite() ||
      !st.psi.allFinite())
    throw DimensionError("state: non-finite values");
  for (const auto& L : st.lambda_tilde) {
    if (L.rows() != lay.D || L.cols() != st.Q + 1)
      throw DimensionError("state: lambda_tilde shape mismatch");
    if (!L.allFinite()) throw DimensionError("state: non-finite item parameters");
  }
  // Continuous latents must stay pinned to the observed data.
  for (int j = 0; j < ds.n_vars(); ++j)
    if (ds.cont_col[j] >= 0 &&
        (st.Z.col(lay.offset[j]) - ds.continuous.col(ds.cont_col[j])).cwiseAbs().maxCoeff() != 0.0)
      throw DimensionError("state: continuous latents diverged from the data");
}

}  // namespace mfamd
