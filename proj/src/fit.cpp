#include "mfamd/fit.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <thread>

#include "mfamd/errors.hpp"

namespace mfamd {

namespace {

void emit(const FitOptions& opt, const char* phase, long sweep, long total,
          const MCMCState& st, int n_draws) {
  if (!opt.heartbeat) return;
  Heartbeat hb;
  hb.phase = phase;
  hb.sweep = sweep;
  hb.phase_total = total;
  hb.n_retained = static_cast<int>(st.active_vars().size());
  hb.n_draws = n_draws;
  opt.heartbeat(hb);
}

// Evenly spaced subset of rows for residual export.
std::vector<int> residual_subset(int n_rows, int want) {
  std::vector<int> rows;
  if (want <= 0) return rows;
  const int k = std::min(want, n_rows);
  for (int r = 0; r < k; ++r) rows.push_back(static_cast<int>(
      static_cast<long>(r) * n_rows / k));
  return rows;
}

}  // namespace

FitResult fit(const MixedDataset& ds, int G, int Q, const Priors& priors,
              const PhaseSchedule& schedule, RngStream& rng, const FitOptions& options) {
  schedule.validate();
  options.varsel.validate();

  FitResult res;
  res.G = G;
  res.Q = Q;

  MCMCState st = options.kmeans_warm_start
                     ? init_state_kmeans(ds, G, Q, priors, rng)
                     : init_state(ds, G, Q, priors, rng);
  long sweeps = 0;

  for (int t = 1; t <= schedule.burn_in_iters; ++t) {
    gibbs_sweep(st, ds, priors, rng, options.sweep);
    ++sweeps;
    if (options.heartbeat_every > 0 && t % options.heartbeat_every == 0)
      emit(options, "burn_in", t, schedule.burn_in_iters, st, 0);
  }

  // Selection phase: screen every check interval until enough consecutive
  // checks pass clean. Removals are permanent.
  if (G > 1 && options.varsel_enabled) {
    int clean = 0;
    while (clean < schedule.varsel_stop_after_clean) {
      for (int t = 0; t < schedule.varsel_check_every; ++t) {
        gibbs_sweep(st, ds, priors, rng, options.sweep);
        ++sweeps;
      }
      const VarSelCheck check = selection_step(st, ds, options.varsel);
      for (int j = 0; j < ds.n_vars(); ++j) {
        if (std::isnan(check.ratios[j]) &&
            std::find(check.removed.begin(), check.removed.end(), j) ==
                check.removed.end())
          continue;
        VarSelTraceRow row;
        row.sweep = static_cast<int>(sweeps);
        row.variable = ds.schema[j].name;
        row.ratio = check.ratios[j];
        row.removed = std::find(check.removed.begin(), check.removed.end(), j) !=
                      check.removed.end();
        res.varsel_trace.push_back(std::move(row));
      }
      clean = check.removed.empty() ? clean + 1 : 0;
      const int n_retained = static_cast<int>(st.active_vars().size());
      emit(options, "selection", sweeps, 0, st, 0);
      if (n_retained < 2)
        throw DegenerateModelError("fit: fewer than 2 variables retained");
    }
  }

  res.retained_vars = st.active_vars();
  res.retained_dims = st.active_dims(ds.layout);
  res.retained_cont_dims = st.active_continuous_dims(ds.layout);
  res.noise = build_noise_block(st, ds, priors, rng, options.noise_fa);

  // Posterior sampling.
  const int nd = static_cast<int>(res.retained_dims.size());
  const int ncont = static_cast<int>(res.retained_cont_dims.size());
  res.residuals.rows = residual_subset(ds.n_rows(), options.residual_rows);
  res.residuals.cont_dims = res.retained_cont_dims;
  for (int d : res.retained_dims)
    if (!ds.layout.dim_is_continuous[d]) res.residuals.cat_dims.push_back(d);

  std::vector<double> logliks;
  std::vector<char> seen_nonempty(G, 0);
  const int n_draws_total = schedule.posterior_iters / schedule.thin;
  res.draws.reserve(n_draws_total);

  for (int t = 1; t <= schedule.posterior_iters; ++t) {
    gibbs_sweep(st, ds, priors, rng, options.sweep);
    ++sweeps;
    if (options.heartbeat_every > 0 && t % options.heartbeat_every == 0)
      emit(options, "sampling", t, schedule.posterior_iters, st,
           static_cast<int>(res.draws.size()));
    if (t % schedule.thin != 0) continue;

    Draw d;
    d.pi = st.pi;
    d.lambda_tilde.reserve(G);
    for (int g = 0; g < G; ++g) {
      Eigen::MatrixXd lam(nd, Q + 1);
      for (int a = 0; a < nd; ++a)
        lam.row(a) = st.lambda_tilde[g].row(res.retained_dims[a]);
      d.lambda_tilde.push_back(std::move(lam));
    }
    d.psi.resize(ncont);
    for (int a = 0; a < ncont; ++a) d.psi[a] = st.psi[res.retained_cont_dims[a]];
    d.alloc = st.alloc;
    d.loglik = approx_loglik(st, ds, res.noise);
    logliks.push_back(d.loglik);
    res.draws.push_back(std::move(d));

    const std::vector<int> sizes = st.cluster_sizes();
    for (int g = 0; g < G; ++g)
      if (sizes[g] > 0) seen_nonempty[g] = 1;

    if (!res.residuals.rows.empty()) {
      const int nrs = static_cast<int>(res.residuals.rows.size());
      Eigen::MatrixXd rc(nrs, ncont);
      Eigen::MatrixXd rl(nrs, static_cast<int>(res.residuals.cat_dims.size()));
      for (int r = 0; r < nrs; ++r) {
        const int i = res.residuals.rows[r];
        const Eigen::MatrixXd& L = st.lambda_tilde[st.alloc[i]];
        Eigen::VectorXd tt(Q + 1);
        tt[0] = 1.0;
        tt.tail(Q) = st.theta.row(i).transpose();
        for (int a = 0; a < ncont; ++a) {
          const int dim = res.retained_cont_dims[a];
          rc(r, a) = continuous_residual(st.Z(i, dim), L.row(dim).dot(tt),
                                         st.psi[dim], options.literal_psi_residuals);
        }
        for (size_t a = 0; a < res.residuals.cat_dims.size(); ++a) {
          const int dim = res.residuals.cat_dims[a];
          rl(r, static_cast<int>(a)) = latent_residual(st.Z(i, dim), L.row(dim).dot(tt));
        }
      }
      res.residuals.continuous.push_back(std::move(rc));
      res.residuals.latent.push_back(std::move(rl));
    }
  }

  for (int g = 0; g < G; ++g)
    if (!seen_nonempty[g])
      throw DegenerateModelError("fit: cluster " + std::to_string(g + 1) +
                                 " stayed empty through the sampling phase");

  // Identification: undo label switching against the best draw, then rotate
  // loadings onto its template. Per-draw logliks are untouched by both.
  if (G > 1) res.relabeling = relabel_draws(res.draws);
  res.rotations = align_loadings(res.draws);

  std::vector<std::vector<int>> alloc_draws;
  alloc_draws.reserve(res.draws.size());
  for (const auto& d : res.draws) alloc_draws.push_back(d.alloc);
  res.membership = membership_summary(alloc_draws, G);

  res.score.G = G;
  res.score.Q = Q;
  res.score.nu = count_parameters(G, Q, ds, st.var_active);
  res.score.max_loglik = *std::max_element(logliks.begin(), logliks.end());
  res.score.bic = bic_mcmc(logliks, res.score.nu, ds.n_rows());
  res.score.n_retained = static_cast<int>(res.retained_vars.size());
  res.total_sweeps = sweeps;
  emit(options, "done", sweeps, sweeps, st, static_cast<int>(res.draws.size()));
  return res;
}

Priors PriorSettings::instantiate(int G, int Q) const {
  Priors p = Priors::defaults(G, Q);
  p.dirichlet_alpha.setConstant(dirichlet_alpha);
  p.lambda_cov = lambda_scale * Eigen::MatrixXd::Identity(Q + 1, Q + 1);
  p.psi_shape = psi_shape;
  p.psi_scale = psi_scale;
  return p;
}

GridResult grid_search(const MixedDataset& ds, const std::vector<int>& g_values,
                       const std::vector<int>& q_values, const PriorSettings& priors,
                       const PhaseSchedule& schedule, std::uint64_t root_seed,
                       const FitOptions& options, int n_workers) {
  if (g_values.empty() || q_values.empty())
    throw ConfigError("grid_search: empty grid");
  GridResult grid;
  for (int g : g_values)
    for (int q : q_values) {
      GridCell cell;
      cell.G = g;
      cell.Q = q;
      grid.cells.push_back(cell);
    }

  const RngStream root(root_seed);
  std::mutex mu;
  std::vector<FitResult> results(grid.cells.size());
  size_t next = 0;

  auto worker = [&] {
    for (;;) {
      size_t idx;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= grid.cells.size()) return;
        idx = next++;
      }
      GridCell& cell = grid.cells[idx];
      // Substream keyed by the cell's (G, Q), not its position, so adding
      // grid points never changes existing cells.
      RngStream cell_rng = root.substream(static_cast<std::uint64_t>(cell.G),
                                          static_cast<std::uint64_t>(cell.Q));
      FitOptions cell_opt = options;
      cell_opt.heartbeat = nullptr;
      try {
        results[idx] = fit(ds, cell.G, cell.Q,
                           priors.instantiate(cell.G, cell.Q), schedule, cell_rng,
                           cell_opt);
        cell.score = results[idx].score;
      } catch (const DegenerateModelError& e) {
        std::lock_guard<std::mutex> lock(mu);
        cell.failed = true;
        cell.note = e.what();
      }
      if (options.heartbeat) {
        std::lock_guard<std::mutex> lock(mu);
        Heartbeat hb;
        hb.phase = "grid_cell G=" + std::to_string(cell.G) +
                   " Q=" + std::to_string(cell.Q) +
                   " status=" + (cell.failed ? "failed" : "done");
        options.heartbeat(hb);
      }
    }
  };

  n_workers = std::max(1, n_workers);
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (size_t idx = 0; idx < grid.cells.size(); ++idx) {
    const GridCell& cell = grid.cells[idx];
    if (cell.failed) continue;
    grid.scores.push_back(cell.score);
    if (grid.best_index < 0) {
      grid.best_index = static_cast<int>(idx);
      continue;
    }
    const GridCell& best = grid.cells[grid.best_index];
    const bool better =
        cell.score.bic > best.score.bic ||
        (cell.score.bic == best.score.bic &&
         (cell.G < best.G || (cell.G == best.G && cell.Q < best.Q)));
    if (better) grid.best_index = static_cast<int>(idx);
  }
  if (grid.best_index < 0)
    throw DegenerateModelError("grid_search: every cell failed");
  grid.best_fit = std::move(results[grid.best_index]);
  return grid;
}

}  // namespace mfamd
