#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "mfamd/model.hpp"
#include "mfamd/types.hpp"

namespace mfamd {

// Per-cluster (or pooled, one row) category probabilities for one variable.
struct CategoricalTable {
  int var = -1;
  Eigen::MatrixXd probs;  // n_groups x K, rows sum to 1
};

// Empirical category probabilities of `var` under the given allocation.
// Rows are clusters (pass G = 1 and a zero allocation for pooled
// frequencies). Raw frequencies, except rows with a zero cell which get
// add-1/2 smoothing so no observed configuration has probability zero.
CategoricalTable empirical_category_probs(const MixedDataset& ds, int var,
                                          const std::vector<int>& alloc, int G);

// Position of the removed (noise) variables in the factored likelihood:
// one single-cluster factor analysis over the removed continuous variables
// plus pooled category probabilities for the removed categoricals. Fitted
// once after selection settles; constant across posterior draws.
struct NoiseBlock {
  std::vector<int> removed_cont_vars;   // schema indices, ascending
  std::vector<int> removed_cat_vars;
  Eigen::VectorXd mu;                   // |removed cont|
  Eigen::MatrixXd lambda;               // |removed cont| x Q
  Eigen::VectorXd psi;
  std::vector<CategoricalTable> cat_probs;  // pooled, aligned with removed_cat_vars
  double loglik = 0.0;                  // observed-data loglik contribution
  bool rotation_aligned = true;

  bool empty() const { return removed_cont_vars.empty() && removed_cat_vars.empty(); }
};

struct NoiseFaSchedule {
  int burn_in_iters = 500;
  int iters = 1500;
  int thin = 5;
};

// Single-cluster factor analysis over the columns in `values`, returning
// posterior-mean mean/loadings/uniquenesses. Loading draws are aligned to
// the highest-likelihood draw before averaging (skipped, with the flag
// cleared, when that template is rank deficient).
void fit_noise_fa(const Eigen::MatrixXd& values, int Q, double psi_shape,
                  double psi_scale, RngStream& rng, const NoiseFaSchedule& sched,
                  NoiseBlock* out);

// Builds the whole noise block for the removed variables of `st`, including
// pooled categorical tables. Q is reused from the main model.
NoiseBlock build_noise_block(const MCMCState& st, const MixedDataset& ds,
                             const Priors& priors, RngStream& rng,
                             const NoiseFaSchedule& sched = {});

// Approximate observed-data log likelihood for the current draw: the
// retained block mixes, per cluster, a Gaussian over the retained continuous
// variables with that draw's empirical category probabilities; the noise
// block contributes its fixed factor per observation.
double approx_loglik(const MCMCState& st, const MixedDataset& ds,
                     const NoiseBlock& noise);

// Free-parameter count nu for the factored model: mixing weights, retained
// Gaussian block (means, loadings capped at min(Q, #retained continuous),
// uniquenesses), per-cluster retained category tables, noise factor
// analysis, pooled removed category tables. Fixed quantities (categorical
// uniquenesses pinned at 1) are excluded.
long count_parameters(int G, int Q, const MixedDataset& ds,
                      const std::vector<char>& var_active);

struct ModelScore {
  int G = 0;
  int Q = 0;
  double max_loglik = -std::numeric_limits<double>::infinity();
  long nu = 0;
  double bic = -std::numeric_limits<double>::infinity();
  int n_retained = 0;
};

// BIC-MCMC: twice the largest per-draw approximate log likelihood minus
// nu * ln(N).
double bic_mcmc(const std::vector<double>& logliks, long nu, int n_rows);

void write_score_table_csv(const std::string& path, const std::vector<ModelScore>& scores);

}  // namespace mfamd
