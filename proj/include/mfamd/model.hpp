#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "mfamd/distributions.hpp"
#include "mfamd/rng.hpp"
#include "mfamd/types.hpp"

namespace mfamd {

// Prior settings shared by all clusters. Item parameter rows (mean stacked
// with loadings) get a common MVN prior; uniquenesses an inverse gamma.
struct Priors {
  Eigen::VectorXd dirichlet_alpha;  // length G
  Eigen::VectorXd lambda_mean;      // length Q+1
  Eigen::MatrixXd lambda_cov;       // (Q+1) x (Q+1), SPD
  double psi_shape = 7.0;
  double psi_scale = 7.0;

  static Priors defaults(int G, int Q);
  void validate(int G, int Q) const;
};

// Iteration plan: burn-in, selection checks every `varsel_check_every`
// sweeps until `varsel_stop_after_clean` consecutive checks remove nothing,
// then `posterior_iters` sweeps thinned by `thin`.
struct PhaseSchedule {
  int burn_in_iters = 20000;
  int varsel_check_every = 1000;
  int varsel_stop_after_clean = 4;
  int posterior_iters = 100000;
  int thin = 100;

  void validate() const;
};

// Execution options for a sweep. The serial path consumes the chain RNG one
// draw at a time and is the bit-reproducible reference. The parallel path
// partitions observations into `n_blocks` fixed blocks, each drawing from a
// substream keyed by (epoch, kernel, block), so results are identical for a
// given seed and block count no matter how many threads run; it matches the
// serial path in distribution, not bitwise.
struct SweepOptions {
  bool parallel = false;
  int n_blocks = 64;
  // Exact full conditional for allocations (conditions on theta). Default
  // marginalizes theta out through the low-rank Gaussian; the conditional
  // variant makes every update a textbook full conditional, which the
  // prior-reproduction test requires.
  bool alloc_conditional_on_theta = false;
};

// Gibbs state. Latent data Z carries observed values on continuous dims.
// lambda_tilde[g] is D x (Q+1) with column 0 the cluster mean and columns
// 1..Q the loadings. psi is the common uniqueness vector, fixed at exactly 1
// on every categorical dim. Removed variables keep their rows/dims in place
// but are skipped by every update (var_active is the mask).
struct MCMCState {
  int G = 0;
  int Q = 0;
  Eigen::MatrixXd Z;          // N x D
  Eigen::MatrixXd theta;      // N x Q
  std::vector<int> alloc;     // N, values in [0, G)
  Eigen::VectorXd pi;         // G
  std::vector<Eigen::MatrixXd> lambda_tilde;  // G of D x (Q+1)
  Eigen::VectorXd psi;        // D
  std::vector<char> var_active;  // per variable
  std::uint64_t sweep_id = 0;
  // Bumped by every kernel that draws through block substreams, so repeated
  // standalone kernel calls never reuse a stream.
  std::uint64_t rng_epoch = 0;

  int n_rows() const { return static_cast<int>(Z.rows()); }
  int n_dims() const { return static_cast<int>(Z.cols()); }
  std::vector<int> active_vars() const;
  std::vector<int> active_dims(const LatentLayout& lay) const;
  std::vector<int> active_continuous_dims(const LatentLayout& lay) const;
  std::vector<int> cluster_sizes() const;
};

// Random-start state: uniform allocations, standard normal traits, item
// parameters from their prior, psi all ones, continuous latents pinned to
// the data and categorical latents drawn consistent with the observed codes.
MCMCState init_state(const MixedDataset& ds, int G, int Q, const Priors& priors,
                     RngStream& rng);

// Same but allocations warm-started by a k-means pass on the initial latent
// matrix instead of a uniform draw.
MCMCState init_state_kmeans(const MixedDataset& ds, int G, int Q, const Priors& priors,
                            RngStream& rng);

// Full conditional updates, in sweep order.
void update_latent_data(MCMCState& st, const MixedDataset& ds, RngStream& rng,
                        const SweepOptions& opt = {});
void update_latent_traits(MCMCState& st, const MixedDataset& ds, RngStream& rng,
                          const SweepOptions& opt = {});
void update_item_parameters(MCMCState& st, const MixedDataset& ds, const Priors& priors,
                            RngStream& rng);
void update_uniquenesses(MCMCState& st, const MixedDataset& ds, const Priors& priors,
                         RngStream& rng);
void update_allocations(MCMCState& st, const MixedDataset& ds, RngStream& rng,
                        const SweepOptions& opt = {});
void update_mixing_proportions(MCMCState& st, const Priors& priors, RngStream& rng);

// One full sweep in the fixed order: latent data, latent traits, item
// parameters, uniquenesses, allocations, mixing proportions.
void gibbs_sweep(MCMCState& st, const MixedDataset& ds, const Priors& priors,
                 RngStream& rng, const SweepOptions& opt = {});

// N x G matrix of log allocation probabilities (normalized per row), as used
// by update_allocations. Deterministic; the parallel path equals the serial
// one bitwise.
Eigen::MatrixXd allocation_logprobs(const MCMCState& st, const MixedDataset& ds,
                                    bool conditional_on_theta = false,
                                    bool parallel = false);

// Number of cells of Z whose sign/argmax pattern contradicts the observed
// code, over active variables. Zero for any state the updates can produce.
int count_consistency_violations(const MCMCState& st, const MixedDataset& ds);

// Structural invariants: simplex pi, psi positive and exactly 1 on
// categorical dims, finite Z/theta/lambda, allocations in range. Throws on
// violation.
void validate_state(const MCMCState& st, const MixedDataset& ds);

}  // namespace mfamd
