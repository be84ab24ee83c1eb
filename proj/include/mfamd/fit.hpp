#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mfamd/diagnostics.hpp"
#include "mfamd/identify.hpp"
#include "mfamd/model.hpp"
#include "mfamd/select.hpp"
#include "mfamd/types.hpp"
#include "mfamd/varsel.hpp"

namespace mfamd {

struct Heartbeat {
  std::string phase;
  long sweep = 0;
  long phase_total = 0;  // 0 when open ended
  int n_retained = 0;
  int n_draws = 0;
};
using HeartbeatFn = std::function<void(const Heartbeat&)>;

struct FitOptions {
  SweepOptions sweep;
  VarSelConfig varsel;
  bool varsel_enabled = true;
  bool kmeans_warm_start = false;
  // Residual export: draws of standardized (continuous) and latent
  // (categorical) residuals for an evenly spaced subset of observations.
  int residual_rows = 50;
  bool literal_psi_residuals = false;  // divide by psi instead of sqrt(psi)
  NoiseFaSchedule noise_fa;
  HeartbeatFn heartbeat;
  int heartbeat_every = 500;
};

struct FitResult {
  int G = 0;
  int Q = 0;
  std::vector<int> retained_vars;       // schema indices, ascending
  std::vector<int> retained_dims;       // latent dims stored in draws
  std::vector<int> retained_cont_dims;  // latent dims behind each psi entry
  std::vector<Draw> draws;              // relabeled and rotation-aligned
  ModelScore score;
  MembershipSummary membership;
  std::vector<VarSelTraceRow> varsel_trace;
  RelabelingReport relabeling;
  RotationReport rotations;
  NoiseBlock noise;
  ResidualSamples residuals;
  long total_sweeps = 0;
};

// Runs the full pipeline on preprocessed data: burn-in, variable selection
// until `varsel_stop_after_clean` consecutive clean checks (skipped when
// G == 1 or selection is disabled), noise block construction, posterior
// sampling with per-draw approximate log likelihoods, label and rotation
// identification, membership summary and BIC-MCMC score.
//
// Raises DegenerateModel when selection leaves fewer than two variables or
// some cluster is empty in every retained draw.
FitResult fit(const MixedDataset& ds, int G, int Q, const Priors& priors,
              const PhaseSchedule& schedule, RngStream& rng,
              const FitOptions& options = {});

// Scalar prior settings expanded per grid cell.
struct PriorSettings {
  double dirichlet_alpha = 0.5;
  double lambda_scale = 5.0;  // lambda_cov = lambda_scale * I
  double psi_shape = 7.0;
  double psi_scale = 7.0;

  Priors instantiate(int G, int Q) const;
};

struct GridCell {
  int G = 0;
  int Q = 0;
  bool failed = false;       // DegenerateModel; missing from the score table
  std::string note;
  ModelScore score;
};

struct GridResult {
  std::vector<GridCell> cells;      // one per (G, Q), grid order
  std::vector<ModelScore> scores;   // completed cells only
  int best_index = -1;              // into cells
  FitResult best_fit;
};

// Fits every (G, Q) combination. Each cell draws its RNG substream from the
// root seed, so results do not depend on scheduling; up to `n_workers` cells
// run concurrently. A cell that raises DegenerateModel becomes a missing
// score, never an abort. The winner has the largest BIC-MCMC (ties prefer
// smaller G, then smaller Q).
GridResult grid_search(const MixedDataset& ds, const std::vector<int>& g_values,
                       const std::vector<int>& q_values, const PriorSettings& priors,
                       const PhaseSchedule& schedule, std::uint64_t root_seed,
                       const FitOptions& options = {}, int n_workers = 1);

}  // namespace mfamd
