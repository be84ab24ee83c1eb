#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "mfamd/model.hpp"
#include "mfamd/types.hpp"

namespace mfamd {

struct VarSelConfig {
  double epsilon_continuous = 0.95;
  double epsilon_categorical = 0.99;
  // Weight the within-cluster sums by current membership probabilities
  // instead of hard allocations.
  bool fuzzy = false;

  void validate() const;
};

// Ratio of within-cluster to total sum of squares for one variable, computed
// on its latent columns with empirical means; a nominal variable pools
// numerator and denominator across its K-1 columns. Lies in [0, 1]; 1 means
// the clustering explains nothing. `weights` (N x G) switches to the fuzzy
// variant; pass an empty matrix for hard allocations.
double variance_ratio(const MCMCState& st, const MixedDataset& ds, int var,
                      const Eigen::MatrixXd& weights = {});

struct VarSelCheck {
  std::vector<int> removed;          // variable indices removed at this check
  std::vector<double> ratios;        // VR per variable (NaN for inactive)
  std::vector<int> flagged_zero_var; // variables with zero overall variance
};

// One screening pass: computes VR for every active variable and deactivates
// those above their kind's threshold. Removal is permanent. A variable whose
// overall variance is zero is flagged and removed as uninformative.
VarSelCheck selection_step(MCMCState& st, const MixedDataset& ds,
                           const VarSelConfig& cfg);

struct VarSelTraceRow {
  int sweep = 0;
  std::string variable;
  double ratio = 0.0;
  bool removed = false;
};

void write_varsel_trace_csv(const std::string& path,
                            const std::vector<VarSelTraceRow>& trace);

}  // namespace mfamd
