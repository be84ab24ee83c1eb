#pragma once

#include <Eigen/Dense>
#include <vector>

#include "mfamd/rng.hpp"
#include "mfamd/types.hpp"

namespace mfamd {

// Generating model for synthetic data: a full parameter set in the same
// shape the sampler uses (lambda_tilde[g] is D x (Q+1) with the mean in
// column 0; psi carries exactly 1 on categorical dims).
struct TrueModel {
  int G = 0;
  int Q = 0;
  Eigen::VectorXd pi;
  std::vector<VariableSpec> schema;
  std::vector<Eigen::MatrixXd> lambda_tilde;
  Eigen::VectorXd psi;
  std::vector<int> noise_vars;  // variables generated without cluster signal

  void validate() const;

  // Two clusters, two factors, 13 discriminating variables (5 continuous at
  // mean separation 3, 5 binary, 3 three-level nominal) plus 10 noise
  // variables (4 continuous, 3 binary, 3 nominal) that carry no cluster or
  // factor signal. The recovery and selection studies run on this.
  static TrueModel default_recovery_scenario();
};

struct SimulatedData {
  MixedDataset ds;
  std::vector<int> alloc;   // true memberships
  Eigen::MatrixXd z;        // true latent data, N x D
  Eigen::MatrixXd theta;    // true latent traits, N x Q
};

// Forward pass: memberships from pi, traits standard normal, latent data
// from the cluster's loadings plus noise, observed codes by thresholding.
SimulatedData generate(const TrueModel& model, int n_rows, RngStream& rng);

}  // namespace mfamd
