#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace mfamd {

// Posterior membership summary built from relabeled allocation draws:
// probs(i, g) is the fraction of draws placing i in g, hard labels are the
// row argmax, uncertainty_i = 1 - max_g probs(i, g), which lies in
// [0, 1 - 1/G].
struct MembershipSummary {
  Eigen::MatrixXd probs;       // N x G
  std::vector<int> hard;       // N
  Eigen::VectorXd uncertainty; // N
};

MembershipSummary membership_summary(const std::vector<std::vector<int>>& alloc_draws,
                                     int G);

// Rand index: fraction of observation pairs on which two partitions agree
// (together in both, or apart in both).
double rand_index(const std::vector<int>& a, const std::vector<int>& b);

// Hubert-Arabie adjusted Rand index: chance-corrected to expectation 0,
// maximum 1.
double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

// Standardized residual for a continuous entry: raw residual over the
// standard deviation sqrt(psi), which is standard Gaussian for a well
// fitting model. `literal_psi_denominator` divides by psi itself instead.
double continuous_residual(double z, double fitted, double psi,
                           bool literal_psi_denominator = false);

// Latent residual for a categorical dim: the truncated draw minus its fitted
// mean (unit conditional variance, no scaling).
inline double latent_residual(double z, double fitted) { return z - fitted; }

// Long-format residual draws for a subset of observations, filled in during
// the sampling phase.
struct ResidualSamples {
  std::vector<int> rows;                   // observation indices exported
  std::vector<int> cont_dims;              // latent dims of retained continuous vars
  std::vector<int> cat_dims;               // latent dims of retained categorical vars
  // draw-major: values[draw](r, c) for subset row r, dim column c
  std::vector<Eigen::MatrixXd> continuous; // |rows| x |cont_dims|
  std::vector<Eigen::MatrixXd> latent;     // |rows| x |cat_dims|
};

void write_membership_csv(const std::string& path, const MembershipSummary& ms);
void write_residuals_csv(const std::string& path, const ResidualSamples& rs,
                         const std::vector<std::string>& dim_names_cont,
                         const std::vector<std::string>& dim_names_cat);

}  // namespace mfamd
