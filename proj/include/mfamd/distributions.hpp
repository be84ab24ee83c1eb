#pragma once

#include <Eigen/Dense>
#include <limits>

#include "mfamd/rng.hpp"

namespace mfamd {

// Half-open truncation interval (lower, upper), either side may be infinite.
struct TruncationInterval {
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
};

double normal_cdf(double x);
double normal_quantile(double p);
double normal_logpdf(double x, double mean, double sd);

// Draw from N(mean, sd^2) restricted to (interval.lower, interval.upper).
// Inverse-CDF transform on the interval mass, switching to a one-sided
// exponential rejection step when the whole interval lies past ~5 sd, where
// the CDF transform runs out of precision. The returned value is strictly
// inside the open interval.
double sample_truncated_normal(double mean, double sd, TruncationInterval interval,
                               RngStream& rng);

// Draw from MVN(mean, cov); cov must be SPD.
Eigen::VectorXd sample_mvn(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                           RngStream& rng);

// Draw from MVN(P^{-1} h, P^{-1}) given the precision matrix P and linear
// term h, without forming the covariance.
Eigen::VectorXd sample_mvn_precision(const Eigen::MatrixXd& precision,
                                     const Eigen::VectorXd& linear, RngStream& rng);

// Same, reusing an existing Cholesky of the precision.
Eigen::VectorXd sample_mvn_precision(const Eigen::LLT<Eigen::MatrixXd>& chol,
                                     const Eigen::VectorXd& linear, RngStream& rng);

// Dirichlet(alpha); the result is renormalized so its entries sum to 1.0
// exactly.
Eigen::VectorXd sample_dirichlet(const Eigen::VectorXd& alpha, RngStream& rng);

// Inverse gamma with density proportional to x^{-shape-1} exp(-scale / x).
double sample_inverse_gamma(double shape, double scale, RngStream& rng);

// Categorical draw from probabilities (must be nonnegative, sum within 1e-10
// of 1) or from unnormalized log probabilities.
int sample_categorical(const Eigen::VectorXd& probs, RngStream& rng);
int sample_categorical_logits(const Eigen::VectorXd& logits, RngStream& rng);

// log MVN(x; mean, cov) via Cholesky.
double mvn_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                  const Eigen::MatrixXd& cov);

// log MVN(x; mean, diag(psi) + lambda lambda^T) evaluated through the
// rank-Q decomposition: the (Q x Q) capacitance system replaces the dense
// (D x D) solve, so cost scales with D Q^2 instead of D^3.
double mvn_logpdf_lowrank(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                          const Eigen::MatrixXd& lambda, const Eigen::VectorXd& psi);

// Factored form of the low-rank density for evaluating many points against
// one set of parameters: the capacitance Cholesky and log-determinant are
// computed once.
class LowRankGaussian {
 public:
  LowRankGaussian(Eigen::VectorXd mean, Eigen::MatrixXd lambda, Eigen::VectorXd psi);
  double logpdf(const Eigen::VectorXd& x) const;
  int dim() const { return static_cast<int>(mean_.size()); }

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd lambda_;
  Eigen::VectorXd psi_inv_;
  Eigen::LLT<Eigen::MatrixXd> capacitance_;
  double log_det_ = 0.0;
};

}  // namespace mfamd
