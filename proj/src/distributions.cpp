#include "mfamd/distributions.hpp"

#include <boost/math/distributions/normal.hpp>
#include <cmath>

#include "mfamd/errors.hpp"

namespace mfamd {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// Past this many sd the CDF transform loses the interval mass to rounding;
// switch to tail rejection.
constexpr double kTailThreshold = 5.0;

const boost::math::normal_distribution<double> kUnitNormal(0.0, 1.0);

// Robert-style exponential rejection for a standard normal restricted to
// [a, b) with a deep in the right tail. Proposal is a shifted exponential
// with the optimal rate for the one-sided problem; draws past b are rejected.
double sample_right_tail(double a, double b, RngStream& rng) {
  const double rate = 0.5 * (a + std::sqrt(a * a + 4.0));
  for (;;) {
    const double u = rng.uniform();
    const double x = a - std::log1p(-u) / rate;
    if (x >= b) continue;
    const double d = x - rate;
    if (std::log(rng.uniform()) <= -0.5 * d * d) return x;
  }
}

}  // namespace

double normal_cdf(double x) { return boost::math::cdf(kUnitNormal, x); }

double normal_quantile(double p) { return boost::math::quantile(kUnitNormal, p); }

double normal_logpdf(double x, double mean, double sd) {
  const double t = (x - mean) / sd;
  return -0.5 * (kLog2Pi + t * t) - std::log(sd);
}

double sample_truncated_normal(double mean, double sd, TruncationInterval interval,
                               RngStream& rng) {
  if (!(sd > 0.0)) throw NonPositiveParameterError("truncated normal: sd must be > 0");
  if (!(interval.lower < interval.upper))
    throw InvalidIntervalError("truncated normal: empty interval");

  const double a = (interval.lower - mean) / sd;
  const double b = (interval.upper - mean) / sd;

  double z;
  if (a >= kTailThreshold) {
    z = sample_right_tail(a, b, rng);
  } else if (b <= -kTailThreshold) {
    z = -sample_right_tail(-b, -a, rng);
  } else if (a >= 0.0) {
    // Both bounds right of the mean: work with upper-tail masses, which keep
    // full relative precision where cdf() saturates at 1.
    const double qa = boost::math::cdf(boost::math::complement(kUnitNormal, a));
    const double qb = std::isinf(b)
                          ? 0.0
                          : boost::math::cdf(boost::math::complement(kUnitNormal, b));
    const double q = qb + rng.uniform() * (qa - qb);
    z = boost::math::quantile(boost::math::complement(kUnitNormal, q));
  } else if (b <= 0.0) {
    const double pa = std::isinf(a) ? 0.0 : boost::math::cdf(kUnitNormal, a);
    const double pb = boost::math::cdf(kUnitNormal, b);
    z = boost::math::quantile(kUnitNormal, pa + rng.uniform() * (pb - pa));
  } else {
    const double pa = std::isinf(a) ? 0.0 : boost::math::cdf(kUnitNormal, a);
    const double pb = std::isinf(b) ? 1.0 : boost::math::cdf(kUnitNormal, b);
    z = boost::math::quantile(kUnitNormal, pa + rng.uniform() * (pb - pa));
  }

  double x = mean + sd * z;
  // Quantile rounding can land exactly on a finite bound; the support is the
  // open interval, so nudge inward.
  if (x <= interval.lower) x = std::nextafter(interval.lower, interval.upper);
  if (x >= interval.upper) x = std::nextafter(interval.upper, interval.lower);
  return x;
}

Eigen::VectorXd sample_mvn(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                           RngStream& rng) {
  if (cov.rows() != cov.cols() || cov.rows() != mean.size())
    throw DimensionError("sample_mvn: shape mismatch");
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw NonSpdCovarianceError("sample_mvn: covariance is not SPD");
  Eigen::VectorXd z(mean.size());
  for (int i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return mean + llt.matrixL() * z;
}

Eigen::VectorXd sample_mvn_precision(const Eigen::LLT<Eigen::MatrixXd>& chol,
                                     const Eigen::VectorXd& linear, RngStream& rng) {
  // P = L L^T; mean = P^{-1} h, draw = mean + L^{-T} z.
  Eigen::VectorXd mean = chol.solve(linear);
  Eigen::VectorXd z(linear.size());
  for (int i = 0; i < z.size(); ++i) z[i] = rng.normal();
  chol.matrixU().solveInPlace(z);
  return mean + z;
}

Eigen::VectorXd sample_mvn_precision(const Eigen::MatrixXd& precision,
                                     const Eigen::VectorXd& linear, RngStream& rng) {
  if (precision.rows() != precision.cols() || precision.rows() != linear.size())
    throw DimensionError("sample_mvn_precision: shape mismatch");
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success)
    throw NonSpdCovarianceError("sample_mvn_precision: precision is not SPD");
  return sample_mvn_precision(llt, linear, rng);
}

Eigen::VectorXd sample_dirichlet(const Eigen::VectorXd& alpha, RngStream& rng) {
  if (alpha.size() == 0) throw DimensionError("sample_dirichlet: empty alpha");
  Eigen::VectorXd v(alpha.size());
  for (int i = 0; i < alpha.size(); ++i) {
    if (!(alpha[i] > 0.0))
      throw NonPositiveParameterError("sample_dirichlet: alpha must be > 0");
    // gamma_distribution can underflow to exactly 0 for small shapes; that
    // would produce a zero proportion, so nudge to the smallest positive.
    double g = rng.gamma(alpha[i], 1.0);
    v[i] = g > 0.0 ? g : std::numeric_limits<double>::min();
  }
  v /= v.sum();
  // Pin the sum to exactly 1.0 by absorbing the rounding residue into the
  // largest entry. One absorption is not always enough: changing an entry
  // re-rounds the accumulation, so repeat until the residue vanishes.
  Eigen::Index imax;
  v.maxCoeff(&imax);
  for (int pass = 0; pass < 32; ++pass) {
    const double resid = 1.0 - v.sum();
    if (resid == 0.0) break;
    v[imax] += resid;
  }
  return v;
}

double sample_inverse_gamma(double shape, double scale, RngStream& rng) {
  if (!(shape > 0.0) || !(scale > 0.0))
    throw NonPositiveParameterError("sample_inverse_gamma: shape and scale must be > 0");
  // X ~ Gamma(shape, rate=scale) => 1/X ~ InvGamma(shape, scale).
  double g = rng.gamma(shape, 1.0 / scale);
  if (g <= 0.0) g = std::numeric_limits<double>::min();
  return 1.0 / g;
}

int sample_categorical(const Eigen::VectorXd& probs, RngStream& rng) {
  if (probs.size() == 0) throw DimensionError("sample_categorical: empty probs");
  double total = 0.0;
  for (int i = 0; i < probs.size(); ++i) {
    if (probs[i] < 0.0)
      throw NonPositiveParameterError("sample_categorical: negative probability");
    total += probs[i];
  }
  if (std::abs(total - 1.0) > 1e-10)
    throw NonPositiveParameterError("sample_categorical: probabilities must sum to 1");
  const double u = rng.uniform() * total;
  double acc = 0.0;
  for (int i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return static_cast<int>(probs.size()) - 1;
}

int sample_categorical_logits(const Eigen::VectorXd& logits, RngStream& rng) {
  if (logits.size() == 0) throw DimensionError("sample_categorical_logits: empty logits");
  const double m = logits.maxCoeff();
  Eigen::VectorXd w = (logits.array() - m).exp();
  const double u = rng.uniform() * w.sum();
  double acc = 0.0;
  for (int i = 0; i < w.size(); ++i) {
    acc += w[i];
    if (u < acc) return i;
  }
  return static_cast<int>(w.size()) - 1;
}

double mvn_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                  const Eigen::MatrixXd& cov) {
  if (cov.rows() != cov.cols() || cov.rows() != mean.size() || x.size() != mean.size())
    throw DimensionError("mvn_logpdf: shape mismatch");
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw NonSpdCovarianceError("mvn_logpdf: covariance is not SPD");
  Eigen::VectorXd sol = llt.matrixL().solve(x - mean);
  double log_det = 0.0;
  for (int i = 0; i < cov.rows(); ++i)
    log_det += 2.0 * std::log(llt.matrixL()(i, i));
  return -0.5 * (mean.size() * kLog2Pi + log_det + sol.squaredNorm());
}

LowRankGaussian::LowRankGaussian(Eigen::VectorXd mean, Eigen::MatrixXd lambda,
                                 Eigen::VectorXd psi)
    : mean_(std::move(mean)), lambda_(std::move(lambda)) {
  const int D = static_cast<int>(mean_.size());
  const int Q = static_cast<int>(lambda_.cols());
  if (lambda_.rows() != D || psi.size() != D)
    throw DimensionError("LowRankGaussian: shape mismatch");
  for (int d = 0; d < D; ++d)
    if (!(psi[d] > 0.0))
      throw NonPositiveParameterError("LowRankGaussian: psi must be > 0");
  psi_inv_ = psi.cwiseInverse();

  // Capacitance M = I_Q + Lambda^T Psi^{-1} Lambda; |Sigma| = |M| prod psi.
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(Q, Q);
  m.noalias() += lambda_.transpose() * psi_inv_.asDiagonal() * lambda_;
  capacitance_.compute(m);
  if (capacitance_.info() != Eigen::Success)
    throw NonSpdCovarianceError("LowRankGaussian: capacitance is not SPD");
  log_det_ = psi.array().log().sum();
  for (int q = 0; q < Q; ++q)
    log_det_ += 2.0 * std::log(capacitance_.matrixL()(q, q));
}

double LowRankGaussian::logpdf(const Eigen::VectorXd& x) const {
  if (x.size() != mean_.size()) throw DimensionError("LowRankGaussian: bad point");
  Eigen::VectorXd r = x - mean_;
  Eigen::VectorXd w = psi_inv_.cwiseProduct(r);
  // Woodbury: r^T Sigma^{-1} r = r^T Psi^{-1} r - u^T M^{-1} u, u = Lambda^T w.
  Eigen::VectorXd u = lambda_.transpose() * w;
  Eigen::VectorXd su = capacitance_.matrixL().solve(u);
  const double quad = r.dot(w) - su.squaredNorm();
  return -0.5 * (mean_.size() * kLog2Pi + log_det_ + quad);
}

double mvn_logpdf_lowrank(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                          const Eigen::MatrixXd& lambda, const Eigen::VectorXd& psi) {
  return LowRankGaussian(mean, lambda, psi).logpdf(x);
}

}  // namespace mfamd
