// Sampler primitives checked against closed forms and independent oracles:
// Kolmogorov-Smirnov tests for the truncated normal (including far-tail
// intervals), moment checks for Dirichlet / inverse gamma / MVN draws, and
// exact density values for the log-pdf evaluators.

#include <doctest.h>

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <limits>
#include <vector>

#include "mfamd/distributions.hpp"
#include "mfamd/errors.hpp"
#include "mfamd/rng.hpp"
#include "test_util.hpp"

using namespace mfamd;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Numerically stable truncated-normal CDF oracle built on boost's normal,
// using complementary CDFs so far-tail intervals keep full precision.
double trunc_normal_cdf(double x, double mean, double sd, double lo, double hi) {
  const boost::math::normal_distribution<double> nd(mean, sd);
  if (x <= lo) return 0.0;
  if (x >= hi) return 1.0;
  const double std_lo = (lo - mean) / sd;
  if (std_lo >= 0.0) {
    // Whole interval in the upper tail: work with survival functions.
    const double s_lo = boost::math::cdf(boost::math::complement(nd, lo));
    const double s_hi = std::isinf(hi) ? 0.0 : boost::math::cdf(boost::math::complement(nd, hi));
    const double s_x = boost::math::cdf(boost::math::complement(nd, x));
    return (s_lo - s_x) / (s_lo - s_hi);
  }
  const double f_lo = std::isinf(lo) ? 0.0 : boost::math::cdf(nd, lo);
  const double f_hi = std::isinf(hi) ? 1.0 : boost::math::cdf(nd, hi);
  return (boost::math::cdf(nd, x) - f_lo) / (f_hi - f_lo);
}

struct TruncSetting {
  double mean, sd, lo, hi;
};

}  // namespace

TEST_CASE("truncated normal matches its distribution in 20 randomized settings (KS, alpha=0.01)") {
  RngStream rng(20240816);
  std::mt19937_64 pick(7);
  std::uniform_real_distribution<double> um(-3.0, 3.0);
  std::uniform_real_distribution<double> us(0.2, 4.0);

  std::vector<TruncSetting> settings;
  // Randomized two-sided intervals.
  for (int k = 0; k < 8; ++k) {
    const double m = um(pick);
    const double s = us(pick);
    const double a = m + s * um(pick);
    const double w = 0.3 + 2.5 * std::uniform_real_distribution<double>(0, 1)(pick);
    settings.push_back({m, s, a, a + w * s});
  }
  // One-sided lower truncations, pushed into the far tail where the inverse-CDF
  // transform loses precision and the rejection path must take over.
  for (double a : {-2.0, 0.0, 2.0, 5.0, 6.5, 8.0}) settings.push_back({0.0, 1.0, a, kInf});
  // One-sided upper truncations (mirror image).
  for (double b : {-5.0, -1.0, 1.5}) settings.push_back({0.0, 1.0, -kInf, b});
  // Narrow slices deep in the tail, plus shifted/scaled variants.
  settings.push_back({0.0, 1.0, 5.0, 5.5});
  settings.push_back({-1.5, 0.4, -1.0, -0.8});
  settings.push_back({10.0, 2.0, 16.0, kInf});
  REQUIRE(settings.size() == 20);

  const int n = 4000;
  for (const auto& st : settings) {
    CAPTURE(st.mean);
    CAPTURE(st.sd);
    CAPTURE(st.lo);
    CAPTURE(st.hi);
    std::vector<double> sample(n);
    for (int i = 0; i < n; ++i) {
      const double x = sample_truncated_normal(st.mean, st.sd, {st.lo, st.hi}, rng);
      CHECK(x > st.lo);
      CHECK(x < st.hi);
      sample[static_cast<std::size_t>(i)] = x;
    }
    const double d = testutil::ks_statistic(
        sample, [&](double x) { return trunc_normal_cdf(x, st.mean, st.sd, st.lo, st.hi); });
    CHECK(d < testutil::ks_critical_alpha01(n));
  }
}

TEST_CASE("half-normal mean is sqrt(2/pi)") {
  RngStream rng(99);
  const int n = 100000;
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += sample_truncated_normal(0.0, 1.0, {0.0, kInf}, rng);
  const double mean = s / n;
  CHECK(std::abs(mean - 0.7978845608028654) < 0.01);
}

TEST_CASE("truncated normal rejects an empty interval") {
  RngStream rng(1);
  CHECK_THROWS_AS(sample_truncated_normal(0.0, 1.0, {1.0, 1.0}, rng), InvalidIntervalError);
  CHECK_THROWS_AS(sample_truncated_normal(0.0, 1.0, {2.0, -2.0}, rng), InvalidIntervalError);
  CHECK_THROWS_AS(sample_truncated_normal(0.0, -1.0, {0.0, 1.0}, rng), NonPositiveParameterError);
}

TEST_CASE("normal cdf / quantile / logpdf closed forms") {
  CHECK(normal_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(normal_cdf(1.959963984540054) == doctest::Approx(0.975).epsilon(1e-9));
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-9));
  for (double p : {0.001, 0.3, 0.5, 0.9, 0.9999})
    CHECK(normal_cdf(normal_quantile(p)) == doctest::Approx(p).epsilon(1e-9));
  // log N(0; 0, 1) = -0.5 log(2 pi)
  CHECK(normal_logpdf(0.0, 0.0, 1.0) == doctest::Approx(-0.9189385332046727).epsilon(1e-12));
  // log N(1; 2, 0.5^2) = -log(0.5) - 0.5 log(2 pi) - 0.5 * (1-2)^2 / 0.25
  CHECK(normal_logpdf(1.0, 2.0, 0.5) ==
        doctest::Approx(std::log(2.0) - 0.9189385332046727 - 2.0).epsilon(1e-12));
}

TEST_CASE("mvn logpdf closed forms and error conditions") {
  Eigen::VectorXd x1(1), m1(1);
  x1 << 0.0;
  m1 << 0.0;
  Eigen::MatrixXd c1 = Eigen::MatrixXd::Identity(1, 1);
  CHECK(mvn_logpdf(x1, m1, c1) == doctest::Approx(-0.9189385332046727).epsilon(1e-14));

  // 2-D correlated case against the explicit quadratic form.
  Eigen::VectorXd x(2), m(2);
  x << 1.0, -0.5;
  m << 0.2, 0.3;
  Eigen::MatrixXd c(2, 2);
  c << 2.0, 0.6, 0.6, 1.0;
  const double det = 2.0 * 1.0 - 0.36;
  Eigen::MatrixXd cinv(2, 2);
  cinv << 1.0, -0.6, -0.6, 2.0;
  cinv /= det;
  const Eigen::VectorXd d = x - m;
  const double expected =
      -std::log(2.0 * M_PI) - 0.5 * std::log(det) - 0.5 * d.dot(cinv * d);
  CHECK(mvn_logpdf(x, m, c) == doctest::Approx(expected).epsilon(1e-12));

  Eigen::MatrixXd bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;  // indefinite
  CHECK_THROWS_AS(mvn_logpdf(x, m, bad), NonSpdCovarianceError);
}

TEST_CASE("low-rank logpdf agrees with the dense evaluation") {
  RngStream rng(4242);
  const int d = 7, q = 2;
  Eigen::MatrixXd lambda(d, q);
  Eigen::VectorXd mean(d), psi(d);
  for (int i = 0; i < d; ++i) {
    mean(i) = rng.normal();
    psi(i) = 0.3 + rng.uniform() * 2.0;
    for (int j = 0; j < q; ++j) lambda(i, j) = rng.normal();
  }
  const Eigen::MatrixXd cov =
      lambda * lambda.transpose() + psi.asDiagonal().toDenseMatrix();
  LowRankGaussian lr(mean, lambda, psi);
  for (int t = 0; t < 25; ++t) {
    Eigen::VectorXd x(d);
    for (int i = 0; i < d; ++i) x(i) = mean(i) + 3.0 * rng.normal();
    const double dense = mvn_logpdf(x, mean, cov);
    CHECK(std::abs(lr.logpdf(x) - dense) < 1e-8);
    CHECK(std::abs(mvn_logpdf_lowrank(x, mean, lambda, psi) - dense) < 1e-8);
  }
}

TEST_CASE("low-rank logpdf handles Q = 0 loadings") {
  Eigen::VectorXd mean(3), psi(3), x(3);
  mean << 0.0, 1.0, -1.0;
  psi << 1.0, 2.0, 0.5;
  x << 0.3, 0.7, -0.2;
  Eigen::MatrixXd lambda(3, 0);
  double expected = 0.0;
  for (int i = 0; i < 3; ++i)
    expected += normal_logpdf(x(i), mean(i), std::sqrt(psi(i)));
  CHECK(mvn_logpdf_lowrank(x, mean, lambda, psi) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("dirichlet draws sum to exactly one and match Dir(0.5, 0.5) moments") {
  RngStream rng(555);
  Eigen::VectorXd alpha(2);
  alpha << 0.5, 0.5;
  const int n = 60000;
  std::vector<double> first;
  first.reserve(n);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd p = sample_dirichlet(alpha, rng);
    CHECK(p.sum() == 1.0);  // exact by construction
    CHECK(p.minCoeff() >= 0.0);
    first.push_back(p(0));
  }
  // Dir(0.5, 0.5): E = 0.5, Var = 0.25 / 2 = 0.125.
  const double se = testutil::iid_se(first);
  CHECK(std::abs(testutil::mean_of(first) - 0.5) < 3.0 * se);
  CHECK(testutil::variance_of(first) == doctest::Approx(0.125).epsilon(0.02));

  Eigen::VectorXd bad(2);
  bad << 0.5, 0.0;
  CHECK_THROWS_AS(sample_dirichlet(bad, rng), NonPositiveParameterError);
}

TEST_CASE("inverse gamma(7, 7) moments and density mode") {
  RngStream rng(777);
  const int n = 200000;
  std::vector<double> x(n);
  for (int i = 0; i < n; ++i) {
    x[static_cast<std::size_t>(i)] = sample_inverse_gamma(7.0, 7.0, rng);
    CHECK(x[static_cast<std::size_t>(i)] > 0.0);
  }
  // shape a=7, scale b=7: mean b/(a-1) = 7/6, var b^2/((a-1)^2 (a-2)) = 49/180.
  const double mean = testutil::mean_of(x);
  CHECK(std::abs(mean - 7.0 / 6.0) < 3.0 * testutil::iid_se(x));
  CHECK(testutil::variance_of(x) == doctest::Approx(49.0 / 180.0).epsilon(0.05));
  // Histogram mode near b/(a+1) = 0.875.
  const double lo = 0.2, hi = 2.4, bw = 0.05;
  std::vector<int> hist(static_cast<std::size_t>((hi - lo) / bw) + 1, 0);
  for (double v : x)
    if (v >= lo && v < hi) ++hist[static_cast<std::size_t>((v - lo) / bw)];
  const std::size_t arg = static_cast<std::size_t>(
      std::max_element(hist.begin(), hist.end()) - hist.begin());
  const double mode = lo + (static_cast<double>(arg) + 0.5) * bw;
  CHECK(std::abs(mode - 0.875) < 0.06);

  CHECK_THROWS_AS(sample_inverse_gamma(0.0, 1.0, rng), NonPositiveParameterError);
  CHECK_THROWS_AS(sample_inverse_gamma(1.0, -1.0, rng), NonPositiveParameterError);
}

TEST_CASE("categorical draws match their probabilities") {
  RngStream rng(31);
  Eigen::VectorXd probs(4);
  probs << 0.1, 0.4, 0.25, 0.25;
  const int n = 80000;
  Eigen::VectorXd freq = Eigen::VectorXd::Zero(4);
  for (int i = 0; i < n; ++i) freq(sample_categorical(probs, rng)) += 1.0;
  freq /= n;
  for (int k = 0; k < 4; ++k) {
    const double se = std::sqrt(probs(k) * (1 - probs(k)) / n);
    CHECK(std::abs(freq(k) - probs(k)) < 4.0 * se);
  }

  // Logit form must agree with the normalized version of exp(logits).
  Eigen::VectorXd logits(3);
  logits << 100.0, 101.0, 99.0;  // large offsets: must not overflow
  Eigen::VectorXd p = (logits.array() - logits.maxCoeff()).exp();
  p /= p.sum();
  Eigen::VectorXd freq2 = Eigen::VectorXd::Zero(3);
  for (int i = 0; i < n; ++i) freq2(sample_categorical_logits(logits, rng)) += 1.0;
  freq2 /= n;
  for (int k = 0; k < 3; ++k) CHECK(std::abs(freq2(k) - p(k)) < 0.01);

  Eigen::VectorXd bad(2);
  bad << 0.7, 0.2;  // sums to 0.9
  CHECK_THROWS_AS(sample_categorical(bad, rng), NonPositiveParameterError);
}

TEST_CASE("precision-form MVN sampling matches the covariance form in moments") {
  RngStream rng(2024);
  Eigen::MatrixXd cov(3, 3);
  cov << 2.0, 0.5, 0.2, 0.5, 1.5, -0.3, 0.2, -0.3, 1.0;
  Eigen::VectorXd mean(3);
  mean << 1.0, -2.0, 0.5;
  const Eigen::MatrixXd precision = cov.inverse();
  const Eigen::VectorXd linear = precision * mean;

  const int n = 60000;
  Eigen::MatrixXd draws(n, 3);
  for (int i = 0; i < n; ++i) draws.row(i) = sample_mvn_precision(precision, linear, rng).transpose();
  const Eigen::VectorXd emp_mean = draws.colwise().mean();
  Eigen::MatrixXd centered = draws.rowwise() - emp_mean.transpose();
  const Eigen::MatrixXd emp_cov = centered.transpose() * centered / (n - 1.0);
  for (int i = 0; i < 3; ++i) {
    CHECK(std::abs(emp_mean(i) - mean(i)) < 0.05);
    for (int j = 0; j < 3; ++j) CHECK(std::abs(emp_cov(i, j) - cov(i, j)) < 0.08);
  }

  // The LLT overload must reproduce the same distribution.
  Eigen::LLT<Eigen::MatrixXd> chol(precision);
  Eigen::MatrixXd draws2(n, 3);
  for (int i = 0; i < n; ++i) draws2.row(i) = sample_mvn_precision(chol, linear, rng).transpose();
  const Eigen::VectorXd emp_mean2 = draws2.colwise().mean();
  for (int i = 0; i < 3; ++i) CHECK(std::abs(emp_mean2(i) - mean(i)) < 0.05);

  // Covariance-form sampler: same moments.
  Eigen::MatrixXd draws3(n, 3);
  for (int i = 0; i < n; ++i) draws3.row(i) = sample_mvn(mean, cov, rng).transpose();
  const Eigen::VectorXd emp_mean3 = draws3.colwise().mean();
  Eigen::MatrixXd centered3 = draws3.rowwise() - emp_mean3.transpose();
  const Eigen::MatrixXd emp_cov3 = centered3.transpose() * centered3 / (n - 1.0);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(std::abs(emp_cov3(i, j) - cov(i, j)) < 0.08);

  Eigen::MatrixXd bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;
  CHECK_THROWS_AS(sample_mvn(mean.head(2), bad, rng), NonSpdCovarianceError);
}

TEST_CASE("substreams are reproducible and independent of parent state") {
  RngStream parent(123);
  RngStream a = parent.substream(5);
  parent.normal();  // consume parent state
  RngStream b = parent.substream(5);
  CHECK(a.normal() == b.normal());  // derivation depends on key only
  RngStream c = parent.substream(6);
  RngStream d = parent.substream(5, 6);
  CHECK(c.key() != a.key());
  CHECK(d.key() != c.key());
}
