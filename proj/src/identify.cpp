#include "mfamd/identify.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <numeric>

#include "mfamd/errors.hpp"

namespace mfamd {

Eigen::MatrixXd procrustes_rotation(const Eigen::MatrixXd& lambda,
                                    const Eigen::MatrixXd& target) {
  if (lambda.rows() != target.rows() || lambda.cols() != target.cols())
    throw DimensionError("procrustes_rotation: shape mismatch");
  const Eigen::MatrixXd c = lambda.transpose() * target;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(c, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().transpose();
}

namespace {

int argmax_loglik(const std::vector<Draw>& draws) {
  int best = 0;
  for (size_t t = 1; t < draws.size(); ++t)
    if (draws[t].loglik > draws[best].loglik) best = static_cast<int>(t);
  return best;
}

void require_full_rank(const Eigen::MatrixXd& target) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(target);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || !(s[s.size() - 1] > 1e-12 * s[0]))
    throw RankDeficientTemplateError("align_loadings: template loadings are rank deficient");
}

}  // namespace

RotationReport align_loadings(std::vector<Draw>& draws) {
  RotationReport report;
  if (draws.empty()) return report;
  const int ref = argmax_loglik(draws);
  report.template_draw = ref;
  const int G = static_cast<int>(draws[ref].lambda_tilde.size());
  const int Q = static_cast<int>(draws[ref].lambda_tilde.empty()
                                     ? 0
                                     : draws[ref].lambda_tilde[0].cols() - 1);
  if (Q == 0) return report;

  std::vector<Eigen::MatrixXd> templates(G);
  for (int g = 0; g < G; ++g) {
    templates[g] = draws[ref].lambda_tilde[g].rightCols(Q);
    require_full_rank(templates[g]);
  }
  for (size_t t = 0; t < draws.size(); ++t) {
    for (int g = 0; g < G; ++g) {
      Eigen::MatrixXd lam = draws[t].lambda_tilde[g].rightCols(Q);
      const Eigen::MatrixXd r = procrustes_rotation(lam, templates[g]);
      draws[t].lambda_tilde[g].rightCols(Q) = lam * r;
      report.records.push_back({static_cast<int>(t), g, r});
    }
  }
  return report;
}

std::vector<int> best_label_permutation(const std::vector<int>& labels,
                                        const std::vector<int>& reference, int G) {
  if (labels.size() != reference.size())
    throw DimensionError("best_label_permutation: length mismatch");
  // Contingency counts: cont(a, b) counts i with labels_i = a, reference_i = b.
  Eigen::MatrixXi cont = Eigen::MatrixXi::Zero(G, G);
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= G || reference[i] < 0 || reference[i] >= G)
      throw DimensionError("best_label_permutation: label out of range");
    ++cont(labels[i], reference[i]);
  }
  // G is a handful here, so exact enumeration beats Hungarian bookkeeping.
  std::vector<int> perm(G), best(G);
  std::iota(perm.begin(), perm.end(), 0);
  best = perm;
  long best_score = -1;
  do {
    long score = 0;
    for (int g = 0; g < G; ++g) score += cont(g, perm[g]);
    if (score > best_score) {
      best_score = score;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

RelabelingReport relabel_draws(std::vector<Draw>& draws) {
  RelabelingReport report;
  if (draws.empty()) return report;
  const int ref = argmax_loglik(draws);
  report.reference_draw = ref;
  const std::vector<int> reference = draws[ref].alloc;
  const int G = static_cast<int>(draws[ref].pi.size());

  for (size_t t = 0; t < draws.size(); ++t) {
    const std::vector<int> sigma = best_label_permutation(draws[t].alloc, reference, G);
    Draw& d = draws[t];
    Eigen::VectorXd pi(G);
    std::vector<Eigen::MatrixXd> lam(G);
    for (int g = 0; g < G; ++g) {
      pi[sigma[g]] = d.pi[g];
      lam[sigma[g]] = std::move(d.lambda_tilde[g]);
    }
    d.pi = std::move(pi);
    d.lambda_tilde = std::move(lam);
    for (int& a : d.alloc) a = sigma[a];
    report.records.push_back({static_cast<int>(t), sigma});
  }
  return report;
}

}  // namespace mfamd
