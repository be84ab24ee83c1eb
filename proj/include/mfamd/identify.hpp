#pragma once

#include <Eigen/Dense>
#include <vector>

namespace mfamd {

// One retained draw of the cluster parameters, on retained dims only.
// lambda_tilde[g] is D_ret x (Q+1), column 0 the cluster mean.
struct Draw {
  Eigen::VectorXd pi;
  std::vector<Eigen::MatrixXd> lambda_tilde;
  Eigen::VectorXd psi;        // retained continuous dims
  std::vector<int> alloc;
  double loglik = 0.0;
};

struct RotationRecord {
  int draw = 0;
  int cluster = 0;
  Eigen::MatrixXd rotation;  // Q x Q orthogonal
};

struct RotationReport {
  int template_draw = -1;    // index of the reference draw
  std::vector<RotationRecord> records;
};

// Orthogonal matrix R minimizing ||lambda R - target||_F, via the SVD of
// target^T lambda.
Eigen::MatrixXd procrustes_rotation(const Eigen::MatrixXd& lambda,
                                    const Eigen::MatrixXd& target);

// Rotates every draw's loadings onto the loadings of the highest-likelihood
// draw, cluster by cluster. Cluster means and uniquenesses are untouched, and
// lambda lambda^T is preserved up to floating point. Call after relabeling.
RotationReport align_loadings(std::vector<Draw>& draws);

struct RelabelRecord {
  int draw = 0;
  std::vector<int> permutation;  // new label of old cluster g
};

struct RelabelingReport {
  int reference_draw = -1;
  std::vector<RelabelRecord> records;
};

// Undoes label switching: each draw's clusters are permuted to minimize
// misclassification against the reference allocation (the allocation of the
// highest-likelihood draw), solving the assignment problem exactly. The
// permutation is applied to pi, lambda_tilde and alloc; per-draw logliks are
// label-invariant and left untouched.
RelabelingReport relabel_draws(std::vector<Draw>& draws);

// Exact assignment: permutation sigma maximizing the number of i with
// sigma(labels[i]) == reference[i]. Returned as sigma[old] = new.
std::vector<int> best_label_permutation(const std::vector<int>& labels,
                                        const std::vector<int>& reference, int G);

}  // namespace mfamd
