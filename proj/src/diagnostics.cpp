#include "mfamd/diagnostics.hpp"

#include <cmath>
#include <map>

#include "mfamd/csv.hpp"
#include "mfamd/errors.hpp"

namespace mfamd {

MembershipSummary membership_summary(const std::vector<std::vector<int>>& alloc_draws,
                                     int G) {
  if (alloc_draws.empty()) throw DimensionError("membership_summary: no draws");
  const int N = static_cast<int>(alloc_draws.front().size());
  MembershipSummary ms;
  ms.probs = Eigen::MatrixXd::Zero(N, G);
  for (const auto& alloc : alloc_draws) {
    if (static_cast<int>(alloc.size()) != N)
      throw DimensionError("membership_summary: ragged draws");
    for (int i = 0; i < N; ++i) {
      if (alloc[i] < 0 || alloc[i] >= G)
        throw DimensionError("membership_summary: label out of range");
      ms.probs(i, alloc[i]) += 1.0;
    }
  }
  ms.probs /= static_cast<double>(alloc_draws.size());
  ms.hard.resize(N);
  ms.uncertainty.resize(N);
  for (int i = 0; i < N; ++i) {
    Eigen::Index g;
    const double p = ms.probs.row(i).maxCoeff(&g);
    ms.hard[i] = static_cast<int>(g);
    ms.uncertainty[i] = 1.0 - p;
  }
  return ms;
}

namespace {

// Pair-counting sums from the contingency table of two partitions.
struct PairCounts {
  double n_pairs = 0;     // C(N, 2)
  double sum_cells = 0;   // sum over cells of C(n_ab, 2)
  double sum_rows = 0;    // sum over a of C(n_a., 2)
  double sum_cols = 0;    // sum over b of C(n_.b, 2)
};

double choose2(double n) { return 0.5 * n * (n - 1.0); }

PairCounts pair_counts(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw DimensionError("pair counting: need two equal-length partitions of >= 2 items");
  std::map<std::pair<int, int>, double> cells;
  std::map<int, double> rows, cols;
  for (size_t i = 0; i < a.size(); ++i) {
    ++cells[{a[i], b[i]}];
    ++rows[a[i]];
    ++cols[b[i]];
  }
  PairCounts pc;
  pc.n_pairs = choose2(static_cast<double>(a.size()));
  for (const auto& kv : cells) pc.sum_cells += choose2(kv.second);
  for (const auto& kv : rows) pc.sum_rows += choose2(kv.second);
  for (const auto& kv : cols) pc.sum_cols += choose2(kv.second);
  return pc;
}

}  // namespace

double rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  const PairCounts pc = pair_counts(a, b);
  // Agreements = pairs together in both + pairs apart in both.
  const double agree = pc.n_pairs + 2.0 * pc.sum_cells - pc.sum_rows - pc.sum_cols;
  return agree / pc.n_pairs;
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  const PairCounts pc = pair_counts(a, b);
  const double expected = pc.sum_rows * pc.sum_cols / pc.n_pairs;
  const double maximum = 0.5 * (pc.sum_rows + pc.sum_cols);
  if (maximum == expected) return maximum == pc.sum_cells ? 1.0 : 0.0;
  return (pc.sum_cells - expected) / (maximum - expected);
}

double continuous_residual(double z, double fitted, double psi,
                           bool literal_psi_denominator) {
  if (!(psi > 0.0))
    throw NonPositiveParameterError("continuous_residual: psi must be > 0");
  return (z - fitted) / (literal_psi_denominator ? psi : std::sqrt(psi));
}

void write_membership_csv(const std::string& path, const MembershipSummary& ms) {
  CsvTable table;
  std::vector<std::string> header{"row"};
  for (int g = 0; g < ms.probs.cols(); ++g) header.push_back("p" + std::to_string(g + 1));
  header.push_back("hard");
  header.push_back("uncertainty");
  table.push_back(std::move(header));
  for (int i = 0; i < ms.probs.rows(); ++i) {
    std::vector<std::string> row{std::to_string(i)};
    for (int g = 0; g < ms.probs.cols(); ++g)
      row.push_back(format_double(ms.probs(i, g)));
    row.push_back(std::to_string(ms.hard[i] + 1));
    row.push_back(format_double(ms.uncertainty[i]));
    table.push_back(std::move(row));
  }
  write_csv_file(path, table);
}

void write_residuals_csv(const std::string& path, const ResidualSamples& rs,
                         const std::vector<std::string>& dim_names_cont,
                         const std::vector<std::string>& dim_names_cat) {
  CsvTable table;
  table.push_back({"draw", "row", "dimension", "kind", "residual"});
  for (size_t t = 0; t < rs.continuous.size(); ++t) {
    for (size_t r = 0; r < rs.rows.size(); ++r) {
      for (size_t c = 0; c < rs.cont_dims.size(); ++c)
        table.push_back({std::to_string(t), std::to_string(rs.rows[r]),
                         dim_names_cont[c], "continuous",
                         format_double(rs.continuous[t](r, c))});
      for (size_t c = 0; c < rs.cat_dims.size(); ++c)
        table.push_back({std::to_string(t), std::to_string(rs.rows[r]),
                         dim_names_cat[c], "latent",
                         format_double(rs.latent[t](r, c))});
    }
  }
  write_csv_file(path, table);
}

}  // namespace mfamd
