#include "mfamd/varsel.hpp"

#include <cmath>
#include <limits>

#include "mfamd/csv.hpp"
#include "mfamd/errors.hpp"

namespace mfamd {

void VarSelConfig::validate() const {
  if (!(epsilon_continuous > 0.0) || epsilon_continuous > 1.0 ||
      !(epsilon_categorical > 0.0) || epsilon_categorical > 1.0)
    throw ConfigError("varsel: thresholds must be in (0, 1]");
}

double variance_ratio(const MCMCState& st, const MixedDataset& ds, int var,
                      const Eigen::MatrixXd& weights) {
  const LatentLayout& lay = ds.layout;
  if (var < 0 || var >= ds.n_vars()) throw DimensionError("variance_ratio: bad variable");
  const int N = st.n_rows();
  const int off = lay.offset[var];
  const int w = lay.width[var];
  const bool fuzzy = weights.size() > 0;
  if (fuzzy && (weights.rows() != N || weights.cols() != st.G))
    throw DimensionError("variance_ratio: weights must be N x G");

  double within = 0.0, total = 0.0;
  for (int k = 0; k < w; ++k) {
    const auto col = st.Z.col(off + k);
    const double overall_mean = col.mean();
    total += (col.array() - overall_mean).square().sum();

    if (!fuzzy) {
      for (int g = 0; g < st.G; ++g) {
        double sum = 0.0;
        int n = 0;
        for (int i = 0; i < N; ++i)
          if (st.alloc[i] == g) {
            sum += col[i];
            ++n;
          }
        if (n == 0) continue;
        const double m = sum / n;
        for (int i = 0; i < N; ++i)
          if (st.alloc[i] == g) within += (col[i] - m) * (col[i] - m);
      }
    } else {
      for (int g = 0; g < st.G; ++g) {
        double wsum = 0.0, wz = 0.0;
        for (int i = 0; i < N; ++i) {
          wsum += weights(i, g);
          wz += weights(i, g) * col[i];
        }
        if (wsum <= 0.0) continue;
        const double m = wz / wsum;
        for (int i = 0; i < N; ++i)
          within += weights(i, g) * (col[i] - m) * (col[i] - m);
      }
    }
  }
  if (total == 0.0)
    throw ZeroOverallVarianceError("variance_ratio: variable '" +
                                   ds.schema[var].name + "' has zero overall variance");
  return within / total;
}

VarSelCheck selection_step(MCMCState& st, const MixedDataset& ds, const VarSelConfig& cfg) {
  cfg.validate();
  VarSelCheck check;
  check.ratios.assign(ds.n_vars(), std::numeric_limits<double>::quiet_NaN());

  Eigen::MatrixXd weights;
  if (cfg.fuzzy)
    weights = allocation_logprobs(st, ds).array().exp();

  for (int j = 0; j < ds.n_vars(); ++j) {
    if (!st.var_active[j]) continue;
    double vr;
    try {
      vr = variance_ratio(st, ds, j, weights);
    } catch (const ZeroOverallVarianceError&) {
      check.flagged_zero_var.push_back(j);
      st.var_active[j] = 0;
      check.removed.push_back(j);
      continue;
    }
    check.ratios[j] = vr;
    const double eps = ds.schema[j].kind == VarKind::Continuous
                           ? cfg.epsilon_continuous
                           : cfg.epsilon_categorical;
    if (vr > eps) {
      st.var_active[j] = 0;
      check.removed.push_back(j);
    }
  }
  return check;
}

void write_varsel_trace_csv(const std::string& path,
                            const std::vector<VarSelTraceRow>& trace) {
  CsvTable table;
  table.push_back({"sweep", "variable", "variance_ratio", "removed"});
  for (const auto& row : trace)
    table.push_back({std::to_string(row.sweep), row.variable,
                     format_double(row.ratio), row.removed ? "1" : "0"});
  write_csv_file(path, table);
}

}  // namespace mfamd
