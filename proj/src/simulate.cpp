#include "mfamd/simulate.hpp"

#include <cmath>

#include "mfamd/data.hpp"
#include "mfamd/distributions.hpp"
#include "mfamd/errors.hpp"

namespace mfamd {

void TrueModel::validate() const {
  if (G < 1 || Q < 1) throw DimensionError("true model: need G >= 1, Q >= 1");
  if (pi.size() != G) throw DimensionError("true model: pi must have length G");
  if (std::abs(pi.sum() - 1.0) > 1e-10 || (pi.array() <= 0.0).any())
    throw NonPositiveParameterError("true model: pi must be a positive probability vector");
  const LatentLayout lay = make_layout(schema);
  if (static_cast<int>(lambda_tilde.size()) != G)
    throw DimensionError("true model: one loading matrix per cluster");
  for (const auto& L : lambda_tilde)
    if (L.rows() != lay.D || L.cols() != Q + 1)
      throw DimensionError("true model: loading matrices must be D x (Q+1)");
  if (psi.size() != lay.D) throw DimensionError("true model: psi must have length D");
  for (int d = 0; d < lay.D; ++d) {
    if (!(psi[d] > 0.0)) throw NonPositiveParameterError("true model: psi must be > 0");
    if (!lay.dim_is_continuous[d] && psi[d] != 1.0)
      throw NonPositiveParameterError("true model: categorical psi must be exactly 1");
  }
  for (int j : noise_vars)
    if (j < 0 || j >= static_cast<int>(schema.size()))
      throw DimensionError("true model: noise variable out of range");
}

TrueModel TrueModel::default_recovery_scenario() {
  TrueModel m;
  m.G = 2;
  m.Q = 2;
  m.pi = Eigen::VectorXd::Constant(2, 0.5);

  auto cont = [](const std::string& name) {
    return VariableSpec{name, VarKind::Continuous, {}, false};
  };
  auto bin = [](const std::string& name) {
    return VariableSpec{name, VarKind::Binary, {"no", "yes"}, false};
  };
  auto nom = [](const std::string& name) {
    return VariableSpec{name, VarKind::Nominal, {"a", "b", "c"}, false};
  };
  for (int k = 0; k < 5; ++k) m.schema.push_back(cont("cont_d" + std::to_string(k)));
  for (int k = 0; k < 4; ++k) m.schema.push_back(cont("cont_n" + std::to_string(k)));
  for (int k = 0; k < 5; ++k) m.schema.push_back(bin("bin_d" + std::to_string(k)));
  for (int k = 0; k < 3; ++k) m.schema.push_back(bin("bin_n" + std::to_string(k)));
  for (int k = 0; k < 3; ++k) m.schema.push_back(nom("nom_d" + std::to_string(k)));
  for (int k = 0; k < 3; ++k) m.schema.push_back(nom("nom_n" + std::to_string(k)));
  for (int j = 0; j < 23; ++j) {
    const std::string& n = m.schema[j].name;
    if (n.find("_n") != std::string::npos) m.noise_vars.push_back(j);
  }

  const LatentLayout lay = make_layout(m.schema);
  m.lambda_tilde.assign(2, Eigen::MatrixXd::Zero(lay.D, 3));
  m.psi = Eigen::VectorXd::Ones(lay.D);

  // Fixed modest loadings on discriminating dims tie them to the two
  // factors; noise dims keep zero rows and cluster-invariant means.
  const double load[2] = {0.5, -0.3};
  for (int j = 0; j < static_cast<int>(m.schema.size()); ++j) {
    const bool noise = m.schema[j].name.find("_n") != std::string::npos;
    const int off = lay.offset[j];
    const int w = lay.width[j];
    for (int k = 0; k < w; ++k) {
      const int d = off + k;
      if (!noise) {
        m.lambda_tilde[0](d, 1) = load[(d + k) % 2];
        m.lambda_tilde[0](d, 2) = load[(d + k + 1) % 2];
        m.lambda_tilde[1](d, 1) = load[(d + k + 1) % 2];
        m.lambda_tilde[1](d, 2) = load[(d + k) % 2];
      }
      if (m.schema[j].kind == VarKind::Continuous) {
        // Separation 3 on discriminating continuous dims.
        m.lambda_tilde[0](d, 0) = noise ? 0.0 : -1.5;
        m.lambda_tilde[1](d, 0) = noise ? 0.0 : 1.5;
        m.psi[d] = noise ? 1.0 : 0.5;
      } else if (m.schema[j].kind == VarKind::Binary) {
        m.lambda_tilde[0](d, 0) = noise ? 0.3 : -1.0;
        m.lambda_tilde[1](d, 0) = noise ? 0.3 : 1.0;
      } else {
        // Opposite dominant levels per cluster; noise nominals share means.
        const double base = k == 0 ? 0.8 : -0.8;
        m.lambda_tilde[0](d, 0) = noise ? 0.2 : base;
        m.lambda_tilde[1](d, 0) = noise ? 0.2 : -base;
      }
    }
  }
  m.validate();
  return m;
}

SimulatedData generate(const TrueModel& model, int n_rows, RngStream& rng) {
  model.validate();
  if (n_rows < 1) throw DimensionError("generate: need n_rows >= 1");
  const LatentLayout lay = make_layout(model.schema);
  const int D = lay.D;
  const int J = static_cast<int>(model.schema.size());

  int A = 0, Cc = 0;
  for (const auto& v : model.schema) (v.kind == VarKind::Continuous ? A : Cc)++;

  SimulatedData sim;
  sim.alloc.resize(n_rows);
  sim.z.resize(n_rows, D);
  sim.theta.resize(n_rows, model.Q);
  Eigen::MatrixXd cont(n_rows, A);
  Eigen::MatrixXi codes(n_rows, Cc);

  for (int i = 0; i < n_rows; ++i) {
    const int g = sample_categorical(model.pi, rng);
    sim.alloc[i] = g;
    Eigen::VectorXd tt(model.Q + 1);
    tt[0] = 1.0;
    for (int q = 0; q < model.Q; ++q) {
      tt[q + 1] = rng.normal();
      sim.theta(i, q) = tt[q + 1];
    }
    for (int d = 0; d < D; ++d)
      sim.z(i, d) = model.lambda_tilde[g].row(d).dot(tt) +
                    std::sqrt(model.psi[d]) * rng.normal();

    int a = 0, c = 0;
    for (int j = 0; j < J; ++j) {
      const int off = lay.offset[j];
      switch (model.schema[j].kind) {
        case VarKind::Continuous:
          cont(i, a++) = sim.z(i, off);
          break;
        case VarKind::Binary:
          codes(i, c++) = sim.z(i, off) > 0.0 ? 1 : 0;
          break;
        case VarKind::Nominal: {
          const int w = lay.width[j];
          int argmax = 0;
          double zmax = sim.z(i, off);
          for (int k = 1; k < w; ++k)
            if (sim.z(i, off + k) > zmax) {
              zmax = sim.z(i, off + k);
              argmax = k;
            }
          codes(i, c++) = zmax > 0.0 ? argmax + 1 : 0;
          break;
        }
      }
    }
  }
  sim.ds = make_dataset(model.schema, std::move(cont), std::move(codes));
  return sim;
}

}  // namespace mfamd
