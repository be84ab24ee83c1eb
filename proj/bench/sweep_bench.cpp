// Benchmarks one Gibbs sweep, serial chain versus block-parallel kernels,
// on a synthetic mixed dataset. Not part of the test suite; run it by hand:
//
//   mfamd_bench [--n-rows 2000] [--continuous 30] [--binary 60] [--nominal 30]
//               [--clusters 2] [--factors 5] [--sweeps 20] [--seed 7]

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mfamd/model.hpp"
#include "mfamd/rng.hpp"
#include "mfamd/types.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

using namespace mfamd;

MixedDataset synthetic(int n, int a, int b, int c, RngStream& rng) {
  std::vector<VariableSpec> schema;
  for (int j = 0; j < a; ++j)
    schema.push_back({"cont" + std::to_string(j), VarKind::Continuous, {}, false});
  for (int j = 0; j < b; ++j)
    schema.push_back(
        {"bin" + std::to_string(j), VarKind::Binary, {"no", "yes"}, false});
  for (int j = 0; j < c; ++j)
    schema.push_back({"nom" + std::to_string(j),
                      VarKind::Nominal,
                      {"x", "y", "z"},
                      false});

  Eigen::MatrixXd cont(n, a);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < a; ++j) cont(i, j) = rng.normal();
  Eigen::MatrixXi codes(n, b + c);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < b; ++j) codes(i, j) = static_cast<int>(rng.uniform_index(2));
    for (int j = 0; j < c; ++j)
      codes(i, b + j) = static_cast<int>(rng.uniform_index(3));
  }
  return make_dataset(std::move(schema), std::move(cont), std::move(codes));
}

double run_sweeps(MCMCState& st, const MixedDataset& ds, const Priors& priors,
                  RngStream& rng, const SweepOptions& opt, int sweeps) {
  const auto t0 = std::chrono::steady_clock::now();
  for (int t = 0; t < sweeps; ++t) gibbs_sweep(st, ds, priors, rng, opt);
  const std::chrono::duration<double, std::milli> dt =
      std::chrono::steady_clock::now() - t0;
  return dt.count() / sweeps;
}

}  // namespace

int main(int argc, char** argv) {
  int n = 2000, a = 30, b = 60, c = 30, G = 2, Q = 5, sweeps = 20;
  std::uint64_t seed = 7;
  CLI::App app{"sweep benchmark: serial chain vs block-parallel kernels"};
  app.add_option("--n-rows", n);
  app.add_option("--continuous", a);
  app.add_option("--binary", b);
  app.add_option("--nominal", c);
  app.add_option("--clusters", G);
  app.add_option("--factors", Q);
  app.add_option("--sweeps", sweeps);
  app.add_option("--seed", seed);
  CLI11_PARSE(app, argc, argv);

  RngStream data_rng(seed);
  const MixedDataset ds = synthetic(n, a, b, c, data_rng);
  const Priors priors = Priors::defaults(G, Q);
  const int warmup = std::max(2, sweeps / 4);

#ifdef _OPENMP
  const int threads = omp_get_max_threads();
#else
  const int threads = 1;
#endif
  std::printf("rows=%d dims=%d clusters=%d factors=%d sweeps=%d threads=%d\n",
              n, ds.layout.D, G, Q, sweeps, threads);

  double serial_ms = 0.0, parallel_ms = 0.0;
  {
    RngStream rng = RngStream(seed).substream(1);
    MCMCState st = init_state(ds, G, Q, priors, rng);
    SweepOptions opt;
    opt.parallel = false;
    run_sweeps(st, ds, priors, rng, opt, warmup);
    serial_ms = run_sweeps(st, ds, priors, rng, opt, sweeps);
  }
  {
    RngStream rng = RngStream(seed).substream(1);
    MCMCState st = init_state(ds, G, Q, priors, rng);
    SweepOptions opt;
    opt.parallel = true;
    run_sweeps(st, ds, priors, rng, opt, warmup);
    parallel_ms = run_sweeps(st, ds, priors, rng, opt, sweeps);
  }

  std::printf("%-10s %12s\n", "mode", "ms/sweep");
  std::printf("%-10s %12.3f\n", "serial", serial_ms);
  std::printf("%-10s %12.3f\n", "parallel", parallel_ms);
  std::printf("speedup    %12.3f\n", serial_ms / parallel_ms);
  return 0;
}
