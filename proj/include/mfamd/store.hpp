#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mfamd/fit.hpp"
#include "mfamd/identify.hpp"
#include "mfamd/model.hpp"
#include "mfamd/select.hpp"

namespace mfamd {

// Run settings recorded alongside the draws so a store is self-describing.
struct StoreMeta {
  std::uint64_t seed = 0;
  PhaseSchedule schedule;
  bool parallel = false;
  bool varsel_enabled = true;
  bool kmeans_warm_start = false;
  bool fuzzy_variance_ratio = false;
  bool literal_psi_residuals = false;
  bool alloc_conditional_on_theta = false;
  std::string config_hash;  // empty when no config file was involved
};

// A sample store is a directory holding manifest.json plus flat
// little-endian arrays:
//   pi.f64      n_draws x G          doubles
//   lambda.f64  n_draws x G x D_ret x (Q+1) doubles, draw-major, row-major
//   psi.f64     n_draws x n_cont_ret doubles
//   alloc.i32   n_draws x N          int32
//   loglik.f64  n_draws              doubles
// The manifest carries no timestamps, so rewriting the same result is
// byte-identical.
void write_sample_store(const std::string& dir, const FitResult& fit,
                        const MixedDataset& data, const StoreMeta& meta);

struct SampleStore {
  int format_version = 0;
  int G = 0;
  int Q = 0;
  Eigen::Index n_rows = 0;
  std::vector<std::string> retained_variables;
  std::vector<int> retained_variable_indices;
  std::vector<int> retained_dims;
  std::vector<int> retained_cont_dims;
  StoreMeta meta;
  ModelScore score;
  long total_sweeps = 0;
  std::vector<Draw> draws;
};

// Loads a store written by write_sample_store, validating array sizes
// against the manifest. Throws IoError on missing or inconsistent files.
SampleStore read_sample_store(const std::string& dir);

}  // namespace mfamd
