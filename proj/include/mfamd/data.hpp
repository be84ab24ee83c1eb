#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mfamd/types.hpp"

namespace mfamd {

// Schema sidecar. JSON of the form
//   {"variables": [{"name": "waist", "kind": "continuous"},
//                  {"name": "rs123", "kind": "nominal",
//                   "levels": ["AA", "GG", "AG"], "snp_coded": true}, ...]}
// Kinds are "continuous", "binary" (exactly 2 levels) and "nominal"
// (>= 3 levels). The schema is always explicit; nothing is inferred from the
// data file.
std::vector<VariableSpec> load_schema(const std::string& path);
void save_schema(const std::string& path, const std::vector<VariableSpec>& schema);

enum class UnobservedLevelPolicy { Drop, Error };

struct LoadOptions {
  // Drop variables with more than this many missing raw cells before rows are
  // filtered; negative disables the pre-filter.
  int max_missing_per_variable = -1;
  // What to do with a categorical variable that has a level observed zero
  // times after row filtering.
  UnobservedLevelPolicy on_unobserved_level = UnobservedLevelPolicy::Drop;
};

struct LoadReport {
  int rows_read = 0;
  int rows_dropped = 0;
  std::vector<std::string> dropped_variables;
  std::vector<std::string> warnings;
};

// Reads a CSV with a header row against an explicit schema. Cells equal to
// "" or "NA" are missing; any row with a missing or unparseable cell is
// dropped (complete-case analysis). A non-missing categorical label outside
// the level list raises UnknownLevel: that is a schema defect, not
// missingness.
MixedDataset load_csv(const std::string& path, const std::vector<VariableSpec>& schema,
                      const LoadOptions& options = {}, LoadReport* report = nullptr);

// Writes the dataset back out, decoding categorical codes through their
// level labels.
void write_dataset_csv(const std::string& path, const MixedDataset& ds);

struct StandardizeParams {
  std::vector<std::string> names;
  std::vector<double> means;
  std::vector<double> sds;  // sample sd, n-1 denominator
};

// Centers and scales each continuous column to mean 0, sample sd 1, in
// place. Raises ZeroVariance naming the first constant column.
StandardizeParams standardize(MixedDataset& ds);

struct MergeLogEntry {
  std::string variable;
  std::vector<int> level_counts;  // counts in level order before the merge
  std::string action;             // e.g. "merged_to_binary"
};

// Collapses rare genotype levels: a 3-level snp_coded nominal whose recessive
// homozygous level (index 1) has count < threshold * N becomes binary with
// the heterozygous and recessive levels merged. Returns one log entry per
// variable changed. N and the continuous columns are never touched.
std::vector<MergeLogEntry> merge_rare_levels(MixedDataset& ds, double threshold = 0.10);

void write_merge_log_csv(const std::string& path, const std::vector<MergeLogEntry>& log);

}  // namespace mfamd
