#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace mfamd {

enum class VarKind { Continuous, Binary, Nominal };

// One observed variable. Categorical cells are stored as integer codes that
// index into `levels`; continuous variables have an empty level list.
// `snp_coded` marks a 3-level nominal whose levels follow the genotype
// convention (0 = dominant homozygous, 1 = recessive homozygous,
// 2 = heterozygous); only those are candidates for rare-level merging.
struct VariableSpec {
  std::string name;
  VarKind kind = VarKind::Continuous;
  std::vector<std::string> levels;
  bool snp_coded = false;

  int n_levels() const { return static_cast<int>(levels.size()); }
  // Number of latent dimensions backing this variable: 1 for continuous and
  // binary, K-1 for a K-level nominal.
  int latent_width() const {
    return kind == VarKind::Nominal ? n_levels() - 1 : 1;
  }
};

// Maps each variable to its slice of the latent vector. Variables occupy
// consecutive slices in schema order; D is the total latent dimension.
struct LatentLayout {
  std::vector<int> offset;              // per variable, start dim
  std::vector<int> width;               // per variable, number of dims
  std::vector<int> dim_var;             // per dim, owning variable index
  std::vector<char> dim_is_continuous;  // per dim
  int D = 0;

  int n_vars() const { return static_cast<int>(offset.size()); }
};

LatentLayout make_layout(const std::vector<VariableSpec>& schema);

// Mixed-type data in model order. Continuous cells live in `continuous`
// (one column per continuous variable, schema order); binary and nominal
// cells live in `codes` (one column per categorical variable, schema order).
// cont_col / cat_col map a schema index to its column, -1 when not that kind.
struct MixedDataset {
  std::vector<VariableSpec> schema;
  Eigen::MatrixXd continuous;  // N x A
  Eigen::MatrixXi codes;       // N x (B + C)
  std::vector<int> cont_col;
  std::vector<int> cat_col;
  LatentLayout layout;

  // Both matrices always carry N rows, even at zero columns.
  int n_rows() const { return static_cast<int>(continuous.rows()); }
  int n_vars() const { return static_cast<int>(schema.size()); }
  int n_continuous() const { return static_cast<int>(continuous.cols()); }
  int n_categorical() const { return static_cast<int>(codes.cols()); }
};

// Rebuilds the index maps and layout from the schema. Call after any schema
// edit; column counts must already match the schema.
void refresh_index_maps(MixedDataset& ds);

// Assembles a dataset from parts and validates shapes.
MixedDataset make_dataset(std::vector<VariableSpec> schema,
                          Eigen::MatrixXd continuous, Eigen::MatrixXi codes);

}  // namespace mfamd
