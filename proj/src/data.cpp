#include "mfamd/data.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <unordered_map>

#include "json.hpp"
#include "mfamd/csv.hpp"
#include "mfamd/errors.hpp"

namespace mfamd {

LatentLayout make_layout(const std::vector<VariableSpec>& schema) {
  LatentLayout lay;
  lay.offset.reserve(schema.size());
  lay.width.reserve(schema.size());
  int d = 0;
  for (size_t j = 0; j < schema.size(); ++j) {
    const int w = schema[j].latent_width();
    lay.offset.push_back(d);
    lay.width.push_back(w);
    for (int k = 0; k < w; ++k) {
      lay.dim_var.push_back(static_cast<int>(j));
      lay.dim_is_continuous.push_back(schema[j].kind == VarKind::Continuous ? 1 : 0);
    }
    d += w;
  }
  lay.D = d;
  return lay;
}

namespace {

void validate_schema(const std::vector<VariableSpec>& schema) {
  std::set<std::string> names;
  for (const auto& v : schema) {
    if (v.name.empty()) throw SchemaMismatchError("schema: empty variable name");
    if (!names.insert(v.name).second)
      throw SchemaMismatchError("schema: duplicate variable '" + v.name + "'");
    switch (v.kind) {
      case VarKind::Continuous:
        if (!v.levels.empty())
          throw SchemaMismatchError("schema: continuous variable '" + v.name +
                                    "' must not list levels");
        break;
      case VarKind::Binary:
        if (v.n_levels() != 2)
          throw SchemaMismatchError("schema: binary variable '" + v.name +
                                    "' must have exactly 2 levels");
        break;
      case VarKind::Nominal:
        if (v.n_levels() < 3)
          throw SchemaMismatchError("schema: nominal variable '" + v.name +
                                    "' must have at least 3 levels");
        break;
    }
    std::set<std::string> lv(v.levels.begin(), v.levels.end());
    if (lv.size() != v.levels.size())
      throw SchemaMismatchError("schema: duplicate level in '" + v.name + "'");
    if (v.snp_coded && (v.kind != VarKind::Nominal || v.n_levels() != 3))
      throw SchemaMismatchError("schema: snp_coded requires a 3-level nominal ('" +
                                v.name + "')");
  }
}

}  // namespace

void refresh_index_maps(MixedDataset& ds) {
  validate_schema(ds.schema);
  ds.cont_col.assign(ds.schema.size(), -1);
  ds.cat_col.assign(ds.schema.size(), -1);
  int a = 0, c = 0;
  for (size_t j = 0; j < ds.schema.size(); ++j) {
    if (ds.schema[j].kind == VarKind::Continuous)
      ds.cont_col[j] = a++;
    else
      ds.cat_col[j] = c++;
  }
  if (ds.continuous.cols() != a || ds.codes.cols() != c)
    throw DimensionError("dataset: column counts do not match schema");
  ds.layout = make_layout(ds.schema);
}

MixedDataset make_dataset(std::vector<VariableSpec> schema, Eigen::MatrixXd continuous,
                          Eigen::MatrixXi codes) {
  MixedDataset ds;
  ds.schema = std::move(schema);
  ds.continuous = std::move(continuous);
  ds.codes = std::move(codes);
  const auto n = std::max(ds.continuous.rows(), ds.codes.rows());
  if (ds.continuous.cols() == 0) ds.continuous.resize(n, 0);
  if (ds.codes.cols() == 0) ds.codes.resize(n, 0);
  if (ds.continuous.rows() != n || ds.codes.rows() != n)
    throw DimensionError("dataset: row counts differ between blocks");
  refresh_index_maps(ds);
  for (size_t j = 0; j < ds.schema.size(); ++j) {
    if (ds.cat_col[j] < 0) continue;
    const int K = ds.schema[j].n_levels();
    for (Eigen::Index i = 0; i < n; ++i) {
      const int code = ds.codes(i, ds.cat_col[j]);
      if (code < 0 || code >= K)
        throw SchemaMismatchError("dataset: code out of range for '" +
                                  ds.schema[j].name + "'");
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Schema sidecar
// ---------------------------------------------------------------------------

std::vector<VariableSpec> load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw SchemaMismatchError("schema: invalid JSON in " + path + ": " + e.what());
  }
  if (!j.contains("variables") || !j["variables"].is_array())
    throw SchemaMismatchError("schema: missing 'variables' array in " + path);
  std::vector<VariableSpec> schema;
  for (const auto& item : j["variables"]) {
    VariableSpec v;
    if (!item.contains("name") || !item.contains("kind"))
      throw SchemaMismatchError("schema: variable entries need 'name' and 'kind'");
    v.name = item["name"].get<std::string>();
    const std::string kind = item["kind"].get<std::string>();
    if (kind == "continuous")
      v.kind = VarKind::Continuous;
    else if (kind == "binary")
      v.kind = VarKind::Binary;
    else if (kind == "nominal")
      v.kind = VarKind::Nominal;
    else
      throw SchemaMismatchError("schema: unknown kind '" + kind + "' for '" + v.name + "'");
    if (item.contains("levels"))
      v.levels = item["levels"].get<std::vector<std::string>>();
    if (item.contains("snp_coded")) v.snp_coded = item["snp_coded"].get<bool>();
    schema.push_back(std::move(v));
  }
  validate_schema(schema);
  return schema;
}

void save_schema(const std::string& path, const std::vector<VariableSpec>& schema) {
  nlohmann::json vars = nlohmann::json::array();
  for (const auto& v : schema) {
    nlohmann::json item;
    item["name"] = v.name;
    switch (v.kind) {
      case VarKind::Continuous: item["kind"] = "continuous"; break;
      case VarKind::Binary: item["kind"] = "binary"; break;
      case VarKind::Nominal: item["kind"] = "nominal"; break;
    }
    if (!v.levels.empty()) item["levels"] = v.levels;
    if (v.snp_coded) item["snp_coded"] = true;
    vars.push_back(std::move(item));
  }
  nlohmann::json j;
  j["variables"] = std::move(vars);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// CSV loading
// ---------------------------------------------------------------------------

namespace {

bool is_missing(const std::string& cell) { return cell.empty() || cell == "NA"; }

bool parse_double(const std::string& cell, double* out) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (end == cell.c_str() || *end != '\0' || errno == ERANGE || !std::isfinite(v))
    return false;
  *out = v;
  return true;
}

}  // namespace

MixedDataset load_csv(const std::string& path, const std::vector<VariableSpec>& schema,
                      const LoadOptions& options, LoadReport* report) {
  validate_schema(schema);
  if (schema.empty()) throw SchemaMismatchError("schema: no variables");
  CsvTable table = read_csv_file(path);
  if (table.empty()) throw EmptyDatasetError("empty file: " + path);

  const auto& header = table.front();
  std::unordered_map<std::string, int> col_of;
  for (size_t c = 0; c < header.size(); ++c) {
    if (!col_of.emplace(header[c], static_cast<int>(c)).second)
      throw SchemaMismatchError("header: duplicate column '" + header[c] + "'");
  }
  if (header.size() != schema.size())
    throw SchemaMismatchError("header: expected " + std::to_string(schema.size()) +
                              " columns, found " + std::to_string(header.size()));
  std::vector<int> col(schema.size());
  for (size_t j = 0; j < schema.size(); ++j) {
    auto it = col_of.find(schema[j].name);
    if (it == col_of.end())
      throw SchemaMismatchError("header: missing column '" + schema[j].name + "'");
    col[j] = it->second;
  }

  LoadReport local;
  LoadReport& rep = report ? *report : local;
  rep.rows_read = static_cast<int>(table.size()) - 1;

  // Optional pre-filter: discard variables with too many missing raw cells
  // before any row is dropped, so a single bad column cannot wipe the cohort.
  std::vector<VariableSpec> kept = schema;
  std::vector<int> kept_col = col;
  if (options.max_missing_per_variable >= 0) {
    std::vector<int> missing(schema.size(), 0);
    for (size_t r = 1; r < table.size(); ++r) {
      const auto& row = table[r];
      for (size_t j = 0; j < schema.size(); ++j)
        if (static_cast<size_t>(col[j]) >= row.size() || is_missing(row[col[j]]))
          ++missing[j];
    }
    std::vector<VariableSpec> filtered;
    std::vector<int> filtered_col;
    for (size_t j = 0; j < schema.size(); ++j) {
      if (missing[j] > options.max_missing_per_variable) {
        rep.dropped_variables.push_back(schema[j].name);
        rep.warnings.push_back("dropped '" + schema[j].name + "': " +
                               std::to_string(missing[j]) + " missing cells");
      } else {
        filtered.push_back(schema[j]);
        filtered_col.push_back(col[j]);
      }
    }
    kept = std::move(filtered);
    kept_col = std::move(filtered_col);
    if (kept.empty()) throw EmptyDatasetError("all variables dropped by missing-cell filter");
  }

  // Complete-case pass.
  struct ParsedRow {
    std::vector<double> cont;
    std::vector<int> codes;
  };
  std::vector<ParsedRow> rows;
  for (size_t r = 1; r < table.size(); ++r) {
    const auto& row = table[r];
    ParsedRow parsed;
    bool drop = false;
    for (size_t j = 0; j < kept.size() && !drop; ++j) {
      const std::string& cell = static_cast<size_t>(kept_col[j]) < row.size()
                                    ? row[kept_col[j]]
                                    : std::string();
      if (is_missing(cell)) {
        drop = true;
        break;
      }
      if (kept[j].kind == VarKind::Continuous) {
        double v;
        if (!parse_double(cell, &v))
          drop = true;  // unparseable numeric counts as missing
        else
          parsed.cont.push_back(v);
      } else {
        auto it = std::find(kept[j].levels.begin(), kept[j].levels.end(), cell);
        if (it == kept[j].levels.end()) throw UnknownLevelError(kept[j].name, cell);
        parsed.codes.push_back(static_cast<int>(it - kept[j].levels.begin()));
      }
    }
    if (drop)
      ++rep.rows_dropped;
    else
      rows.push_back(std::move(parsed));
  }
  if (rows.empty()) throw EmptyDatasetError("no complete rows in " + path);

  // A level that is never observed cannot be modelled; by default the
  // variable is dropped with a warning, optionally it is a hard error.
  std::vector<char> var_ok(kept.size(), 1);
  {
    int cat = 0;
    for (size_t j = 0; j < kept.size(); ++j) {
      if (kept[j].kind == VarKind::Continuous) continue;
      const int my_cat = cat++;
      std::vector<int> counts(kept[j].levels.size(), 0);
      for (const auto& pr : rows) ++counts[pr.codes[my_cat]];
      for (size_t k = 0; k < counts.size(); ++k) {
        if (counts[k] > 0) continue;
        if (options.on_unobserved_level == UnobservedLevelPolicy::Error)
          throw SchemaMismatchError("level '" + kept[j].levels[k] + "' of '" +
                                    kept[j].name + "' is never observed");
        var_ok[j] = 0;
        rep.dropped_variables.push_back(kept[j].name);
        rep.warnings.push_back("dropped '" + kept[j].name + "': level '" +
                               kept[j].levels[k] + "' never observed");
        break;
      }
    }
  }

  std::vector<VariableSpec> final_schema;
  for (size_t j = 0; j < kept.size(); ++j)
    if (var_ok[j]) final_schema.push_back(kept[j]);
  if (final_schema.empty()) throw EmptyDatasetError("all variables dropped");

  int A = 0, Cc = 0;
  for (const auto& v : final_schema) (v.kind == VarKind::Continuous ? A : Cc)++;
  const int N = static_cast<int>(rows.size());
  Eigen::MatrixXd cont(N, A);
  Eigen::MatrixXi codes(N, Cc);
  for (int i = 0; i < N; ++i) {
    int a_src = 0, c_src = 0, a_dst = 0, c_dst = 0;
    for (size_t j = 0; j < kept.size(); ++j) {
      if (kept[j].kind == VarKind::Continuous) {
        if (var_ok[j]) cont(i, a_dst++) = rows[i].cont[a_src];
        ++a_src;
      } else {
        if (var_ok[j]) codes(i, c_dst++) = rows[i].codes[c_src];
        ++c_src;
      }
    }
  }
  return make_dataset(std::move(final_schema), std::move(cont), std::move(codes));
}

void write_dataset_csv(const std::string& path, const MixedDataset& ds) {
  CsvTable table;
  std::vector<std::string> header;
  for (const auto& v : ds.schema) header.push_back(v.name);
  table.push_back(std::move(header));
  for (int i = 0; i < ds.n_rows(); ++i) {
    std::vector<std::string> row;
    for (size_t j = 0; j < ds.schema.size(); ++j) {
      if (ds.cont_col[j] >= 0)
        row.push_back(format_double(ds.continuous(i, ds.cont_col[j])));
      else
        row.push_back(ds.schema[j].levels[ds.codes(i, ds.cat_col[j])]);
    }
    table.push_back(std::move(row));
  }
  write_csv_file(path, table);
}

// ---------------------------------------------------------------------------
// Transforms
// ---------------------------------------------------------------------------

StandardizeParams standardize(MixedDataset& ds) {
  StandardizeParams params;
  const int N = ds.n_rows();
  for (size_t j = 0; j < ds.schema.size(); ++j) {
    if (ds.cont_col[j] < 0) continue;
    auto colv = ds.continuous.col(ds.cont_col[j]);
    if (N < 2)
      throw ZeroVarianceError("standardize: variable '" + ds.schema[j].name +
                              "' has fewer than 2 observations");
    const double mean = colv.mean();
    const double ss = (colv.array() - mean).square().sum();
    const double sd = std::sqrt(ss / (N - 1));
    if (!(sd > 0.0))
      throw ZeroVarianceError("standardize: variable '" + ds.schema[j].name +
                              "' is constant");
    colv = (colv.array() - mean) / sd;
    params.names.push_back(ds.schema[j].name);
    params.means.push_back(mean);
    params.sds.push_back(sd);
  }
  return params;
}

std::vector<MergeLogEntry> merge_rare_levels(MixedDataset& ds, double threshold) {
  if (!(threshold > 0.0) || threshold > 1.0)
    throw NonPositiveParameterError("merge_rare_levels: threshold must be in (0, 1]");
  std::vector<MergeLogEntry> log;
  const int N = ds.n_rows();
  for (size_t j = 0; j < ds.schema.size(); ++j) {
    VariableSpec& v = ds.schema[j];
    if (!v.snp_coded || v.kind != VarKind::Nominal || v.n_levels() != 3) continue;
    const int c = ds.cat_col[j];
    std::vector<int> counts(3, 0);
    for (int i = 0; i < N; ++i) ++counts[ds.codes(i, c)];
    // Level 1 is the recessive homozygous genotype by convention.
    if (counts[1] >= threshold * N) continue;
    MergeLogEntry entry;
    entry.variable = v.name;
    entry.level_counts = counts;
    entry.action = "merged_to_binary";
    log.push_back(std::move(entry));
    v.kind = VarKind::Binary;
    v.levels = {v.levels[0], v.levels[2] + "/" + v.levels[1]};
    v.snp_coded = false;
    for (int i = 0; i < N; ++i)
      if (ds.codes(i, c) == 2) ds.codes(i, c) = 1;
  }
  if (!log.empty()) refresh_index_maps(ds);
  return log;
}

void write_merge_log_csv(const std::string& path, const std::vector<MergeLogEntry>& log) {
  CsvTable table;
  table.push_back({"variable", "count_level0", "count_level1", "count_level2", "action"});
  for (const auto& e : log) {
    std::vector<std::string> row{e.variable};
    for (int c : e.level_counts) row.push_back(std::to_string(c));
    row.push_back(e.action);
    table.push_back(std::move(row));
  }
  write_csv_file(path, table);
}

}  // namespace mfamd
