// Loading, layout, and preprocessing: explicit-schema CSV ingestion with
// complete-case filtering, the latent-dimension layout, standardization,
// and rare-genotype merging, each checked against hand-computed cases.

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <unistd.h>
#include <string>
#include <vector>

#include "mfamd/data.hpp"
#include "mfamd/errors.hpp"
#include "mfamd/types.hpp"
#include "test_util.hpp"

using namespace mfamd;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  static int counter = 0;
  fs::path p = fs::temp_directory_path() /
               ("mfamd_data_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  fs::create_directories(p);
  return p;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

std::vector<VariableSpec> small_schema() {
  std::vector<VariableSpec> schema(4);
  schema[0] = {"height", VarKind::Continuous, {}, false};
  schema[1] = {"smoker", VarKind::Binary, {"no", "yes"}, false};
  schema[2] = {"rs42", VarKind::Nominal, {"AA", "GG", "AG"}, true};
  schema[3] = {"weight", VarKind::Continuous, {}, false};
  return schema;
}

}  // namespace

TEST_CASE("latent layout packs variables in schema order") {
  // Cohort-scale shape: 26 continuous + 371 binary + 341 three-level nominal
  // variables back 26 + 371 + 682 = 1079 latent dimensions.
  std::vector<VariableSpec> schema;
  for (int i = 0; i < 26; ++i)
    schema.push_back({"c" + std::to_string(i), VarKind::Continuous, {}, false});
  for (int i = 0; i < 371; ++i)
    schema.push_back({"b" + std::to_string(i), VarKind::Binary, {"0", "1"}, false});
  for (int i = 0; i < 341; ++i)
    schema.push_back({"n" + std::to_string(i), VarKind::Nominal, {"AA", "GG", "AG"}, true});
  const LatentLayout lay = make_layout(schema);
  CHECK(lay.D == 1079);
  CHECK(lay.n_vars() == 26 + 371 + 341);
  // Dimensions are consecutive and non-overlapping.
  int expect = 0;
  for (int j = 0; j < lay.n_vars(); ++j) {
    CHECK(lay.offset[j] == expect);
    CHECK(lay.width[j] == schema[static_cast<std::size_t>(j)].latent_width());
    for (int d = lay.offset[j]; d < lay.offset[j] + lay.width[j]; ++d) {
      CHECK(lay.dim_var[static_cast<std::size_t>(d)] == j);
      CHECK((lay.dim_is_continuous[static_cast<std::size_t>(d)] != 0) ==
            (schema[static_cast<std::size_t>(j)].kind == VarKind::Continuous));
    }
    expect += lay.width[j];
  }
  CHECK(expect == lay.D);
  // Nominal variables own K-1 dimensions.
  CHECK(schema.back().latent_width() == 2);
}

TEST_CASE("csv loading: complete cases, missing markers, quoting, column matching") {
  const fs::path dir = temp_dir();
  const auto schema = small_schema();

  SUBCASE("happy path with reordered columns and quoted cells") {
    write_text(dir / "d.csv",
               "smoker,height,weight,rs42\n"
               "yes,1.70,65.5,AA\n"
               "no,\"1.82\",70.1,\"AG\"\n"
               "no,1.60,55.0,GG\n");
    LoadReport rep;
    const MixedDataset ds = load_csv((dir / "d.csv").string(), schema, {}, &rep);
    CHECK(ds.n_rows() == 3);
    CHECK(ds.n_vars() == 4);
    CHECK(ds.n_continuous() == 2);
    CHECK(ds.n_categorical() == 2);
    CHECK(rep.rows_read == 3);
    CHECK(rep.rows_dropped == 0);
    // Values land in schema order, not file order.
    CHECK(ds.schema[0].name == "height");
    CHECK(ds.continuous(0, 0) == doctest::Approx(1.70));
    CHECK(ds.continuous(1, 0) == doctest::Approx(1.82));
    CHECK(ds.continuous(0, 1) == doctest::Approx(65.5));
    CHECK(ds.codes(0, ds.cat_col[1]) == 1);   // yes
    CHECK(ds.codes(1, ds.cat_col[1]) == 0);   // no
    CHECK(ds.codes(0, ds.cat_col[2]) == 0);   // AA
    CHECK(ds.codes(1, ds.cat_col[2]) == 2);   // AG
    CHECK(ds.codes(2, ds.cat_col[2]) == 1);   // GG
  }

  SUBCASE("rows with missing or unparseable cells are dropped") {
    write_text(dir / "m.csv",
               "height,smoker,rs42,weight\n"
               "1.70,yes,AA,65.5\n"
               ",no,AG,70.1\n"
               "1.60,NA,GG,55.0\n"
               "1.75,yes,AG,not_a_number\n"
               "1.66,no,AA,58.2\n");
    LoadReport rep;
    const MixedDataset ds = load_csv((dir / "m.csv").string(), schema, {}, &rep);
    CHECK(ds.n_rows() == 2);
    CHECK(rep.rows_read == 5);
    CHECK(rep.rows_dropped == 3);
  }

  SUBCASE("an out-of-schema label is an error, not missingness") {
    write_text(dir / "u.csv",
               "height,smoker,rs42,weight\n"
               "1.70,maybe,AA,65.5\n");
    CHECK_THROWS_AS(load_csv((dir / "u.csv").string(), schema), UnknownLevelError);
  }

  SUBCASE("header must carry exactly the schema's columns") {
    write_text(dir / "h.csv", "height,smoker,rs42\n1.7,yes,AA\n");
    CHECK_THROWS_AS(load_csv((dir / "h.csv").string(), schema), SchemaMismatchError);
    write_text(dir / "h2.csv",
               "height,smoker,rs42,weight,extra\n1.7,yes,AA,65.0,x\n");
    CHECK_THROWS_AS(load_csv((dir / "h2.csv").string(), schema), SchemaMismatchError);
    write_text(dir / "h3.csv",
               "height,height,rs42,weight\n1.7,1.7,AA,65.0\n");
    CHECK_THROWS_AS(load_csv((dir / "h3.csv").string(), schema), SchemaMismatchError);
  }

  SUBCASE("no complete rows is an empty dataset") {
    write_text(dir / "e.csv",
               "height,smoker,rs42,weight\n"
               ",yes,AA,65.5\n"
               "1.60,NA,GG,55.0\n");
    CHECK_THROWS_AS(load_csv((dir / "e.csv").string(), schema), EmptyDatasetError);
  }

  SUBCASE("missing-cell pre-filter drops leaky variables before rows") {
    // weight is missing in 2 of 4 raw rows; with the cap at 1 the variable is
    // dropped and those rows survive.
    write_text(dir / "p.csv",
               "height,smoker,rs42,weight\n"
               "1.70,yes,AA,\n"
               "1.82,no,AG,\n"
               "1.60,no,GG,55.0\n"
               "1.75,yes,AA,60.0\n");
    LoadOptions opt;
    opt.max_missing_per_variable = 1;
    LoadReport rep;
    const MixedDataset ds = load_csv((dir / "p.csv").string(), schema, opt, &rep);
    CHECK(ds.n_rows() == 4);
    CHECK(ds.n_vars() == 3);
    REQUIRE(rep.dropped_variables.size() == 1);
    CHECK(rep.dropped_variables[0] == "weight");
  }

  SUBCASE("unobserved level: dropped by default, error on request") {
    write_text(dir / "z.csv",
               "height,smoker,rs42,weight\n"
               "1.70,yes,AA,65.5\n"
               "1.82,no,AA,70.1\n"
               "1.60,no,AG,55.0\n");  // GG never observed
    LoadReport rep;
    const MixedDataset ds = load_csv((dir / "z.csv").string(), schema, {}, &rep);
    CHECK(ds.n_vars() == 3);
    bool has_rs42 = false;
    for (const auto& v : ds.schema) has_rs42 |= (v.name == "rs42");
    CHECK_FALSE(has_rs42);
    CHECK(rep.warnings.size() >= 1);

    LoadOptions opt;
    opt.on_unobserved_level = UnobservedLevelPolicy::Error;
    CHECK_THROWS_AS(load_csv((dir / "z.csv").string(), schema, opt), SchemaMismatchError);
  }

  fs::remove_all(dir);
}

TEST_CASE("dataset round-trips through csv") {
  const fs::path dir = temp_dir();
  const auto schema = small_schema();
  // Every rs42 level appears so no variable is dropped on the first load.
  write_text(dir / "r.csv",
             "height,smoker,rs42,weight\n"
             "1.70,yes,AA,65.5\n"
             "1.82,no,AG,70.1\n"
             "1.76,no,GG,68.0\n");
  const MixedDataset ds = load_csv((dir / "r.csv").string(), schema);
  write_dataset_csv((dir / "out.csv").string(), ds);
  const MixedDataset ds2 = load_csv((dir / "out.csv").string(), schema);
  CHECK(ds2.n_rows() == ds.n_rows());
  CHECK(ds2.continuous.isApprox(ds.continuous, 1e-12));
  CHECK(testutil::exactly_equal(ds2.codes, ds.codes));
  fs::remove_all(dir);
}

TEST_CASE("schema json round-trips") {
  const fs::path dir = temp_dir();
  const auto schema = small_schema();
  save_schema((dir / "schema.json").string(), schema);
  const auto back = load_schema((dir / "schema.json").string());
  REQUIRE(back.size() == schema.size());
  for (std::size_t j = 0; j < schema.size(); ++j) {
    CHECK(back[j].name == schema[j].name);
    CHECK(back[j].kind == schema[j].kind);
    CHECK(back[j].levels == schema[j].levels);
    CHECK(back[j].snp_coded == schema[j].snp_coded);
  }
  fs::remove_all(dir);
}

TEST_CASE("schema validation rejects malformed specs") {
  const fs::path dir = temp_dir();
  write_text(dir / "bad1.json",
             R"({"variables": [{"name": "x", "kind": "binary", "levels": ["a"]}]})");
  CHECK_THROWS_AS(load_schema((dir / "bad1.json").string()), SchemaMismatchError);
  write_text(dir / "bad2.json",
             R"({"variables": [{"name": "x", "kind": "continuous", "levels": ["a", "b"]}]})");
  CHECK_THROWS_AS(load_schema((dir / "bad2.json").string()), SchemaMismatchError);
  write_text(dir / "bad3.json",
             R"({"variables": [{"name": "x", "kind": "nominal", "levels": ["a", "b"]}]})");
  CHECK_THROWS_AS(load_schema((dir / "bad3.json").string()), SchemaMismatchError);
  write_text(dir / "bad4.json",
             R"({"variables": [{"name": "x", "kind": "binary", "levels": ["a", "b"],
                 "snp_coded": true}]})");
  CHECK_THROWS_AS(load_schema((dir / "bad4.json").string()), SchemaMismatchError);
  fs::remove_all(dir);
}

TEST_CASE("standardize centers and scales with the n-1 denominator") {
  std::vector<VariableSpec> schema(1);
  schema[0] = {"x", VarKind::Continuous, {}, false};
  Eigen::MatrixXd cont(4, 1);
  cont << 1.0, 2.0, 3.0, 6.0;
  MixedDataset ds = make_dataset(schema, cont, Eigen::MatrixXi(4, 0));
  const StandardizeParams p = standardize(ds);
  REQUIRE(p.names.size() == 1);
  CHECK(p.means[0] == doctest::Approx(3.0).epsilon(1e-12));
  // var = ((-2)^2 + (-1)^2 + 0 + 3^2) / 3 = 14/3
  CHECK(p.sds[0] == doctest::Approx(std::sqrt(14.0 / 3.0)).epsilon(1e-12));
  CHECK(ds.continuous.col(0).mean() == doctest::Approx(0.0).epsilon(1e-12));
  double ss = ds.continuous.col(0).squaredNorm();
  CHECK(ss / 3.0 == doctest::Approx(1.0).epsilon(1e-12));

  Eigen::MatrixXd flat(3, 1);
  flat << 2.0, 2.0, 2.0;
  MixedDataset ds2 = make_dataset(schema, flat, Eigen::MatrixXi(3, 0));
  CHECK_THROWS_AS(standardize(ds2), ZeroVarianceError);
}

TEST_CASE("rare genotype merging: threshold, counts, relabeling, recoding") {
  // One snp-coded variable with counts (300, 30, 175): the recessive level is
  // rare at N = 505 and the variable becomes binary.
  std::vector<VariableSpec> schema(2);
  schema[0] = {"rs1", VarKind::Nominal, {"AA", "GG", "AG"}, true};
  schema[1] = {"rs2", VarKind::Nominal, {"CC", "TT", "CT"}, true};
  const int n = 505;
  Eigen::MatrixXi codes(n, 2);
  for (int i = 0; i < n; ++i) {
    codes(i, 0) = i < 300 ? 0 : (i < 330 ? 1 : 2);
    codes(i, 1) = i % 3;  // balanced: never merged
  }
  MixedDataset ds = make_dataset(schema, Eigen::MatrixXd(n, 0), codes);
  const auto log = merge_rare_levels(ds, 0.10);
  REQUIRE(log.size() == 1);
  CHECK(log[0].variable == "rs1");
  CHECK(log[0].level_counts == std::vector<int>{300, 30, 175});
  CHECK(log[0].action == "merged_to_binary");
  CHECK(ds.schema[0].kind == VarKind::Binary);
  CHECK(ds.schema[0].snp_coded == false);
  REQUIRE(ds.schema[0].levels.size() == 2);
  CHECK(ds.schema[0].levels[0] == "AA");
  CHECK(ds.schema[0].levels[1] == "AG/GG");
  // Codes: old 2 (het) joins old 1 under code 1.
  int c0 = 0, c1 = 0;
  for (int i = 0; i < n; ++i) {
    CHECK(ds.codes(i, 0) <= 1);
    (ds.codes(i, 0) == 0 ? c0 : c1)++;
  }
  CHECK(c0 == 300);
  CHECK(c1 == 205);
  // rs2 untouched.
  CHECK(ds.schema[1].kind == VarKind::Nominal);
  // Layout shrank: D = 1 + 2.
  CHECK(ds.layout.D == 3);
}

TEST_CASE("merge threshold boundary is strict") {
  // count == threshold * N stays unmerged (the rule is count < threshold N).
  std::vector<VariableSpec> schema(1);
  schema[0] = {"rs1", VarKind::Nominal, {"AA", "GG", "AG"}, true};
  const int n = 500;
  Eigen::MatrixXi codes(n, 1);
  for (int i = 0; i < n; ++i) codes(i, 0) = i < 400 ? 0 : (i < 450 ? 1 : 2);
  MixedDataset ds = make_dataset(schema, Eigen::MatrixXd(n, 0), codes);
  CHECK(merge_rare_levels(ds, 0.10).empty());  // 50 >= 50
  CHECK(ds.schema[0].kind == VarKind::Nominal);

  // One observation fewer and it merges.
  for (int i = 0; i < n; ++i) codes(i, 0) = i < 401 ? 0 : (i < 450 ? 1 : 2);
  MixedDataset ds2 = make_dataset(schema, Eigen::MatrixXd(n, 0), codes);
  CHECK(merge_rare_levels(ds2, 0.10).size() == 1);  // 49 < 50

  // Non-snp-coded nominals are never candidates.
  std::vector<VariableSpec> plain(1);
  plain[0] = {"color", VarKind::Nominal, {"r", "g", "b"}, false};
  Eigen::MatrixXi codes3 = Eigen::MatrixXi::Zero(n, 1);
  codes3(0, 0) = 1;
  codes3(1, 0) = 2;
  MixedDataset ds3 = make_dataset(plain, Eigen::MatrixXd(n, 0), codes3);
  CHECK(merge_rare_levels(ds3, 0.10).empty());

  CHECK_THROWS_AS(merge_rare_levels(ds3, 0.0), NonPositiveParameterError);
  CHECK_THROWS_AS(merge_rare_levels(ds3, 1.5), NonPositiveParameterError);
}

TEST_CASE("make_dataset validates shapes and codes") {
  std::vector<VariableSpec> schema(2);
  schema[0] = {"x", VarKind::Continuous, {}, false};
  schema[1] = {"b", VarKind::Binary, {"n", "y"}, false};
  CHECK_THROWS_AS(make_dataset(schema, Eigen::MatrixXd(3, 2), Eigen::MatrixXi(3, 1)),
                  DimensionError);
  CHECK_THROWS_AS(make_dataset(schema, Eigen::MatrixXd(3, 1), Eigen::MatrixXi(2, 1)),
                  DimensionError);
  Eigen::MatrixXi bad = Eigen::MatrixXi::Zero(3, 1);
  bad(1, 0) = 5;  // out of range for a binary variable
  CHECK_THROWS_AS(make_dataset(schema, Eigen::MatrixXd::Zero(3, 1), bad), SchemaMismatchError);
}
