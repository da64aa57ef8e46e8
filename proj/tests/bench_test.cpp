#include "ggmm/bench.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace {

using ggmm::BenchResult;
using ggmm::BenchSpec;
using ggmm::GridCell;
using ggmm::Method;

BenchSpec small_spec() {
  BenchSpec spec;
  spec.methods = {Method::kEm, Method::kLbfgs};
  spec.grid = {GridCell{2, 2, 5.0, 1.0}, GridCell{2, 1, 1.0, 1.0}};
  spec.runs = 2;
  spec.base_seed = 11;
  spec.n_override = 150;
  spec.deterministic = true;
  return spec;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

// --- method names ----------------------------------------------------------------

TEST(Method, NamesRoundTrip) {
  for (const auto m : {Method::kEm, Method::kLbfgs, Method::kCg, Method::kCgUsual})
    EXPECT_EQ(ggmm::parse_method(ggmm::to_string(m)), m);
  EXPECT_THROW(ggmm::parse_method("newton"), std::invalid_argument);
}

// --- spec (de)serialization --------------------------------------------------------

TEST(BenchSpecJson, RoundTripPreservesFields) {
  BenchSpec spec;
  spec.methods = {Method::kEm, Method::kCgUsual};
  spec.grid = {GridCell{3, 4, 0.2, 10.0}};
  spec.runs = 7;
  spec.base_seed = 99;
  spec.shared_init = true;
  spec.n_override = 1234;
  spec.optim.max_iters = 321;
  spec.optim.tol_avg_ll = 1e-7;
  spec.optim.memory = 5;
  spec.em.cov_floor = 0.25;
  spec.deterministic = true;

  const BenchSpec back = ggmm::bench_spec_from_json(ggmm::bench_spec_to_json(spec));
  ASSERT_EQ(back.methods.size(), 2u);
  EXPECT_EQ(back.methods[1], Method::kCgUsual);
  ASSERT_EQ(back.grid.size(), 1u);
  EXPECT_EQ(back.grid[0].d, 3);
  EXPECT_EQ(back.grid[0].k, 4);
  EXPECT_DOUBLE_EQ(back.grid[0].c, 0.2);
  EXPECT_DOUBLE_EQ(back.grid[0].e, 10.0);
  EXPECT_EQ(back.runs, 7);
  EXPECT_EQ(back.base_seed, 99u);
  EXPECT_EQ(back.n_override, 1234);
  EXPECT_EQ(back.optim.max_iters, 321);
  EXPECT_DOUBLE_EQ(back.optim.tol_avg_ll, 1e-7);
  EXPECT_EQ(back.optim.memory, 5);
  // EM shares the termination criteria with the optimizers.
  EXPECT_EQ(back.em.max_iters, 321);
  EXPECT_DOUBLE_EQ(back.em.tol_avg_ll, 1e-7);
  EXPECT_DOUBLE_EQ(back.em.cov_floor, 0.25);
  EXPECT_TRUE(back.deterministic);
}

TEST(BenchSpecJson, MalformedInputsThrow) {
  EXPECT_THROW(ggmm::bench_spec_from_json(nlohmann::json{{"runs", 3}}),
               std::invalid_argument);
  nlohmann::json j{{"methods", {"em"}}, {"grid", nlohmann::json::array()}};
  EXPECT_THROW(ggmm::bench_spec_from_json(j), std::invalid_argument);
  nlohmann::json bad_method{
      {"methods", {"sgd"}},
      {"grid", {{{"d", 2}, {"K", 2}, {"c", 1.0}, {"e", 1.0}}}}};
  EXPECT_THROW(ggmm::bench_spec_from_json(bad_method), std::invalid_argument);
}

// --- sweep cardinality and order -----------------------------------------------------

TEST(RunBench, SingleCellSingleRunSingleMethod) {
  BenchSpec spec;
  spec.methods = {Method::kEm};
  spec.grid = {GridCell{2, 2, 5.0, 1.0}};
  spec.runs = 1;
  spec.base_seed = 3;
  spec.n_override = 120;
  spec.deterministic = true;
  const BenchResult result = ggmm::run_bench(spec);
  ASSERT_EQ(result.rows.size(), 1u);
  EXPECT_EQ(result.rows[0].method, "em");
  EXPECT_EQ(result.rows[0].seed, 3u);
  EXPECT_TRUE(std::isfinite(result.rows[0].final_all));
  EXPECT_EQ(result.rows[0].time_s, 0.0);  // deterministic zeroes wall time
  ASSERT_EQ(result.init_hashes.size(), 1u);
  EXPECT_EQ(result.init_hashes[0].size(), 16u);
  EXPECT_EQ(result.config_hash.size(), 16u);
}

TEST(RunBench, RowCountIsCellsTimesRunsTimesMethods) {
  const BenchSpec spec = small_spec();  // 2 cells x 2 runs x 2 methods
  const BenchResult result = ggmm::run_bench(spec);
  ASSERT_EQ(result.rows.size(), 8u);
  ASSERT_EQ(result.init_hashes.size(), 4u);

  // Canonical order: cell-major, then run, then method.
  const char* want_method[] = {"em", "lbfgs", "em", "lbfgs", "em", "lbfgs", "em", "lbfgs"};
  for (int i = 0; i < 8; ++i) {
    EXPECT_EQ(result.rows[static_cast<std::size_t>(i)].method, want_method[i]) << i;
    EXPECT_EQ(result.rows[static_cast<std::size_t>(i)].cell.k, i < 4 ? 2 : 1) << i;
  }
  // Seeds: base + run within each cell.
  EXPECT_EQ(result.rows[0].seed, 11u);
  EXPECT_EQ(result.rows[2].seed, 12u);
  EXPECT_EQ(result.rows[4].seed, 11u);
}

TEST(RunBench, SharedInitHashesIdenticalAcrossMethodsAndRuns) {
  // Hashes are per (cell, run); methods share them by construction. Distinct
  // runs should (generically) produce distinct initializations.
  const BenchSpec spec = small_spec();
  const BenchResult result = ggmm::run_bench(spec);
  EXPECT_NE(result.init_hashes[0], result.init_hashes[1]);  // different run seeds
}

TEST(RunBench, ThreadCountDoesNotChangeResults) {
  BenchSpec spec = small_spec();
  spec.deterministic = false;  // real wall times; only row values must match
  const BenchResult serial = ggmm::run_bench(spec, 1);
  BenchResult parallel = ggmm::run_bench(spec, 4);
  ASSERT_EQ(parallel.rows.size(), serial.rows.size());
  for (std::size_t i = 0; i < serial.rows.size(); ++i) {
    auto& p = parallel.rows[i];
    const auto& s = serial.rows[i];
    EXPECT_EQ(p.method, s.method);
    EXPECT_EQ(p.seed, s.seed);
    EXPECT_EQ(p.iters, s.iters);
    EXPECT_EQ(p.final_all, s.final_all);  // bitwise: scheduling must not leak in
    EXPECT_EQ(p.termination, s.termination);
  }
  EXPECT_EQ(parallel.init_hashes, serial.init_hashes);
  EXPECT_EQ(parallel.config_hash, serial.config_hash);
}

TEST(BenchThreadCount, DeterministicForcesSingleWorker) {
  EXPECT_EQ(ggmm::bench_thread_count(true, 16), 1);
  EXPECT_EQ(ggmm::bench_thread_count(false, 3), 3);
  EXPECT_GE(ggmm::bench_thread_count(false, 0), 1);
}

// --- output files ------------------------------------------------------------------

TEST(BenchCsv, HeaderAndByteIdenticalRewrite) {
  const BenchSpec spec = small_spec();
  const BenchResult result = ggmm::run_bench(spec);
  const auto dir = std::filesystem::temp_directory_path();
  const auto p1 = dir / "ggmm_bench_a.csv";
  const auto p2 = dir / "ggmm_bench_b.csv";
  ggmm::write_bench_csv(p1.string(), result.rows);
  const BenchResult again = ggmm::run_bench(spec);
  ggmm::write_bench_csv(p2.string(), again.rows);

  const std::string a = slurp(p1), b = slurp(p2);
  EXPECT_EQ(a, b);  // hash-equal output for identical deterministic sweeps
  EXPECT_EQ(a.rfind("method,d,K,c,e,seed,time_s,iters,final_all,termination\n", 0), 0u);
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

TEST(BenchMeta, CarriesConfigHashesAndDisclosures) {
  const BenchSpec spec = small_spec();
  const BenchResult result = ggmm::run_bench(spec);
  const auto csv = std::filesystem::temp_directory_path() / "ggmm_bench_meta.csv";
  ggmm::write_bench_csv(csv.string(), result.rows);
  ggmm::write_bench_meta(csv.string(), spec, result);

  const auto meta_path = csv.string() + ".meta.json";
  nlohmann::json meta;
  {
    std::ifstream in(meta_path);
    ASSERT_TRUE(static_cast<bool>(in));
    in >> meta;
  }
  EXPECT_EQ(meta.at("version").get<std::string>(), ggmm::version_string);
  EXPECT_EQ(meta.at("config_hash").get<std::string>(), result.config_hash);
  EXPECT_EQ(meta.at("init_hashes").size(), result.init_hashes.size());
  EXPECT_TRUE(meta.at("disclosures").contains("em_cov_floor"));
  EXPECT_TRUE(meta.at("disclosures").contains("separation_criterion"));
  std::filesystem::remove(csv);
  std::filesystem::remove(meta_path);
}

TEST(BenchSummary, RecomputableFromRows) {
  const BenchSpec spec = small_spec();
  const BenchResult result = ggmm::run_bench(spec);
  const std::string summary = ggmm::summarize_bench(spec, result.rows);

  // Mean ALL for (cell 0, em): recompute and expect its 4-decimal rendering.
  double all_sum = 0.0;
  int count = 0;
  for (const auto& row : result.rows)
    if (row.method == "em" && row.cell.k == 2) {
      all_sum += row.final_all;
      ++count;
    }
  ASSERT_EQ(count, 2);
  char want[32];
  std::snprintf(want, sizeof want, "%.4f", all_sum / count);
  EXPECT_NE(summary.find(want), std::string::npos) << summary;
  EXPECT_NE(summary.find("em"), std::string::npos);
  EXPECT_NE(summary.find("lbfgs"), std::string::npos);
}

TEST(RunBench, FailedRunsBecomeFailureRows) {
  // K larger than n makes initialization impossible: the row must record a
  // failure and the sweep must continue to the healthy cell.
  BenchSpec spec;
  spec.methods = {Method::kEm};
  spec.grid = {GridCell{2, 30, 1.0, 1.0}, GridCell{2, 1, 1.0, 1.0}};
  spec.runs = 1;
  spec.n_override = 20;  // n < K for the first cell
  spec.deterministic = true;
  const BenchResult result = ggmm::run_bench(spec);
  ASSERT_EQ(result.rows.size(), 2u);
  EXPECT_EQ(result.rows[0].termination, "failure");
  EXPECT_TRUE(std::isnan(result.rows[0].final_all));
  EXPECT_EQ(result.rows[1].termination, "tolerance");
}

TEST(BenchSpec, ValidationErrors) {
  BenchSpec spec = small_spec();
  spec.methods.clear();
  EXPECT_THROW(spec.validate(), std::invalid_argument);
  spec = small_spec();
  spec.grid.clear();
  EXPECT_THROW(spec.validate(), std::invalid_argument);
  spec = small_spec();
  spec.runs = 0;
  EXPECT_THROW(spec.validate(), std::invalid_argument);
}

}  // namespace
