#pragma once

// Multi-seed benchmark sweeps over a (d, K, c, e) grid: per run a fresh
// synthetic dataset, one shared k-means++ initialization, one row per method.
// Cells x runs execute in a work pool; rows land in preassigned slots and are
// written in canonical order, so output files do not depend on scheduling.
// Deterministic mode forces one worker and zeroes wall times, making repeated
// sweeps byte-identical.

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "ggmm/datagen.hpp"
#include "ggmm/fit.hpp"
#include "ggmm/version.hpp"

namespace ggmm {

struct GridCell {
  int d = 2;
  int k = 2;
  double c = 1.0;
  double e = 1.0;
};

struct BenchSpec {
  std::vector<Method> methods;
  std::vector<GridCell> grid;
  int runs = 20;
  std::uint64_t base_seed = 0;
  bool shared_init = true;
  long long n_override = -1;  // -1: the d^2 * 100 default per cell
  OptimConfig optim;
  EmConfig em;
  bool deterministic = false;

  void validate() const {
    if (methods.empty()) throw std::invalid_argument("BenchSpec: no methods");
    if (grid.empty()) throw std::invalid_argument("BenchSpec: empty grid");
    if (runs < 1) throw std::invalid_argument("BenchSpec: runs must be >= 1");
    optim.validate();
    em.validate();
  }
};

struct BenchRow {
  std::string method;
  GridCell cell;
  std::uint64_t seed = 0;
  double time_s = 0.0;
  int iters = 0;
  double final_all = 0.0;
  std::string termination;
};

struct BenchResult {
  std::vector<BenchRow> rows;  // canonical order: cell, run, method
  std::string config_hash;
  std::vector<std::string> init_hashes;  // one per (cell, run), same order
};

// ---------------------------------------------------------------------------
// Spec file format.

inline nlohmann::json bench_spec_to_json(const BenchSpec& spec) {
  nlohmann::json j;
  auto& methods = j["methods"] = nlohmann::json::array();
  for (auto m : spec.methods) methods.push_back(to_string(m));
  auto& grid = j["grid"] = nlohmann::json::array();
  for (const auto& cell : spec.grid)
    grid.push_back({{"d", cell.d}, {"K", cell.k}, {"c", cell.c}, {"e", cell.e}});
  j["runs"] = spec.runs;
  j["seeds"] = spec.base_seed;
  j["shared_init"] = spec.shared_init;
  j["deterministic"] = spec.deterministic;
  if (spec.n_override >= 1) j["n"] = spec.n_override;
  j["optim"] = {{"c1", spec.optim.c1},
                {"c2", spec.optim.c2},
                {"max_iters", spec.optim.max_iters},
                {"tol_avg_ll", spec.optim.tol_avg_ll},
                {"memory", spec.optim.memory}};
  if (!std::isnan(spec.em.cov_floor)) j["em_cov_floor"] = spec.em.cov_floor;
  return j;
}

inline BenchSpec bench_spec_from_json(const nlohmann::json& j) {
  BenchSpec spec;
  try {
    for (const auto& m : j.at("methods"))
      spec.methods.push_back(parse_method(m.get<std::string>()));
    for (const auto& cj : j.at("grid")) {
      GridCell cell;
      cell.d = cj.at("d").get<int>();
      cell.k = cj.at("K").get<int>();
      cell.c = cj.at("c").get<double>();
      cell.e = cj.at("e").get<double>();
      spec.grid.push_back(cell);
    }
    spec.runs = j.value("runs", 20);
    spec.base_seed = j.value("seeds", std::uint64_t{0});
    spec.shared_init = j.value("shared_init", true);
    spec.deterministic = j.value("deterministic", false);
    spec.n_override = j.value("n", static_cast<long long>(-1));
    if (j.contains("optim")) {
      const auto& oj = j.at("optim");
      spec.optim.c1 = oj.value("c1", spec.optim.c1);
      spec.optim.c2 = oj.value("c2", spec.optim.c2);
      spec.optim.max_iters = oj.value("max_iters", spec.optim.max_iters);
      spec.optim.tol_avg_ll = oj.value("tol_avg_ll", spec.optim.tol_avg_ll);
      spec.optim.memory = oj.value("memory", spec.optim.memory);
    }
    spec.em.max_iters = spec.optim.max_iters;
    spec.em.tol_avg_ll = spec.optim.tol_avg_ll;
    if (j.contains("em_cov_floor")) spec.em.cov_floor = j.at("em_cov_floor").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("bench spec: malformed JSON: ") + e.what());
  }
  spec.validate();
  return spec;
}

// ---------------------------------------------------------------------------

namespace detail {

inline std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline int bench_thread_count(bool deterministic, int requested = 0) {
  if (deterministic) return 1;
  if (requested > 0) return requested;
  if (const char* env = std::getenv("GEODESIC_GMM_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

inline BenchResult run_bench(const BenchSpec& spec, int threads = 0) {
  spec.validate();
  const auto n_methods = spec.methods.size();
  const std::size_t n_tasks = spec.grid.size() * static_cast<std::size_t>(spec.runs);
  BenchResult result;
  result.config_hash = detail::fnv1a_hex(bench_spec_to_json(spec).dump());
  result.rows.resize(n_tasks * n_methods);
  result.init_hashes.resize(n_tasks);

  const auto run_task = [&](std::size_t task) {
    const std::size_t cell_idx = task / static_cast<std::size_t>(spec.runs);
    const int run = static_cast<int>(task % static_cast<std::size_t>(spec.runs));
    const GridCell& cell = spec.grid[cell_idx];
    const std::uint64_t seed = spec.base_seed + static_cast<std::uint64_t>(run);

    const auto fail_row = [&](std::size_t mi) {
      BenchRow row;
      row.method = to_string(spec.methods[mi]);
      row.cell = cell;
      row.seed = seed;
      row.time_s = 0.0;
      row.iters = 0;
      row.final_all = std::numeric_limits<double>::quiet_NaN();
      row.termination = "failure";
      result.rows[task * n_methods + mi] = std::move(row);
    };

    // No exception may escape: tasks run on pool threads, and one pathological
    // cell must not abort the rest of the sweep.
    try {
      GenSpec gen;
      gen.d = cell.d;
      gen.k = cell.k;
      gen.c = cell.c;
      gen.e = cell.e;
      gen.n = spec.n_override;
      gen.seed = seed;
      const Dataset data = generate_dataset(gen);

      // One initialization per run; every method starts from it.
      Xoshiro256 init_rng(derive_seed(seed, 2));
      const GmmParams init =
          kmeanspp_init(data, cell.k, init_rng, resolve_cov_floor(spec.em, data));
      result.init_hashes[task] = detail::fnv1a_hex(model_to_json(init).dump());

      for (std::size_t mi = 0; mi < n_methods; ++mi) {
        BenchRow row;
        row.method = to_string(spec.methods[mi]);
        row.cell = cell;
        row.seed = seed;
        try {
          const FitOutcome out =
              fit_with_method(data, spec.methods[mi], init, spec.optim, spec.em);
          row.time_s = spec.deterministic ? 0.0 : out.fit_time_s;
          row.iters = out.iterations;
          row.final_all = out.avg_ll_trace.back();
          row.termination = to_string(out.termination);
          result.rows[task * n_methods + mi] = std::move(row);
        } catch (const std::exception&) {
          fail_row(mi);
        }
      }
    } catch (const std::exception&) {
      for (std::size_t mi = 0; mi < n_methods; ++mi) fail_row(mi);
    }
  };

  const int workers = std::min<int>(bench_thread_count(spec.deterministic, threads),
                                    static_cast<int>(n_tasks));
  if (workers <= 1) {
    for (std::size_t t = 0; t < n_tasks; ++t) run_task(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t t = next.fetch_add(1); t < n_tasks; t = next.fetch_add(1))
          run_task(t);
      });
    for (auto& th : pool) th.join();
  }
  return result;
}

// ---------------------------------------------------------------------------
// Output files.

inline constexpr const char* bench_csv_header =
    "method,d,K,c,e,seed,time_s,iters,final_all,termination";

inline void write_bench_csv(const std::string& path, const std::vector<BenchRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_bench_csv: cannot open " + path);
  out << bench_csv_header << '\n';
  for (const auto& row : rows) {
    out << row.method << ',' << row.cell.d << ',' << row.cell.k << ','
        << detail::format_double(row.cell.c) << ',' << detail::format_double(row.cell.e)
        << ',' << row.seed << ',' << detail::format_double(row.time_s) << ','
        << row.iters << ',' << detail::format_double(row.final_all) << ','
        << row.termination << '\n';
  }
  if (!out) throw std::runtime_error("write_bench_csv: write failed for " + path);
}

inline void write_bench_meta(const std::string& csv_path, const BenchSpec& spec,
                             const BenchResult& result) {
  nlohmann::json j;
  j["version"] = version_string;
  j["config_hash"] = result.config_hash;
  j["spec"] = bench_spec_to_json(spec);
  j["init_hashes"] = result.init_hashes;
  j["disclosures"] = {
      {"em_cov_floor", std::isnan(spec.em.cov_floor)
                           ? "auto: 1e-6 x mean per-coordinate data variance"
                           : detail::format_double(spec.em.cov_floor)},
      {"separation_criterion", "min_{i<j} ||m_i - m_j|| >= c * sqrt(max_j tr(Sigma_j))"},
      {"timing", "time_s covers the fit only; initialization is shared across methods"
                 " and excluded. Deterministic mode zeroes time_s."}};
  const std::string path = csv_path + ".meta.json";
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_bench_meta: cannot open " + path);
  out << j.dump(2) << '\n';
}

/// Mean +- std of time, mean ALL and mean iterations per (cell, method);
/// recomputable from the rows alone.
inline std::string summarize_bench(const BenchSpec& spec, const std::vector<BenchRow>& rows) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-4s %-3s %-5s %-5s | %-9s %12s %15s %10s %6s\n",
                "d", "K", "c", "e", "method", "time_s", "(std)", "ALL", "iters");
  out << line;
  for (const auto& cell : spec.grid) {
    for (const auto& method : spec.methods) {
      const std::string name = to_string(method);
      double t_sum = 0, t_sq = 0, all_sum = 0, it_sum = 0;
      int count = 0, failures = 0;
      for (const auto& row : rows) {
        if (row.method != name || row.cell.d != cell.d || row.cell.k != cell.k ||
            row.cell.c != cell.c || row.cell.e != cell.e)
          continue;
        if (row.termination == "failure") {
          ++failures;
          continue;
        }
        t_sum += row.time_s;
        t_sq += row.time_s * row.time_s;
        all_sum += row.final_all;
        it_sum += row.iters;
        ++count;
      }
      if (count == 0) {
        std::snprintf(line, sizeof line, "%-4d %-3d %-5g %-5g | %-9s %12s %15s %10s %6s\n",
                      cell.d, cell.k, cell.c, cell.e, name.c_str(), "-", "-", "-", "-");
        out << line;
        continue;
      }
      const double t_mean = t_sum / count;
      const double t_var = std::max(0.0, t_sq / count - t_mean * t_mean);
      std::snprintf(line, sizeof line,
                    "%-4d %-3d %-5g %-5g | %-9s %12.3f %15s %10.4f %6.0f\n", cell.d,
                    cell.k, cell.c, cell.e, name.c_str(), t_mean,
                    ("(" + std::to_string(std::sqrt(t_var)) + ")").c_str(),
                    all_sum / count, it_sum / count);
      out << line;
      if (failures > 0) out << "      ^ " << failures << " failed run(s) excluded\n";
    }
  }
  return out.str();
}

}  // namespace ggmm
