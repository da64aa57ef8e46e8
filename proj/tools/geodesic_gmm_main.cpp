// geodesic-gmm: generate synthetic mixture data, fit mixtures by EM or
// manifold optimizers, and run benchmark sweeps.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <chrono>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ggmm/bench.hpp"
#include "ggmm/datagen.hpp"
#include "ggmm/em.hpp"
#include "ggmm/fit.hpp"
#include "ggmm/version.hpp"

namespace {

nlohmann::json load_json_file(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(std::string(what) + ": cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string(what) + ": malformed JSON in " + path + ": " +
                             e.what());
  }
  return j;
}

// Config-file values fill in flags the user did not pass on the command line.
template <typename T>
void apply_config(const CLI::App& cmd, const nlohmann::json& cfg, const std::string& flag,
                  const std::string& key, T& var) {
  if (cmd.count(flag) == 0 && cfg.contains(key)) var = cfg.at(key).get<T>();
}

struct GenerateArgs {
  ggmm::GenSpec spec;
  std::string out;
  std::string config;
};

int run_generate(const CLI::App& cmd, GenerateArgs& args) {
  if (!args.config.empty()) {
    const auto cfg = load_json_file(args.config, "config");
    apply_config(cmd, cfg, "--d", "d", args.spec.d);
    apply_config(cmd, cfg, "--k", "K", args.spec.k);
    apply_config(cmd, cfg, "--c", "c", args.spec.c);
    apply_config(cmd, cfg, "--e", "e", args.spec.e);
    apply_config(cmd, cfg, "--n", "n", args.spec.n);
    apply_config(cmd, cfg, "--seed", "seed", args.spec.seed);
    apply_config(cmd, cfg, "--out", "out", args.out);
  }
  args.spec.validate();
  const ggmm::Dataset data = ggmm::generate_dataset(args.spec);
  ggmm::save_csv(data, args.out);
  ggmm::save_dataset_meta(args.out, args.spec);
  std::cout << "wrote " << data.n() << " samples of dimension " << data.d() << " to "
            << args.out << '\n';
  return 0;
}

struct FitArgs {
  std::string data_path;
  std::string method = "lbfgs";
  int k = 1;
  std::uint64_t seed = 0;
  std::string model_out = "model.json";
  std::string report_out = "report.json";
  std::string config;
  bool deterministic = false;
  ggmm::OptimConfig optim;
  double cov_floor = std::numeric_limits<double>::quiet_NaN();
};

nlohmann::json fit_config_json(const FitArgs& args) {
  nlohmann::json cfg{{"method", args.method},
                     {"K", args.k},
                     {"seed", args.seed},
                     {"max_iters", args.optim.max_iters},
                     {"tol_avg_ll", args.optim.tol_avg_ll},
                     {"c1", args.optim.c1},
                     {"c2", args.optim.c2},
                     {"memory", args.optim.memory},
                     {"deterministic", args.deterministic}};
  if (!std::isnan(args.cov_floor)) cfg["cov_floor"] = args.cov_floor;
  return cfg;
}

void write_fit_report(const FitArgs& args, const nlohmann::json& body) {
  nlohmann::json j = body;
  j["version"] = ggmm::version_string;
  j["config"] = fit_config_json(args);
  std::ofstream out(args.report_out);
  if (!out) throw std::runtime_error("report: cannot open " + args.report_out);
  out << j.dump(2) << '\n';
}

int run_fit(const CLI::App& cmd, FitArgs& args) {
  if (!args.config.empty()) {
    const auto cfg = load_json_file(args.config, "config");
    apply_config(cmd, cfg, "--method", "method", args.method);
    apply_config(cmd, cfg, "--k", "K", args.k);
    apply_config(cmd, cfg, "--seed", "seed", args.seed);
    apply_config(cmd, cfg, "--out", "out", args.model_out);
    apply_config(cmd, cfg, "--report", "report", args.report_out);
    apply_config(cmd, cfg, "--max-iters", "max_iters", args.optim.max_iters);
    apply_config(cmd, cfg, "--tol", "tol_avg_ll", args.optim.tol_avg_ll);
    apply_config(cmd, cfg, "--memory", "memory", args.optim.memory);
    apply_config(cmd, cfg, "--c1", "c1", args.optim.c1);
    apply_config(cmd, cfg, "--c2", "c2", args.optim.c2);
    apply_config(cmd, cfg, "--cov-floor", "cov_floor", args.cov_floor);
    apply_config(cmd, cfg, "--deterministic", "deterministic", args.deterministic);
  }
  const ggmm::Method method = ggmm::parse_method(args.method);
  const ggmm::Dataset data = ggmm::load_csv(args.data_path);

  ggmm::EmConfig ecfg;
  ecfg.max_iters = args.optim.max_iters;
  ecfg.tol_avg_ll = args.optim.tol_avg_ll;
  ecfg.cov_floor = args.cov_floor;

  const auto t0 = std::chrono::steady_clock::now();
  ggmm::Xoshiro256 init_rng(ggmm::derive_seed(args.seed, 2));
  const ggmm::GmmParams init =
      ggmm::kmeanspp_init(data, args.k, init_rng, ggmm::resolve_cov_floor(ecfg, data));
  const double init_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  nlohmann::json report{{"method", args.method},
                        {"n", data.n()},
                        {"d", data.d()},
                        {"K", args.k},
                        {"reparametrized",
                         method == ggmm::Method::kLbfgs || method == ggmm::Method::kCg},
                        {"init_time_s", args.deterministic ? 0.0 : init_time}};
  try {
    const ggmm::FitOutcome out =
        ggmm::fit_with_method(data, method, init, args.optim, ecfg);
    report["iterations"] = out.iterations;
    report["termination"] = ggmm::to_string(out.termination);
    report["fit_time_s"] = args.deterministic ? 0.0 : out.fit_time_s;
    report["avg_ll_trace"] = out.avg_ll_trace;
    report["final_all"] = out.avg_ll_trace.back();
    ggmm::save_model(args.model_out, out.model);
    write_fit_report(args, report);
    std::cout << "final ALL " << out.avg_ll_trace.back() << " after " << out.iterations
              << " iterations (" << ggmm::to_string(out.termination) << "); model in "
              << args.model_out << '\n';
    return out.termination == ggmm::Termination::kLineSearchFailure ? 1 : 0;
  } catch (const std::exception& e) {
    report["termination"] = "failure";
    report["error"] = e.what();
    write_fit_report(args, report);
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

struct BenchArgs {
  std::string spec_path;
  std::string out = "results.csv";
  std::string summary_out;
  int threads = 0;
  bool deterministic = false;
};

int run_bench_cmd(BenchArgs& args) {
  ggmm::BenchSpec spec = ggmm::bench_spec_from_json(load_json_file(args.spec_path, "spec"));
  if (args.deterministic) spec.deterministic = true;
  const ggmm::BenchResult result = ggmm::run_bench(spec, args.threads);
  ggmm::write_bench_csv(args.out, result.rows);
  ggmm::write_bench_meta(args.out, spec, result);
  const std::string summary = ggmm::summarize_bench(spec, result.rows);
  std::cout << summary;
  if (!args.summary_out.empty()) {
    std::ofstream sout(args.summary_out);
    if (!sout) throw std::runtime_error("summary: cannot open " + args.summary_out);
    sout << summary;
  }
  std::cout << "wrote " << result.rows.size() << " rows to " << args.out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian mixture fitting via geodesic optimization on the SPD manifold"};
  app.set_version_flag("--version", ggmm::version_string);
  app.require_subcommand(1);

  GenerateArgs gen;
  CLI::App* gen_cmd = app.add_subcommand("generate", "Generate a synthetic mixture dataset");
  gen_cmd->add_option("--d", gen.spec.d, "Dimension");
  gen_cmd->add_option("--k", gen.spec.k, "Component count");
  gen_cmd->add_option("--c", gen.spec.c, "Separation");
  gen_cmd->add_option("--e", gen.spec.e, "Eccentricity (>= 1)");
  gen_cmd->add_option("--n", gen.spec.n, "Sample count (default d^2*100)");
  gen_cmd->add_option("--seed", gen.spec.seed, "RNG seed");
  gen_cmd->add_option("--out", gen.out, "Output CSV path")->required();
  gen_cmd->add_option("--config", gen.config, "JSON config mirroring the flags");

  FitArgs fit;
  CLI::App* fit_cmd = app.add_subcommand("fit", "Fit a mixture to a CSV dataset");
  fit_cmd->add_option("data", fit.data_path, "Input CSV")->required();
  fit_cmd->add_option("--method", fit.method, "em|lbfgs|cg|cg-usual")
      ->check(CLI::IsMember({"em", "lbfgs", "cg", "cg-usual"}));
  fit_cmd->add_option("--k", fit.k, "Component count")->required();
  fit_cmd->add_option("--seed", fit.seed, "Initialization seed");
  fit_cmd->add_option("--out", fit.model_out, "Model JSON path");
  fit_cmd->add_option("--report", fit.report_out, "Report JSON path");
  fit_cmd->add_option("--max-iters", fit.optim.max_iters, "Iteration cap");
  fit_cmd->add_option("--tol", fit.optim.tol_avg_ll, "ALL-difference tolerance");
  fit_cmd->add_option("--memory", fit.optim.memory, "Quasi-Newton history length");
  fit_cmd->add_option("--c1", fit.optim.c1, "Wolfe sufficient-decrease constant");
  fit_cmd->add_option("--c2", fit.optim.c2, "Wolfe curvature constant");
  fit_cmd->add_option("--cov-floor", fit.cov_floor,
                      "EM covariance floor (default: scale-aware)");
  fit_cmd->add_flag("--deterministic", fit.deterministic,
                    "Zero reported wall times for byte-reproducible outputs");
  fit_cmd->add_option("--config", fit.config, "JSON config mirroring the flags");

  BenchArgs bench;
  CLI::App* bench_cmd = app.add_subcommand("bench", "Run a benchmark sweep");
  bench_cmd->add_option("--spec", bench.spec_path, "Bench spec JSON")->required();
  bench_cmd->add_option("--out", bench.out, "Results CSV path");
  bench_cmd->add_option("--summary", bench.summary_out, "Also write the summary here");
  bench_cmd->add_option("--threads", bench.threads,
                        "Worker threads (default: GEODESIC_GMM_THREADS or hardware)");
  bench_cmd->add_flag("--deterministic", bench.deterministic,
                      "Single worker, zeroed wall times: byte-reproducible output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen_cmd->parsed()) return run_generate(*gen_cmd, gen);
    if (fit_cmd->parsed()) return run_fit(*fit_cmd, fit);
    if (bench_cmd->parsed()) return run_bench_cmd(bench);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
