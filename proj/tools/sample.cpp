// sample: command-line front end for the benchmark harness.
//
//   sample run <config>         run an experiment config, write CSV/SVG into the output dir
//   sample theory <json>        print the ergodicity-constant report for a JSON input
//   sample train-flow <config>  FlEx2MCMC training run (log, checkpoint)
//
// Exit codes: 0 ok, 2 config error, 3 numerical failure, 1 anything else.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>

#include "ex2mcmc/ex2mcmc.hpp"

namespace {

ex2::TheoryRequest theory_request_from_json(const nlohmann::json& j) {
  static const std::set<std::string> keys = {"m", "M", "L", "K", "d", "dims", "isir_n", "isir_L",
                                             "ex2_n", "var_pi", "var_lambda"};
  std::string unknown;
  for (const auto& [k, v] : j.items())
    if (!keys.count(k)) unknown += " " + k;
  if (!unknown.empty()) throw ex2::bench::ConfigError("theory input: unknown key(s):" + unknown);
  ex2::TheoryRequest req;
  try {
    req.mala.m = j.value("m", req.mala.m);
    req.mala.M = j.value("M", req.mala.M);
    req.mala.L = j.value("L", req.mala.L);
    req.mala.K = j.value("K", req.mala.K);
    req.mala.d = j.value("d", req.mala.d);
    if (j.contains("dims")) req.dims = j["dims"].get<std::vector<int>>();
    req.isir_n = j.value("isir_n", req.isir_n);
    req.isir_L = j.value("isir_L", req.isir_L);
    if (j.contains("ex2_n")) req.ex2_n = j["ex2_n"].get<std::vector<long>>();
    req.pair.var_pi = j.value("var_pi", req.pair.var_pi);
    req.pair.var_lambda = j.value("var_lambda", req.pair.var_lambda);
  } catch (const nlohmann::json::exception& e) {
    throw ex2::bench::ConfigError(std::string("theory input: ") + e.what());
  }
  return req;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Explore-exploit MCMC samplers and benchmarks"};
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<std::uint64_t> seed;
  std::string out_dir;
  int threads = 1;
  app.add_option("--seed", seed, "override the config seed")->configurable(false);
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);

  std::string config_path, theory_path, train_path;
  auto* run = app.add_subcommand("run", "run an experiment config");
  run->add_option("config", config_path)->required();
  auto* theory = app.add_subcommand("theory", "ergodicity-constant report from JSON");
  theory->add_option("json", theory_path)->required();
  auto* train = app.add_subcommand("train-flow", "train a flow proposal with FlEx2MCMC");
  train->add_option("config", train_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*theory) {
      std::ifstream is(theory_path);
      if (!is) throw ex2::bench::ConfigError("cannot open " + theory_path);
      nlohmann::json j;
      try {
        is >> j;
      } catch (const nlohmann::json::exception& e) {
        throw ex2::bench::ConfigError(std::string("theory input: ") + e.what());
      }
      if (!j.is_object()) throw ex2::bench::ConfigError("theory input: expected a JSON object");
      const nlohmann::json rep = ex2::theory_report(theory_request_from_json(j));
      std::cout << rep.dump(2) << "\n";
      if (!out_dir.empty()) ex2::bench::write_text(std::filesystem::path(out_dir) / "theory_report.json", rep.dump(2) + "\n");
      return 0;
    }

    std::vector<std::pair<std::string, std::string>> overrides;
    if (seed) overrides.emplace_back("seed", std::to_string(*seed));
    if (!out_dir.empty()) overrides.emplace_back("output_dir", out_dir);
    if (*train) overrides.emplace_back("experiment", "flex2-train");
    const ex2::bench::ExperimentConfig cfg = ex2::bench::parse_config(*train ? train_path : config_path, overrides);
    const auto out = ex2::bench::run_experiment(cfg, threads);
    for (const auto& p : ex2::bench::emit_outputs(out, cfg.output_dir)) std::cout << p << "\n";
    return 0;
  } catch (const ex2::bench::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ex2::ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ex2::CapabilityError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ex2::InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return 3;
  } catch (const ex2::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const ex2::KernelError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
