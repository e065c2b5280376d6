// Command-line front end: train, eval, gradcheck, generate.
//
// Exit codes: 0 success, 1 failed checks, 2 configuration errors,
// 3 data errors, 4 numerical failures.

#include <CLI11.hpp>
#include <iostream>

#include "nails/errors.hpp"
#include "nails/experiment.hpp"

namespace {

int dispatch(const std::function<int()>& body) {
  try {
    return body();
  } catch (const nails::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const nails::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const nails::ShapeError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const nails::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Recurrent state-space model training by sequential least "
               "squares and ADMM"};
  app.require_subcommand(1);

  nails::TrainOptions train;
  std::uint64_t train_seed = 0;
  std::string train_solver;
  std::string train_sweep;
  auto* train_cmd = app.add_subcommand("train", "Fit a model from a config");
  train_cmd->add_option("--config", train.config_path, "INI config path")
      ->required();
  auto* seed_opt =
      train_cmd->add_option("--seed", train_seed, "Override [init] seed");
  auto* solver_opt = train_cmd->add_option(
      "--solver", train_solver, "Override solver: nails, nailm, or amsgrad");
  train_cmd->add_option("--out", train.out_dir, "Output directory");
  train_cmd->add_flag("--standardize", train.standardize,
                      "Standardize data channels before fitting");
  train_cmd->add_flag("--timing", train.timing,
                      "Record real wall-clock times in history.csv");
  auto* sweep_opt = train_cmd->add_option(
      "--sweep", train_sweep, "KEY=START:STOP:{lin|log}:COUNT parameter sweep");

  nails::EvalOptions eval;
  auto* eval_cmd =
      app.add_subcommand("eval", "Open-loop evaluation of a stored model");
  eval_cmd->add_option("--model", eval.model_path, "Model file")->required();
  eval_cmd->add_option("--data", eval.data_path, "CSV data path")->required();
  eval_cmd->add_flag("--header", eval.has_header, "CSV has a header row");
  eval_cmd->add_option("--x0", eval.x0_mode,
                       "Initial state: auto, stored[:i], pso, zero");
  eval_cmd->add_option("--pso-seed", eval.pso_seed, "Seed for the PSO search");
  eval_cmd->add_option("--out", eval.out_path, "Also write metrics CSV here");

  nails::GradcheckOptions gradcheck;
  std::string gradcheck_config;
  auto* gradcheck_cmd = app.add_subcommand(
      "gradcheck", "Compare analytic Jacobians and the objective gradient "
                   "against finite differences");
  auto* gc_cfg = gradcheck_cmd->add_option("--config", gradcheck_config,
                                           "Optional INI config");
  gradcheck_cmd->add_option("--seed", gradcheck.seed, "Instance seed");
  gradcheck_cmd->add_flag("--corrupt", gradcheck.corrupt,
                          "Perturb one analytic derivative (negative control)");

  nails::GenerateOptions generate;
  std::string generate_config;
  auto* generate_cmd =
      app.add_subcommand("generate", "Write a synthetic benchmark dataset");
  generate_cmd->add_option("--kind", generate.kind, "Generator kind (binary)");
  generate_cmd->add_option("--sigma", generate.sigma_n,
                           "Noise standard deviation");
  generate_cmd->add_option("--n", generate.n_total, "Total samples");
  generate_cmd->add_option("--seed", generate.seed, "Generator seed");
  generate_cmd->add_option("--out", generate.out_dir, "Output directory");
  auto* gen_cfg = generate_cmd->add_option(
      "--config", generate_config, "Sidecar INI reproducing a previous run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Flag/option misuse is a configuration error.
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (*train_cmd) {
    if (*seed_opt) train.seed = train_seed;
    if (*solver_opt) train.solver = train_solver;
    if (*sweep_opt) train.sweep = train_sweep;
    return dispatch([&] { return nails::cmd_train(train); });
  }
  if (*eval_cmd) return dispatch([&] { return nails::cmd_eval(eval); });
  if (*gradcheck_cmd) {
    if (*gc_cfg) gradcheck.config_path = gradcheck_config;
    return dispatch([&] { return nails::cmd_gradcheck(gradcheck); });
  }
  if (*generate_cmd) {
    if (*gen_cfg) generate.config_path = generate_config;
    return dispatch([&] { return nails::cmd_generate(generate); });
  }
  return 2;
}
