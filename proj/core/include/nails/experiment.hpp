#pragma once

#include <map>
#include <optional>
#include <string>

#include "nails/config.hpp"
#include "nails/model_io.hpp"

namespace nails {

struct TrainOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> solver;
  std::string out_dir = "out";
  bool standardize = false;
  bool timing = false;
  std::optional<std::string> sweep;  // KEY=START:STOP:{lin|log}:COUNT
};

struct EvalOptions {
  std::string model_path;
  std::string data_path;
  bool has_header = false;
  std::string x0_mode = "auto";  // auto | stored[:index] | pso | zero
  std::string out_path;          // optional metrics CSV
  std::uint64_t pso_seed = 1;
};

struct GradcheckOptions {
  std::optional<std::string> config_path;
  std::uint64_t seed = 0;
  bool corrupt = false;  // negative control: perturbs one analytic Jacobian
};

struct GenerateOptions {
  std::optional<std::string> config_path;  // sidecar re-run
  std::string kind = "binary";
  double sigma_n = 0.0;
  Index n_total = 2000;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
};

/// One fully-resolved training run (no filesystem writes).
struct RunArtifacts {
  StoredModel stored;
  std::vector<HistoryRow> history;
  std::vector<AdmmIterRow> admm_history;
  std::map<std::string, double> metrics;
};
RunArtifacts run_experiment(const ExperimentConfig& cfg);

void write_artifacts(const std::string& out_dir, const RunArtifacts& artifacts,
                     bool timing);

int cmd_train(const TrainOptions& options);
int cmd_eval(const EvalOptions& options);
int cmd_gradcheck(const GradcheckOptions& options);
int cmd_generate(const GenerateOptions& options);

}  // namespace nails
