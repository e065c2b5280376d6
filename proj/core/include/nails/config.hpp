#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nails/admm.hpp"
#include "nails/initstate.hpp"

namespace nails {

/// Minimal INI reader: [section] headers, key=value lines, full-line comments
/// starting with ';' or '#'. Values keep internal whitespace; keys and
/// section names are case-sensitive.
class IniFile {
 public:
  static IniFile parse_file(const std::string& path);
  static IniFile parse_string(const std::string& text,
                              const std::string& origin = "<string>");

  bool has(const std::string& section, const std::string& key) const;
  std::string get(const std::string& section, const std::string& key,
                  const std::string& fallback) const;
  double get_double(const std::string& section, const std::string& key,
                    double fallback) const;
  int get_int(const std::string& section, const std::string& key,
              int fallback) const;
  std::uint64_t get_u64(const std::string& section, const std::string& key,
                        std::uint64_t fallback) const;
  bool get_bool(const std::string& section, const std::string& key,
                bool fallback) const;
  std::vector<double> get_double_list(const std::string& section,
                                      const std::string& key) const;
  std::vector<Index> get_index_list(const std::string& section,
                                    const std::string& key) const;
  std::vector<std::string> get_string_list(const std::string& section,
                                           const std::string& key) const;

  void set(const std::string& section, const std::string& key,
           const std::string& value);

  const std::map<std::string, std::map<std::string, std::string>>& sections()
      const {
    return sections_;
  }

 private:
  std::map<std::string, std::map<std::string, std::string>> sections_;
  std::string origin_;
};

enum class SolverChoice { Nails, Nailm, Amsgrad };

/// Everything one training run needs, resolved from the INI sections with
/// defaults pinned to the published hyper-parameter values.
struct ExperimentConfig {
  // [model]
  Index n_x = 4;
  std::vector<Index> fx_hidden{4};
  std::vector<Index> fy_hidden{4};
  Activation hidden_act = Activation::tanh();
  Activation output_act = Activation::linear();
  bool feedthrough = true;
  std::vector<Index> encoder_hidden;
  Index n_a = 0;
  Index n_b = 0;
  bool use_encoder() const { return n_a + n_b > 0; }

  // [loss]
  LossKind loss_kind = LossKind::QuadraticMse;
  double loss_scale = 0.0;  // 0 resolves to 1 / (total training samples)
  double xent_eps = 1e-4;

  // [reg]
  double rho_x = 1.0;
  double rho_theta = 0.1;

  // [nonsmooth]
  NonSmoothKind nonsmooth_kind = NonSmoothKind::None;
  double tau_x = 0.0;
  double tau_y = 0.0;
  double tau_g = 0.0;
  double admm_rho = 0.0;  // 0 resolves to 1, or 10*tau_g for the group kind
  int n_admm = 1;
  std::vector<double> levels;

  // [solver]
  SolverChoice solver = SolverChoice::Nails;
  int epochs = -1;  // -1 resolves to 100 (smooth) or 1 (inside ADMM)
  double eps_v = 1e-6;
  double c1 = 1e-4;
  double ls_sigma = 0.5;
  int n_sigma = 20;
  double lambda0 = 100.0;
  double c2 = 1.5;
  double c3 = 5.0;
  int n_lambda = 20;
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  LsBackend backend = LsBackend::Stacked;

  // [init]
  double sigma0 = 0.15;
  std::uint64_t seed = 0;

  // [data]
  std::vector<std::string> train_paths;
  std::string test_path;
  Index n_u = 1;
  Index n_y = 1;
  bool has_header = false;
  std::string synthetic;  // "" or "binary"
  double sigma_n = 0.0;
  Index n_total = 2000;
  std::uint64_t data_seed = 0;
  bool standardize = false;

  // [x0]
  PsoConfig pso;

  int resolved_epochs() const {
    if (epochs >= 0) return epochs;
    return nonsmooth_kind == NonSmoothKind::None ? 100 : 1;
  }
  double resolved_admm_rho() const {
    if (admm_rho > 0.0) return admm_rho;
    return nonsmooth_kind == NonSmoothKind::GroupLasso && tau_g > 0.0
               ? 10.0 * tau_g
               : 1.0;
  }
};

/// Strict: unknown sections or keys raise ConfigError.
ExperimentConfig parse_experiment_config(const IniFile& ini);

/// Comma list ("0,1") or grid ("lo:step:hi", bounds inclusive).
std::vector<double> parse_levels(const std::string& text);

}  // namespace nails
