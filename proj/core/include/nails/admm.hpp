#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nails/solver.hpp"

namespace nails {

enum class NonSmoothKind { None, L1, L0, GroupLasso, Quantize };

/// Non-smooth regularizer g(theta_x, theta_y) handled by the ADMM split.
/// Indices are global positions in the concatenated [theta_x; theta_y]
/// vector. Only the variables g touches are split: all of theta for L1/L0,
/// the grouped entries for the group penalty, the constrained entries for
/// quantization.
struct NonSmoothReg {
  NonSmoothKind kind = NonSmoothKind::None;
  double tau_x = 0.0;
  double tau_y = 0.0;
  double tau_g = 0.0;
  std::vector<std::vector<Index>> groups;
  std::vector<double> levels;        // strictly increasing
  std::vector<Index> quant_indices;  // I_x and I_y mapped to global indices

  static NonSmoothReg none();
  static NonSmoothReg l1(double tau_x, double tau_y);
  static NonSmoothReg l0(double tau_x, double tau_y);
  static NonSmoothReg group_lasso(double tau_g,
                                  std::vector<std::vector<Index>> groups);
  static NonSmoothReg quantize(std::vector<double> levels,
                               std::vector<Index> indices);

  void validate(Index n_theta_x, Index n_theta_y) const;
  /// Sorted union of the split indices.
  std::vector<Index> split_indices(Index n_theta_x, Index n_theta_y) const;
};

/// Component-wise soft threshold S_alpha.
Vector prox_l1(const Vector& v, double alpha);

/// Block soft threshold: (1 - alpha/||v||) v when ||v|| > alpha, else 0.
Vector prox_group(const Vector& v, double alpha);

/// Hard threshold for (tau/rho)||.||_0: component zeroed iff v_i^2 < 2 tau/rho.
Vector prox_l0(const Vector& v, double tau, double rho);

/// Snaps the indexed components to the nearest level (exact fp ties go to the
/// larger level); the rest pass through unchanged.
Vector prox_quantize(const Vector& v, const std::vector<double>& levels,
                     const std::vector<Index>& indices);
double nearest_level(double v, const std::vector<double>& levels);

/// n_x groups over the canonical theta layout, each stacking the i-th column
/// of the first fx weight matrix, the i-th column of the first fy weight
/// matrix, the i-th row of the last fx weight matrix, and the i-th entry of
/// its bias. Requires at least one hidden layer in fx.
std::vector<std::vector<Index>> build_state_groups(const RnnModel& model);

/// Duplicate variables and scaled duals over the split indices.
struct AdmmState {
  std::vector<Index> split;
  Vector nu;
  Vector w;
  double rho = 0.0;
  int iterations = 0;
};

struct AdmmIterRow {
  int t = 0;
  double train_loss = 0.0;       // sum of output losses at the projected point
  double primal_residual = 0.0;  // ||theta_split - nu||_2
  double sparsity_pct = 0.0;     // exact zeros in the projected [theta_x; theta_y]
  int active_groups = -1;        // group penalty only
  double wall_s = 0.0;
};

struct AdmmConfig {
  double rho = 1.0;
  int n_admm = 1;
  bool use_lm = false;  // inner solver: Algorithm 2 instead of Algorithm 1
  LineSearchConfig line_search;
  LmConfig lm;
  /// Optional hook scoring a projected candidate for best-iterate tracking;
  /// defaults to the training loss.
  std::function<double(const FitState&)> validation_score;
  EpochObserver inner_observer;
};

struct NailsResult {
  FitState state;       // projected parameters after the last iteration
  FitState best;        // best-scoring projected iterate
  AdmmState admm;       // final duplicates and duals (empty split when g = 0)
  std::vector<AdmmIterRow> admm_history;
};

/// Nonconvex ADMM outer loop around the inner sequential LS solver. With
/// kind == None this is exactly n_admm consecutive inner runs.
NailsResult run_nails(FitState state, const TrainingProblem& problem,
                      const NonSmoothReg& nonsmooth, const AdmmConfig& config);

}  // namespace nails
