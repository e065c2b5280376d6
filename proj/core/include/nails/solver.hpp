#pragma once

#include <cstdint>
#include <functional>
#include <limits>

#include "nails/rng.hpp"
#include "nails/sensitivity.hpp"

namespace nails {

struct LineSearchConfig {
  double c1 = 1e-4;
  double sigma = 0.5;
  int n_sigma = 20;
  double eps_v = 1e-6;
  int max_epochs = 100;  // E
  LsBackend backend = LsBackend::Stacked;

  void validate() const;
};

struct LmConfig {
  double lambda0 = 100.0;
  double c2 = 1.5;
  double c3 = 5.0;
  int n_lambda = 20;
  double eps_v = 1e-6;
  int max_epochs = 100;
  LsBackend backend = LsBackend::Stacked;

  void validate() const;
};

struct AmsgradConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int max_epochs = 100;

  void validate() const;
};

enum class StopReason {
  NotRun,
  MaxEpochs,
  SmallImprovement,
  LineSearchFailure,
  NoLmImprovement,
  Diverged,
};

struct HistoryRow {
  int epoch = 0;        // cumulative across solver invocations
  double v = 0.0;       // objective after the epoch
  double step_param = 0.0;  // alpha (line search), accepted lambda (LM), or lr
  int inner_solves = 0;
  double wall_s = 0.0;
};

struct TrainingProblem {
  const Dataset* data = nullptr;
  OutputLoss loss = OutputLoss::quadratic(1.0);
  SmoothRegularizer reg = SmoothRegularizer::l2(0.0, 0.0);
  AdmmCoupling admm;  // inactive unless run inside the ADMM outer loop
};

struct FitState {
  RnnModel model;
  std::vector<Vector> x0;  // per trace; encoder-derived when one is attached
  std::vector<Trajectory> traj;
  bool traj_valid = false;
  double v = std::numeric_limits<double>::quiet_NaN();
  double train_loss = std::numeric_limits<double>::quiet_NaN();
  std::vector<HistoryRow> history;
  StopReason stop = StopReason::NotRun;
  int epochs_run = 0;
};

FitState make_initial_state(RnnModel model, const Dataset& data);

/// Simulates every trace and recomputes the objective. With a valid cached
/// trajectory only the objective is recomputed (the ADMM outer loop changes
/// the coupling target, never the trajectory).
void evaluate_state(FitState& state, const TrainingProblem& problem);

/// Discards the cached trajectory, forcing the next evaluation to re-simulate.
void invalidate_trajectory(FitState& state);

/// x0[j] += alpha * p-block (or theta_x0 with an encoder), theta_x and
/// theta_y likewise; invalidates the cached trajectory.
void apply_step(FitState& state, const ParamLayout& layout, const Vector& p,
                double alpha);

struct EpochInfo {
  int epoch = 0;
  double v_before = 0.0;
  double v_after = 0.0;
  double alpha = std::numeric_limits<double>::quiet_NaN();
  double lambda = std::numeric_limits<double>::quiet_NaN();
  int solves = 0;
  double dir_deriv = 0.0;
  double half_b_sq = 0.0;
  const Vector* step = nullptr;
};
using EpochObserver = std::function<void(const EpochInfo&)>;

/// Zero biases; weights drawn N(0, (sigma0 * sqrt(2/(fan_in+fan_out)))^2) in
/// pack order. Networks are filled in fx, fy, encoder order from one stream.
Vector init_network_weights(const NetworkSpec& spec, double sigma0, Rng& rng);
void init_weights(RnnModel& model, double sigma0, std::uint64_t seed);

/// Sequential least squares with Armijo backtracking line search.
void run_algorithm1(FitState& state, const TrainingProblem& problem,
                    const LineSearchConfig& config,
                    const EpochObserver& observer = {});

/// Sequential least squares, Levenberg-Marquardt variant. The damping
/// parameter persists across epochs.
void run_algorithm2(FitState& state, const TrainingProblem& problem,
                    const LmConfig& config, const EpochObserver& observer = {});

/// Full-batch AMSGrad on the exact objective gradient; keeps and returns the
/// best iterate seen.
void run_amsgrad(FitState& state, const TrainingProblem& problem,
                 const AmsgradConfig& config,
                 const EpochObserver& observer = {});

}  // namespace nails
