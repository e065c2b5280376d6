#include "nails/solver.hpp"

#include <chrono>
#include <cmath>

#include "nails/errors.hpp"

namespace nails {

namespace {

double elapsed_s(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

double regularizer_value(const TrainingProblem& problem, const RnnModel& model,
                         const std::vector<Vector>& x0) {
  double acc = 0.0;
  if (model.encoder) {
    acc += problem.reg.value_x0(model.theta_x0);
  } else {
    for (const auto& x : x0) acc += problem.reg.value_x0(x);
  }
  acc += problem.reg.value_theta_x(model.theta_x);
  acc += problem.reg.value_theta_y(model.theta_y);
  return acc;
}

double trajectory_loss(const TrainingProblem& problem,
                       const std::vector<Trajectory>& traj) {
  const Dataset& data = *problem.data;
  double acc = 0.0;
  for (size_t j = 0; j < data.traces.size(); ++j) {
    const Matrix& y = data.traces[j].outputs;
    const Matrix& yhat = traj[j].outputs;
    for (Index k = 0; k < y.rows(); ++k)
      acc += problem.loss.value(y.row(k), yhat.row(k));
  }
  return acc;
}

void simulate_all(const TrainingProblem& problem, const RnnModel& model,
                  std::vector<Vector>& x0, std::vector<Trajectory>& traj) {
  const Dataset& data = *problem.data;
  traj.resize(data.traces.size());
  x0.resize(data.traces.size());
  for (size_t j = 0; j < data.traces.size(); ++j) {
    if (model.encoder) {
      if (!data.traces[j].v0)
        throw ConfigError("trace " + std::to_string(j) +
                          " carries no v0 for the encoder");
      x0[j] = encode_x0(model, *data.traces[j].v0);
    } else if (x0[j].size() != model.n_x) {
      x0[j] = Vector::Zero(model.n_x);
    }
    traj[j] = simulate(model, x0[j], data.traces[j].inputs);
  }
}

struct Candidate {
  RnnModel model;
  std::vector<Vector> x0;
  std::vector<Trajectory> traj;
  double v = std::numeric_limits<double>::infinity();
  double train_loss = std::numeric_limits<double>::infinity();
};

void shift_point(RnnModel& model, std::vector<Vector>& x0,
                 const ParamLayout& layout, const Vector& p, double alpha) {
  if (p.size() != layout.n_p()) throw ShapeError("step length mismatch");
  if (layout.shared_x0) {
    model.theta_x0 += alpha * p.head(layout.x0_cols_trace);
  } else {
    for (Index j = 0; j < layout.n_traces; ++j)
      x0[j] += alpha * p.segment(layout.x0_col_start(j), layout.x0_cols_trace);
  }
  model.theta_x += alpha * p.segment(layout.theta_x_start(), layout.n_theta_x);
  model.theta_y += alpha * p.segment(layout.theta_y_start(), layout.n_theta_y);
}

/// Applies the scaled step and evaluates the shifted point. Divergent or
/// out-of-domain rollouts reject the candidate instead of propagating.
bool try_candidate(const FitState& base, const TrainingProblem& problem,
                   const ParamLayout& layout, const Vector& p, double alpha,
                   Candidate& cand) {
  cand.model = base.model;
  cand.x0 = base.x0;
  shift_point(cand.model, cand.x0, layout, p, alpha);
  try {
    simulate_all(problem, cand.model, cand.x0, cand.traj);
    cand.train_loss = trajectory_loss(problem, cand.traj);
    cand.v = cand.train_loss + regularizer_value(problem, cand.model, cand.x0) +
             problem.admm.penalty(cand.model.theta_x, cand.model.theta_y);
    return std::isfinite(cand.v);
  } catch (const DivergenceError&) {
    return false;
  } catch (const DomainError&) {
    return false;
  }
}

void adopt(FitState& state, Candidate&& cand) {
  state.model = std::move(cand.model);
  state.x0 = std::move(cand.x0);
  state.traj = std::move(cand.traj);
  state.v = cand.v;
  state.train_loss = cand.train_loss;
  state.traj_valid = true;
}

}  // namespace

void LineSearchConfig::validate() const {
  if (!(c1 > 0.0 && c1 < 1.0)) throw ConfigError("c1 must lie in (0, 1)");
  if (!(sigma > 0.0 && sigma < 1.0)) throw ConfigError("sigma must lie in (0, 1)");
  if (n_sigma < 1) throw ConfigError("n_sigma must be >= 1");
  if (max_epochs < 0) throw ConfigError("epoch budget must be >= 0");
}

void LmConfig::validate() const {
  if (!(lambda0 > 0.0)) throw ConfigError("lambda0 must be > 0");
  if (!(c2 > 1.0) || !(c3 > 1.0)) throw ConfigError("c2 and c3 must be > 1");
  if (n_lambda < 1) throw ConfigError("n_lambda must be >= 1");
  if (max_epochs < 0) throw ConfigError("epoch budget must be >= 0");
}

void AmsgradConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("beta1 and beta2 must lie in [0, 1)");
  if (max_epochs < 0) throw ConfigError("epoch budget must be >= 0");
}

FitState make_initial_state(RnnModel model, const Dataset& data) {
  data.validate();
  model.validate();
  FitState state;
  state.model = std::move(model);
  state.x0.assign(data.traces.size(), Vector::Zero(state.model.n_x));
  return state;
}

void evaluate_state(FitState& state, const TrainingProblem& problem) {
  if (!state.traj_valid) {
    simulate_all(problem, state.model, state.x0, state.traj);
    state.traj_valid = true;
  }
  state.train_loss = trajectory_loss(problem, state.traj);
  state.v = state.train_loss +
            regularizer_value(problem, state.model, state.x0) +
            problem.admm.penalty(state.model.theta_x, state.model.theta_y);
}

void invalidate_trajectory(FitState& state) { state.traj_valid = false; }

void apply_step(FitState& state, const ParamLayout& layout, const Vector& p,
                double alpha) {
  shift_point(state.model, state.x0, layout, p, alpha);
  state.traj_valid = false;
}

Vector init_network_weights(const NetworkSpec& spec, double sigma0, Rng& rng) {
  spec.validate();
  Vector theta = Vector::Zero(spec.parameter_count());
  for (Index l = 0; l < spec.num_layers(); ++l) {
    const Index fan_in = spec.layer_input_dim(l);
    const Index fan_out = spec.layer_dims[l];
    const double stddev =
        sigma0 * std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
    const Index w_off = spec.weight_offset(l);
    for (Index i = 0; i < fan_out * fan_in; ++i)
      theta[w_off + i] = rng.normal(stddev);
    // biases stay zero
  }
  return theta;
}

void init_weights(RnnModel& model, double sigma0, std::uint64_t seed) {
  if (!(sigma0 >= 0.0 && sigma0 <= 1.0))
    throw ConfigError("sigma0 must lie in [0, 1]");
  Rng rng(seed);
  if (model.has_state())
    model.theta_x = init_network_weights(model.fx, sigma0, rng);
  model.theta_y = init_network_weights(model.fy, sigma0, rng);
  if (model.encoder)
    model.theta_x0 = init_network_weights(*model.encoder, sigma0, rng);
}

void run_algorithm1(FitState& state, const TrainingProblem& problem,
                    const LineSearchConfig& config,
                    const EpochObserver& observer) {
  config.validate();
  problem.data->validate();
  evaluate_state(state, problem);
  const ParamLayout layout = ParamLayout::of(
      state.model, static_cast<Index>(problem.data->traces.size()));

  state.stop = StopReason::MaxEpochs;
  Candidate cand;
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const SensitivityBundle bundle = propagate_sensitivities(
        state.model, state.x0, *problem.data, state.traj, problem.loss);
    const auto ls = build_ls_system(bundle, state.model, state.x0, problem.reg,
                                    problem.admm, config.backend);
    const Vector p = ls->solve(0.0);
    const double dir_deriv = ls->directional_derivative(p);

    double alpha = 1.0;
    bool accepted = false;
    int solves = 0;
    for (int s = 0; s < config.n_sigma; ++s) {
      ++solves;
      if (try_candidate(state, problem, layout, p, alpha, cand) &&
          cand.v <= state.v + config.c1 * alpha * dir_deriv) {
        accepted = true;
        break;
      }
      alpha *= config.sigma;
    }
    const double v_before = state.v;
    if (accepted) {
      adopt(state, std::move(cand));
    } else {
      alpha = 0.0;
    }
    ++state.epochs_run;
    state.history.push_back(
        {state.epochs_run, state.v, alpha, solves, elapsed_s(t0)});
    if (observer) {
      EpochInfo info;
      info.epoch = state.epochs_run;
      info.v_before = v_before;
      info.v_after = state.v;
      info.alpha = alpha;
      info.solves = solves;
      info.dir_deriv = dir_deriv;
      info.half_b_sq = ls->half_b_squared();
      info.step = &p;
      observer(info);
    }
    if (v_before - state.v <= config.eps_v) {
      state.stop = accepted ? StopReason::SmallImprovement
                            : StopReason::LineSearchFailure;
      return;
    }
  }
}

void run_algorithm2(FitState& state, const TrainingProblem& problem,
                    const LmConfig& config, const EpochObserver& observer) {
  config.validate();
  problem.data->validate();
  evaluate_state(state, problem);
  const ParamLayout layout = ParamLayout::of(
      state.model, static_cast<Index>(problem.data->traces.size()));

  state.stop = StopReason::MaxEpochs;
  double lambda = config.lambda0;
  Candidate cand;
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const SensitivityBundle bundle = propagate_sensitivities(
        state.model, state.x0, *problem.data, state.traj, problem.loss);
    const auto ls = build_ls_system(bundle, state.model, state.x0, problem.reg,
                                    problem.admm, config.backend);

    bool improved = false;
    int solves = 0;
    double lambda_used = lambda;
    Vector p;
    double dir_deriv = 0.0;
    while (solves < config.n_lambda) {
      p = ls->solve(lambda);
      ++solves;
      dir_deriv = ls->directional_derivative(p);
      if (try_candidate(state, problem, layout, p, 1.0, cand) &&
          cand.v <= state.v) {
        lambda_used = lambda;
        lambda /= config.c3;
        improved = true;
        break;
      }
      lambda *= config.c2;
    }
    const double v_before = state.v;
    if (improved) adopt(state, std::move(cand));
    ++state.epochs_run;
    state.history.push_back({state.epochs_run, state.v,
                             improved ? lambda_used : 0.0, solves,
                             elapsed_s(t0)});
    if (observer) {
      EpochInfo info;
      info.epoch = state.epochs_run;
      info.v_before = v_before;
      info.v_after = state.v;
      info.lambda = improved ? lambda_used
                             : std::numeric_limits<double>::quiet_NaN();
      info.solves = solves;
      info.dir_deriv = dir_deriv;
      info.half_b_sq = ls->half_b_squared();
      info.step = &p;
      observer(info);
    }
    if (!improved) {
      state.stop = StopReason::NoLmImprovement;
      return;
    }
    if (v_before - state.v <= config.eps_v) {
      state.stop = StopReason::SmallImprovement;
      return;
    }
  }
}

void run_amsgrad(FitState& state, const TrainingProblem& problem,
                 const AmsgradConfig& config, const EpochObserver& observer) {
  config.validate();
  problem.data->validate();
  evaluate_state(state, problem);
  const ParamLayout layout = ParamLayout::of(
      state.model, static_cast<Index>(problem.data->traces.size()));
  const Index n = layout.n_p();

  Vector m = Vector::Zero(n);
  Vector second = Vector::Zero(n);
  Vector second_max = Vector::Zero(n);

  FitState best = state;
  state.stop = StopReason::MaxEpochs;
  Candidate cand;
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const SensitivityBundle bundle = propagate_sensitivities(
        state.model, state.x0, *problem.data, state.traj, problem.loss);
    const Vector g = objective_gradient(bundle, state.model, state.x0,
                                        problem.reg, problem.admm);
    m = config.beta1 * m + (1.0 - config.beta1) * g;
    second = config.beta2 * second +
             (1.0 - config.beta2) * g.cwiseProduct(g);
    second_max = second_max.cwiseMax(second);
    const Vector denom =
        (second_max.cwiseSqrt().array() + config.epsilon).matrix();
    const Vector step = -config.lr * m.cwiseQuotient(denom);
    if (!try_candidate(state, problem, layout, step, 1.0, cand)) {
      state.stop = StopReason::Diverged;
      break;
    }
    const double v_before = state.v;
    adopt(state, std::move(cand));
    ++state.epochs_run;
    state.history.push_back(
        {state.epochs_run, state.v, config.lr, 1, elapsed_s(t0)});
    if (observer) {
      EpochInfo info;
      info.epoch = state.epochs_run;
      info.v_before = v_before;
      info.v_after = state.v;
      info.solves = 1;
      info.dir_deriv = g.dot(step);
      info.step = &step;
      observer(info);
    }
    if (state.v < best.v) {
      best.model = state.model;
      best.x0 = state.x0;
      best.traj = state.traj;
      best.traj_valid = true;
      best.v = state.v;
      best.train_loss = state.train_loss;
    }
  }
  // Return the best iterate seen.
  if (best.v < state.v) {
    state.model = std::move(best.model);
    state.x0 = std::move(best.x0);
    state.traj = std::move(best.traj);
    state.traj_valid = true;
    state.v = best.v;
    state.train_loss = best.train_loss;
  }
}

}  // namespace nails
