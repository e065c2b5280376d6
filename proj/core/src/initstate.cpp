#include "nails/initstate.hpp"

#include <cmath>
#include <limits>

#include "nails/errors.hpp"
#include "nails/rng.hpp"

namespace nails {

void PsoConfig::validate() const {
  if (population != 0 && population < 2)
    throw ConfigError("PSO population must be >= 2");
  if (!(bound > 0.0)) throw ConfigError("PSO bound must be > 0");
  if (horizon < 1) throw ConfigError("PSO horizon must be >= 1");
  if (iterations < 0) throw ConfigError("PSO iterations must be >= 0");
}

namespace {

double rollout_objective(const RnnModel& model, const Trace& trace,
                         const OutputLoss& loss, double rho_x,
                         const Vector& x0, Index steps) {
  try {
    const Trajectory traj =
        simulate(model, x0, trace.inputs.topRows(steps));
    double acc = rho_x * x0.squaredNorm();
    for (Index k = 0; k < steps; ++k)
      acc += loss.value(trace.outputs.row(k), traj.outputs.row(k));
    return std::isfinite(acc) ? acc
                              : std::numeric_limits<double>::infinity();
  } catch (const DivergenceError&) {
    return std::numeric_limits<double>::infinity();
  } catch (const DomainError&) {
    return std::numeric_limits<double>::infinity();
  }
}

}  // namespace

Vector estimate_x0(const RnnModel& model, const Trace& trace,
                   const OutputLoss& loss, double rho_x,
                   const PsoConfig& config) {
  config.validate();
  model.validate();
  const Index n_x = model.n_x;
  if (n_x == 0) return Vector(0);
  if (trace.length() < config.horizon)
    throw DataError("trace shorter than the PSO scoring horizon");
  // Score k = 0..N0 inclusive, capped by the trace length.
  const Index steps = std::min(trace.length(), config.horizon + 1);

  const int pop =
      config.population == 0 ? static_cast<int>(2 * n_x) : config.population;
  if (pop < 2) throw ConfigError("PSO population must be >= 2");
  const double lo = -config.bound;
  const double hi = config.bound;

  Rng rng(config.seed);
  std::vector<Vector> x(pop), vel(pop), best_x(pop);
  Vector best_f(pop);
  Vector gbest;
  double gbest_f = std::numeric_limits<double>::infinity();

  for (int i = 0; i < pop; ++i) {
    x[i] = Vector::Zero(n_x);
    if (i > 0)
      for (Index c = 0; c < n_x; ++c) x[i][c] = rng.uniform(lo, hi);
    vel[i] = Vector::Zero(n_x);
    best_x[i] = x[i];
    best_f[i] = rollout_objective(model, trace, loss, rho_x, x[i], steps);
    if (best_f[i] < gbest_f) {
      gbest_f = best_f[i];
      gbest = x[i];
    }
  }
  if (!std::isfinite(gbest_f))
    throw NumericError("initial-state estimation failed: every rollout diverged");

  for (int it = 0; it < config.iterations; ++it) {
    for (int i = 0; i < pop; ++i) {
      for (Index c = 0; c < n_x; ++c) {
        const double r1 = rng.uniform01();
        const double r2 = rng.uniform01();
        vel[i][c] = config.inertia * vel[i][c] +
                    config.cognitive * r1 * (best_x[i][c] - x[i][c]) +
                    config.social * r2 * (gbest[c] - x[i][c]);
        double xc = x[i][c] + vel[i][c];
        if (xc < lo) {
          xc = std::min(hi, 2.0 * lo - xc);
          vel[i][c] = -vel[i][c];
        } else if (xc > hi) {
          xc = std::max(lo, 2.0 * hi - xc);
          vel[i][c] = -vel[i][c];
        }
        x[i][c] = xc;
      }
      const double f = rollout_objective(model, trace, loss, rho_x, x[i], steps);
      if (f < best_f[i]) {
        best_f[i] = f;
        best_x[i] = x[i];
      }
      if (f < gbest_f) {
        gbest_f = f;
        gbest = x[i];
      }
    }
  }
  return gbest;
}

}  // namespace nails
