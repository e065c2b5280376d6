#pragma once

#include <cstdint>

#include "nails/loss.hpp"
#include "nails/model.hpp"

namespace nails {

/// Global-best particle swarm with reflection at the box bounds. The zero
/// vector is always seeded into the initial population.
struct PsoConfig {
  int population = 0;  // 0 selects the default 2 * n_x
  double bound = 3.0;  // per-component box [-bound, bound]
  Index horizon = 100; // N0: rollout steps scored (inclusive)
  int iterations = 50;
  double inertia = 0.7;
  double cognitive = 1.5;
  double social = 1.5;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Minimizes rho_x ||x0||^2 + sum_{k=0}^{N0} l(y_k, yhat_k) over simulated
/// rollouts of the trace's first N0+1 samples. Deterministic given the seed.
/// Throws NumericError when every rollout diverges.
Vector estimate_x0(const RnnModel& model, const Trace& trace,
                   const OutputLoss& loss, double rho_x,
                   const PsoConfig& config);

}  // namespace nails
