#pragma once

#include <string>
#include <vector>

#include "nails/model.hpp"

namespace nails {

/// A trained model plus everything needed to reuse it: per-trace initial
/// states from training and the optional standardization maps applied to the
/// data before fitting.
struct StoredModel {
  RnnModel model;
  std::vector<Vector> x0;

  bool standardized = false;
  Vector u_mean, u_std;
  bool y_standardized = false;
  Vector y_mean, y_std;

  // Fitting context, kept so evaluation can re-estimate initial states the
  // way training would have.
  std::string loss = "mse";  // "mse" or "xent"
  double loss_scale = 0.0;   // 0 = 1/N at evaluation time
  double loss_eps = 1e-4;
  double rho_x = 0.0;
  Index n_a = 0;  // encoder window composition
  Index n_b = 0;
};

/// Self-describing whitespace-separated text format, version tagged, decimal
/// values at 17 significant digits (bit-exact reload).
void save_model(const std::string& path, const StoredModel& stored);
StoredModel load_model(const std::string& path);

}  // namespace nails
