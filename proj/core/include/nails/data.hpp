#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "nails/model.hpp"

namespace nails {

/// Comma-separated values, '.' decimal, LF lines, UTF-8; columns ordered
/// inputs then outputs. Throws DataError with the offending line number.
Trace load_csv(const std::string& path, Index n_u, Index n_y, bool has_header);

/// Writes with 17 significant digits so a reload reproduces the exact values.
void save_csv(const std::string& path, const Trace& trace, bool header);

/// The third-order benchmark system with binary outputs:
///   x+ = A diag(x) (0.9 + 0.1 sin x) + b u (1 - u^3) + xi
///   y  = 1[ c'(x + x^3/3) - offset + zeta >= 0 ]
/// driven from x(0) = 0 by a held/redrawn uniform input.
struct SyntheticBinarySystem {
  Matrix a = (Matrix(3, 3) << 0.8, 0.2, -0.1,
                              0.0, 0.9,  0.1,
                              0.1, -0.1, 0.7).finished();
  Vector b = (Vector(3) << -1.0, 0.5, 1.0).finished();
  Vector c = (Vector(3) << -2.0, 1.5, 0.5).finished();
  double offset = 4.0;
  double noise_std = 0.0;       // sigma_n for both state and output noise
  double change_prob = 0.9;     // per-step probability of redrawing u
  std::uint64_t seed = 0;

  Vector next_state(const Vector& x, double u) const;
  double output_margin(const Vector& x) const;  // before noise and threshold
};

/// One trace of n_total samples; deterministic per seed (the input path does
/// not depend on noise_std).
Trace generate_binary_benchmark(const SyntheticBinarySystem& system,
                                Index n_total);

/// First half for training, second half for testing.
std::pair<Trace, Trace> split_half(const Trace& trace);

/// 100 (1 - ||Y - Yhat|| / ||Y - mean(Y)||), columns flattened. Throws
/// DataError when Y is constant.
double bfr(const Matrix& y, const Matrix& yhat);
double rmse(const Matrix& y, const Matrix& yhat);
/// Share of steps whose every output matches after thresholding at 0.5.
double accuracy(const Matrix& y, const Matrix& yhat);
/// Percentage of exact zeros in [theta_x; theta_y].
double sparsity(const Vector& theta_x, const Vector& theta_y);

}  // namespace nails
