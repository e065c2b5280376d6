#pragma once

#include <functional>

#include "nails/types.hpp"

namespace nails {

enum class LossKind { QuadraticMse, ModifiedCrossEntropy };

struct LossEval {
  double value = 0.0;
  Vector d1;  // dl_i / dyhat_i
  Vector d2;  // d2l_i / dyhat_i^2, strictly positive wherever evaluated
};

/// Separable output loss with analytic first and second derivatives.
///  - quadratic:     scale * ||y - yhat||^2
///  - cross-entropy: sum_i -y_i log(eps + yhat_i) - (1 - y_i) log(1 + eps - yhat_i)
///    with y_i in {0, 1} and yhat_i in (0, 1).
class OutputLoss {
 public:
  static OutputLoss quadratic(double scale);
  static OutputLoss cross_entropy(double eps = 1e-4);

  LossKind kind() const { return kind_; }
  double scale() const { return scale_; }
  double eps() const { return eps_; }
  bool is_quadratic() const { return kind_ == LossKind::QuadraticMse; }

  LossEval eval(const Vector& y, const Vector& yhat) const;
  double value(const Vector& y, const Vector& yhat) const;

 private:
  LossKind kind_ = LossKind::QuadraticMse;
  double scale_ = 1.0;
  double eps_ = 1e-4;
};

/// Smooth regularizer for one parameter block: value, gradient, and a
/// Cholesky factor L of the Hessian (L'L = hessian) at the expansion point.
struct BlockRegularizer {
  std::function<double(const Vector&)> value;
  std::function<Vector(const Vector&)> gradient;
  std::function<Matrix(const Vector&)> hessian_cholesky;
};

/// Rows realizing the quadratic model of one block: residual = coeff*p + offset.
struct RegRows {
  Matrix coeff;
  Vector offset;
  bool empty() const { return coeff.rows() == 0; }
};

/// Regularizer separable over the (x0 | theta_x | theta_y) blocks; with an
/// encoder the x0 block applies to theta_x0 instead, and with multiple traces
/// it applies to each trace's x0 separately.
class SmoothRegularizer {
 public:
  /// rho_x/2 ||x0||^2 + rho_theta/2 ||theta_x||^2 + rho_theta/2 ||theta_y||^2.
  static SmoothRegularizer l2(double rho_x, double rho_theta);
  static SmoothRegularizer general(BlockRegularizer x0, BlockRegularizer tx,
                                   BlockRegularizer ty);

  bool is_l2() const { return is_l2_; }
  double rho_x() const { return rho_x_; }
  double rho_theta() const { return rho_theta_; }

  double value_x0(const Vector& v) const { return x0_.value(v); }
  double value_theta_x(const Vector& v) const { return tx_.value(v); }
  double value_theta_y(const Vector& v) const { return ty_.value(v); }
  Vector gradient_x0(const Vector& v) const { return x0_.gradient(v); }
  Vector gradient_theta_x(const Vector& v) const { return tx_.gradient(v); }
  Vector gradient_theta_y(const Vector& v) const { return ty_.gradient(v); }

  /// Least-squares rows of one block at expansion point v:
  /// L p + (L')^{-1} grad(v). Empty when the block contributes nothing
  /// (zero rho in the L2 case, or a zero-sized block).
  RegRows rows_x0(const Vector& v) const {
    return is_l2_ ? l2_rows(rho_x_, v) : rows(x0_, v);
  }
  RegRows rows_theta_x(const Vector& v) const {
    return is_l2_ ? l2_rows(rho_theta_, v) : rows(tx_, v);
  }
  RegRows rows_theta_y(const Vector& v) const {
    return is_l2_ ? l2_rows(rho_theta_, v) : rows(ty_, v);
  }

 private:
  static RegRows rows(const BlockRegularizer& block, const Vector& v);
  static RegRows l2_rows(double rho, const Vector& v);

  bool is_l2_ = true;
  double rho_x_ = 0.0;
  double rho_theta_ = 0.0;
  BlockRegularizer x0_, tx_, ty_;
};

}  // namespace nails
