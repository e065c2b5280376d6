#include "nails/loss.hpp"

#include <Eigen/LU>
#include <cmath>

#include "nails/errors.hpp"

namespace nails {

OutputLoss OutputLoss::quadratic(double scale) {
  if (!(scale > 0.0)) throw ConfigError("quadratic loss scale must be > 0");
  OutputLoss l;
  l.kind_ = LossKind::QuadraticMse;
  l.scale_ = scale;
  return l;
}

OutputLoss OutputLoss::cross_entropy(double eps) {
  if (!(eps > 0.0)) throw ConfigError("cross-entropy eps must be > 0");
  OutputLoss l;
  l.kind_ = LossKind::ModifiedCrossEntropy;
  l.eps_ = eps;
  return l;
}

LossEval OutputLoss::eval(const Vector& y, const Vector& yhat) const {
  if (y.size() != yhat.size())
    throw ShapeError("loss arguments have different lengths");
  LossEval out;
  out.d1.resize(y.size());
  out.d2.resize(y.size());
  if (kind_ == LossKind::QuadraticMse) {
    for (Index i = 0; i < y.size(); ++i) {
      const double r = yhat[i] - y[i];
      out.value += scale_ * r * r;
      out.d1[i] = 2.0 * scale_ * r;
      out.d2[i] = 2.0 * scale_;
    }
    return out;
  }
  for (Index i = 0; i < y.size(); ++i) {
    if (!(yhat[i] > 0.0 && yhat[i] < 1.0))
      throw DomainError("cross-entropy prediction outside (0, 1): " +
                        std::to_string(yhat[i]));
    if (y[i] != 0.0 && y[i] != 1.0)
      throw DomainError("cross-entropy target must be 0 or 1, got " +
                        std::to_string(y[i]));
    const double a = eps_ + yhat[i];
    const double b = 1.0 + eps_ - yhat[i];
    out.value += -y[i] * std::log(a) - (1.0 - y[i]) * std::log(b);
    out.d1[i] = -y[i] / a + (1.0 - y[i]) / b;
    out.d2[i] = y[i] / (a * a) + (1.0 - y[i]) / (b * b);
  }
  return out;
}

double OutputLoss::value(const Vector& y, const Vector& yhat) const {
  if (y.size() != yhat.size())
    throw ShapeError("loss arguments have different lengths");
  double v = 0.0;
  if (kind_ == LossKind::QuadraticMse) {
    for (Index i = 0; i < y.size(); ++i) {
      const double r = yhat[i] - y[i];
      v += scale_ * r * r;
    }
    return v;
  }
  for (Index i = 0; i < y.size(); ++i) {
    if (!(yhat[i] > 0.0 && yhat[i] < 1.0))
      throw DomainError("cross-entropy prediction outside (0, 1): " +
                        std::to_string(yhat[i]));
    v += -y[i] * std::log(eps_ + yhat[i]) -
         (1.0 - y[i]) * std::log(1.0 + eps_ - yhat[i]);
  }
  return v;
}

namespace {

BlockRegularizer l2_block(double rho) {
  BlockRegularizer b;
  b.value = [rho](const Vector& v) { return 0.5 * rho * v.squaredNorm(); };
  b.gradient = [rho](const Vector& v) -> Vector { return rho * v; };
  b.hessian_cholesky = [rho](const Vector& v) -> Matrix {
    if (rho == 0.0) return Matrix(0, v.size());
    return std::sqrt(rho) *
           Matrix::Identity(v.size(), v.size());
  };
  return b;
}

}  // namespace

SmoothRegularizer SmoothRegularizer::l2(double rho_x, double rho_theta) {
  if (rho_x < 0.0 || rho_theta < 0.0)
    throw ConfigError("L2 penalties must be >= 0");
  SmoothRegularizer r;
  r.is_l2_ = true;
  r.rho_x_ = rho_x;
  r.rho_theta_ = rho_theta;
  r.x0_ = l2_block(rho_x);
  r.tx_ = l2_block(rho_theta);
  r.ty_ = l2_block(rho_theta);
  return r;
}

SmoothRegularizer SmoothRegularizer::general(BlockRegularizer x0,
                                             BlockRegularizer tx,
                                             BlockRegularizer ty) {
  SmoothRegularizer r;
  r.is_l2_ = false;
  r.x0_ = std::move(x0);
  r.tx_ = std::move(tx);
  r.ty_ = std::move(ty);
  return r;
}

RegRows SmoothRegularizer::l2_rows(double rho, const Vector& v) {
  RegRows rows;
  if (v.size() == 0 || rho == 0.0) {
    rows.coeff = Matrix(0, v.size());
    rows.offset = Vector(0);
    return rows;
  }
  const double root = std::sqrt(rho);
  rows.coeff = root * Matrix::Identity(v.size(), v.size());
  rows.offset = root * v;
  return rows;
}

RegRows SmoothRegularizer::rows(const BlockRegularizer& block, const Vector& v) {
  RegRows rows;
  if (v.size() == 0) {
    rows.coeff = Matrix(0, 0);
    rows.offset = Vector(0);
    return rows;
  }
  Matrix chol = block.hessian_cholesky(v);
  if (chol.rows() == 0) {
    rows.coeff = Matrix(0, v.size());
    rows.offset = Vector(0);
    return rows;
  }
  if (chol.cols() != v.size() || chol.rows() != v.size())
    throw ShapeError("hessian factor must be square over the block");
  rows.coeff = std::move(chol);
  // offset = (L')^{-1} grad, L invertible since the Hessian is PD.
  rows.offset = rows.coeff.transpose().partialPivLu().solve(block.gradient(v));
  return rows;
}

}  // namespace nails
