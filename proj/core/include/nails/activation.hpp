#pragma once

#include <string>

#include "nails/types.hpp"

namespace nails {

enum class ActivationKind { Linear, Tanh, Sigmoid, LeakyRelu };

/// Scalar activation with an analytic first derivative, finite everywhere.
class Activation {
 public:
  Activation() = default;

  static Activation linear() { return Activation(ActivationKind::Linear, 0.0); }
  static Activation tanh() { return Activation(ActivationKind::Tanh, 0.0); }
  static Activation sigmoid() { return Activation(ActivationKind::Sigmoid, 0.0); }
  /// slope must lie in (0, 1).
  static Activation leaky_relu(double slope = 0.1);

  ActivationKind kind() const { return kind_; }
  double slope() const { return slope_; }

  double value(double v) const;
  double derivative(double v) const;

  void apply(const Vector& v, Vector& out) const;
  void apply_derivative(const Vector& v, Vector& out) const;

  /// "linear", "tanh", "sigmoid", "leaky_relu" or "leaky_relu:<slope>".
  static Activation parse(const std::string& name);
  std::string name() const;

 private:
  Activation(ActivationKind kind, double slope) : kind_(kind), slope_(slope) {}

  ActivationKind kind_ = ActivationKind::Linear;
  double slope_ = 0.0;
};

}  // namespace nails
