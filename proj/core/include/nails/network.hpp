#pragma once

#include <vector>

#include "nails/activation.hpp"
#include "nails/types.hpp"

namespace nails {

/// Layered feedforward network shape. Layer l computes
///   v_l = W_l a_{l-1} + b_l,  a_l = hidden(v_l)  (l < L),
/// and the network output is output(v_L). Parameters live in a flat vector:
/// per layer, row-major weights then biases, layers in forward order.
struct NetworkSpec {
  Index input_dim = 0;
  std::vector<Index> layer_dims;  // hidden widths then output width
  Activation hidden_activation = Activation::tanh();
  Activation output_activation = Activation::linear();

  Index num_layers() const { return static_cast<Index>(layer_dims.size()); }
  Index output_dim() const { return layer_dims.back(); }
  Index layer_input_dim(Index layer) const {
    return layer == 0 ? input_dim : layer_dims[layer - 1];
  }
  Index parameter_count() const;
  /// Offset of layer's weight block / bias block inside theta.
  Index weight_offset(Index layer) const;
  Index bias_offset(Index layer) const;

  bool operator==(const NetworkSpec& other) const;

  /// Throws ConfigError unless layer_dims is nonempty with all dims >= 1.
  void validate() const;
};

Vector pack_parameters(const NetworkSpec& spec,
                       const std::vector<Matrix>& weights,
                       const std::vector<Vector>& biases);
void unpack_parameters(const NetworkSpec& spec, const Vector& theta,
                       std::vector<Matrix>& weights,
                       std::vector<Vector>& biases);

Vector forward(const NetworkSpec& spec, const Vector& theta,
               const Vector& input);

/// Standard Jacobian d output / d input, output_dim x input_dim.
Matrix jacobian_input(const NetworkSpec& spec, const Vector& theta,
                      const Vector& input);

/// d output / d theta, output_dim x parameter_count, columns in pack order.
Matrix jacobian_params(const NetworkSpec& spec, const Vector& theta,
                       const Vector& input);

struct NetworkEval {
  Vector value;
  Matrix d_input;   // output_dim x input_dim
  Matrix d_params;  // output_dim x parameter_count
};

/// Value and both Jacobians from a single forward/backward pass.
NetworkEval evaluate_with_jacobians(const NetworkSpec& spec,
                                    const Vector& theta, const Vector& input);

}  // namespace nails
