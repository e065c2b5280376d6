#include "nails/network.hpp"

#include "nails/errors.hpp"

namespace nails {

namespace {

Eigen::Map<const RowMajorMatrix> weight_map(const NetworkSpec& spec,
                                            const Vector& theta, Index layer) {
  return {theta.data() + spec.weight_offset(layer), spec.layer_dims[layer],
          spec.layer_input_dim(layer)};
}

Eigen::Map<const Vector> bias_map(const NetworkSpec& spec, const Vector& theta,
                                  Index layer) {
  return {theta.data() + spec.bias_offset(layer), spec.layer_dims[layer]};
}

void check_args(const NetworkSpec& spec, const Vector& theta,
                const Vector& input) {
  spec.validate();
  if (theta.size() != spec.parameter_count())
    throw ShapeError("theta has " + std::to_string(theta.size()) +
                     " entries, spec needs " +
                     std::to_string(spec.parameter_count()));
  if (input.size() != spec.input_dim)
    throw ShapeError("input has " + std::to_string(input.size()) +
                     " entries, spec expects " +
                     std::to_string(spec.input_dim));
}

}  // namespace

Index NetworkSpec::parameter_count() const {
  Index n = 0;
  for (Index l = 0; l < num_layers(); ++l)
    n += layer_dims[l] * (layer_input_dim(l) + 1);
  return n;
}

Index NetworkSpec::weight_offset(Index layer) const {
  Index off = 0;
  for (Index l = 0; l < layer; ++l)
    off += layer_dims[l] * (layer_input_dim(l) + 1);
  return off;
}

Index NetworkSpec::bias_offset(Index layer) const {
  return weight_offset(layer) + layer_dims[layer] * layer_input_dim(layer);
}

bool NetworkSpec::operator==(const NetworkSpec& other) const {
  return input_dim == other.input_dim && layer_dims == other.layer_dims &&
         hidden_activation.kind() == other.hidden_activation.kind() &&
         hidden_activation.slope() == other.hidden_activation.slope() &&
         output_activation.kind() == other.output_activation.kind() &&
         output_activation.slope() == other.output_activation.slope();
}

void NetworkSpec::validate() const {
  if (layer_dims.empty()) throw ConfigError("network needs at least one layer");
  for (Index d : layer_dims)
    if (d < 1) throw ConfigError("layer widths must be >= 1");
  if (input_dim < 0) throw ConfigError("negative input dimension");
}

Vector pack_parameters(const NetworkSpec& spec,
                       const std::vector<Matrix>& weights,
                       const std::vector<Vector>& biases) {
  spec.validate();
  if (static_cast<Index>(weights.size()) != spec.num_layers() ||
      static_cast<Index>(biases.size()) != spec.num_layers())
    throw ShapeError("pack_parameters: one weight matrix and bias per layer");
  Vector theta(spec.parameter_count());
  for (Index l = 0; l < spec.num_layers(); ++l) {
    const Index rows = spec.layer_dims[l];
    const Index cols = spec.layer_input_dim(l);
    if (weights[l].rows() != rows || weights[l].cols() != cols ||
        biases[l].size() != rows)
      throw ShapeError("pack_parameters: layer " + std::to_string(l) +
                       " has wrong shape");
    Eigen::Map<RowMajorMatrix>(theta.data() + spec.weight_offset(l), rows,
                               cols) = weights[l];
    theta.segment(spec.bias_offset(l), rows) = biases[l];
  }
  return theta;
}

void unpack_parameters(const NetworkSpec& spec, const Vector& theta,
                       std::vector<Matrix>& weights,
                       std::vector<Vector>& biases) {
  spec.validate();
  if (theta.size() != spec.parameter_count())
    throw ShapeError("unpack_parameters: theta size mismatch");
  weights.resize(spec.num_layers());
  biases.resize(spec.num_layers());
  for (Index l = 0; l < spec.num_layers(); ++l) {
    weights[l] = weight_map(spec, theta, l);
    biases[l] = bias_map(spec, theta, l);
  }
}

Vector forward(const NetworkSpec& spec, const Vector& theta,
               const Vector& input) {
  check_args(spec, theta, input);
  const Index layers = spec.num_layers();
  Vector a = input;
  Vector v;
  for (Index l = 0; l < layers; ++l) {
    v.noalias() = weight_map(spec, theta, l) * a;
    v += bias_map(spec, theta, l);
    if (l + 1 < layers) {
      spec.hidden_activation.apply(v, a);
    } else {
      spec.output_activation.apply(v, a);
    }
  }
  return a;
}

NetworkEval evaluate_with_jacobians(const NetworkSpec& spec,
                                    const Vector& theta, const Vector& input) {
  check_args(spec, theta, input);
  const Index layers = spec.num_layers();
  const Index out_dim = spec.output_dim();

  // Forward pass, keeping pre-activations and layer inputs.
  std::vector<Vector> pre(layers);       // v_l
  std::vector<Vector> layer_in(layers);  // a_{l-1}
  Vector a = input;
  for (Index l = 0; l < layers; ++l) {
    layer_in[l] = a;
    pre[l].noalias() = weight_map(spec, theta, l) * a;
    pre[l] += bias_map(spec, theta, l);
    if (l + 1 < layers) spec.hidden_activation.apply(pre[l], a);
  }

  NetworkEval eval;
  spec.output_activation.apply(pre[layers - 1], eval.value);
  eval.d_params.resize(out_dim, spec.parameter_count());

  // Backward pass: G = d output / d v_l, assembled into parameter columns.
  Vector deriv;
  spec.output_activation.apply_derivative(pre[layers - 1], deriv);
  Matrix g = Matrix::Zero(out_dim, out_dim);
  g.diagonal() = deriv;
  for (Index l = layers - 1; l >= 0; --l) {
    const Index rows = spec.layer_dims[l];
    const Index cols = spec.layer_input_dim(l);
    const Index w_off = spec.weight_offset(l);
    for (Index i = 0; i < rows; ++i)
      eval.d_params.middleCols(w_off + i * cols, cols).noalias() =
          g.col(i) * layer_in[l].transpose();
    eval.d_params.middleCols(spec.bias_offset(l), rows) = g;
    if (l > 0) {
      Matrix g_prev = g * weight_map(spec, theta, l);
      spec.hidden_activation.apply_derivative(pre[l - 1], deriv);
      g_prev.array().rowwise() *= deriv.transpose().array();
      g = std::move(g_prev);
    } else {
      eval.d_input.noalias() = g * weight_map(spec, theta, 0);
    }
  }
  return eval;
}

Matrix jacobian_input(const NetworkSpec& spec, const Vector& theta,
                      const Vector& input) {
  return evaluate_with_jacobians(spec, theta, input).d_input;
}

Matrix jacobian_params(const NetworkSpec& spec, const Vector& theta,
                       const Vector& input) {
  return evaluate_with_jacobians(spec, theta, input).d_params;
}

}  // namespace nails
