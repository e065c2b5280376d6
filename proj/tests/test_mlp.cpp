#include <doctest.h>

#include <cmath>

#include "nails/errors.hpp"
#include "nails/network.hpp"
#include "support/test_helpers.hpp"

using namespace nails;
using nails::testing::fd_jacobian;
using nails::testing::max_rel_error;
using nails::testing::random_vector;

namespace {

NetworkSpec spec_of(Index in, std::vector<Index> dims, Activation hidden,
                    Activation output) {
  NetworkSpec s;
  s.input_dim = in;
  s.layer_dims = std::move(dims);
  s.hidden_activation = hidden;
  s.output_activation = output;
  return s;
}

}  // namespace

TEST_SUITE("mlp") {

TEST_CASE("activations match their formulas") {
  const Activation sig = Activation::sigmoid();
  CHECK(sig.value(0.0) == doctest::Approx(0.5));
  CHECK(sig.value(2.0) == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))));
  const Activation lrelu = Activation::leaky_relu(0.1);
  CHECK(lrelu.value(3.0) == 3.0);
  CHECK(lrelu.value(-2.0) == doctest::Approx(-0.2));
  CHECK(lrelu.derivative(-1.0) == 0.1);
  CHECK(lrelu.derivative(1.0) == 1.0);
  CHECK_THROWS_AS(Activation::leaky_relu(0.0), ConfigError);
  CHECK_THROWS_AS(Activation::leaky_relu(1.5), ConfigError);

  // Derivatives are finite everywhere probed, including the kink.
  Rng rng(3);
  for (const Activation& act :
       {Activation::linear(), Activation::tanh(), Activation::sigmoid(),
        Activation::leaky_relu(0.1)}) {
    for (int i = 0; i < 100; ++i)
      CHECK(std::isfinite(act.derivative(rng.normal(5.0))));
    CHECK(std::isfinite(act.derivative(0.0)));
  }
}

TEST_CASE("activation names round-trip") {
  for (const Activation& act :
       {Activation::linear(), Activation::tanh(), Activation::sigmoid(),
        Activation::leaky_relu(0.1), Activation::leaky_relu(0.25)}) {
    const Activation back = Activation::parse(act.name());
    CHECK(back.kind() == act.kind());
    CHECK(back.slope() == act.slope());
  }
  CHECK_THROWS_AS(Activation::parse("relu6"), ConfigError);
}

TEST_CASE("parameter packing round-trips bit-exactly") {
  const NetworkSpec spec =
      spec_of(3, {4, 2}, Activation::tanh(), Activation::linear());
  CHECK(spec.parameter_count() == 4 * 4 + 2 * 5);
  Rng rng(7);
  const Vector theta = random_vector(spec.parameter_count(), rng);
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  unpack_parameters(spec, theta, weights, biases);
  const Vector back = pack_parameters(spec, weights, biases);
  REQUIRE(back.size() == theta.size());
  for (Index i = 0; i < theta.size(); ++i) CHECK(back[i] == theta[i]);
}

TEST_CASE("forward: zeros propagate") {
  const NetworkSpec spec =
      spec_of(3, {4, 2}, Activation::tanh(), Activation::linear());
  const Vector theta = Vector::Zero(spec.parameter_count());
  Rng rng(1);
  const Vector out = forward(spec, theta, random_vector(3, rng));
  CHECK(out.norm() == 0.0);
}

TEST_CASE("forward: identity single layer") {
  const NetworkSpec spec =
      spec_of(2, {2}, Activation::tanh(), Activation::linear());
  std::vector<Matrix> weights{Matrix::Identity(2, 2)};
  std::vector<Vector> biases{Vector::Zero(2)};
  const Vector theta = pack_parameters(spec, weights, biases);
  const Vector in = (Vector(2) << 0.3, -1.7).finished();
  const Vector out = forward(spec, theta, in);
  CHECK(out[0] == in[0]);
  CHECK(out[1] == in[1]);
}

TEST_CASE("forward: hand-composed scalar chain") {
  // 1 -> 1 -> 1, unit weights, zero biases, tanh hidden, linear output.
  const NetworkSpec spec =
      spec_of(1, {1, 1}, Activation::tanh(), Activation::linear());
  Vector theta(spec.parameter_count());
  theta << 1.0, 0.0, 1.0, 0.0;  // w1 b1 w2 b2
  const Vector out = forward(spec, theta, Vector::Constant(1, 0.5));
  CHECK(out[0] == doctest::Approx(0.46211715726000974).epsilon(1e-14));
  CHECK(out[0] == std::tanh(0.5));
}

TEST_CASE("forward is pure: identical bits across calls") {
  const NetworkSpec spec =
      spec_of(3, {5, 2}, Activation::sigmoid(), Activation::tanh());
  Rng rng(11);
  const Vector theta = random_vector(spec.parameter_count(), rng);
  const Vector in = random_vector(3, rng);
  const Vector a = forward(spec, theta, in);
  const Vector b = forward(spec, theta, in);
  for (Index i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("forward rejects dimension mismatches") {
  const NetworkSpec spec =
      spec_of(3, {2}, Activation::tanh(), Activation::linear());
  const Vector theta = Vector::Zero(spec.parameter_count());
  CHECK_THROWS_AS(forward(spec, theta, Vector::Zero(4)), ShapeError);
  CHECK_THROWS_AS(forward(spec, Vector::Zero(3), Vector::Zero(3)), ShapeError);
}

TEST_CASE("jacobian_input: linear map returns its weights") {
  const NetworkSpec spec =
      spec_of(3, {2}, Activation::tanh(), Activation::linear());
  Rng rng(5);
  std::vector<Matrix> weights{nails::testing::random_matrix(2, 3, rng)};
  std::vector<Vector> biases{random_vector(2, rng)};
  const Vector theta = pack_parameters(spec, weights, biases);
  const Matrix jac = jacobian_input(spec, theta, random_vector(3, rng));
  CHECK((jac - weights[0]).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("jacobian_input: zero-weight tanh net has zero Jacobian") {
  const NetworkSpec spec =
      spec_of(3, {4, 2}, Activation::tanh(), Activation::linear());
  Rng rng(2);
  const Matrix jac = jacobian_input(
      spec, Vector::Zero(spec.parameter_count()), random_vector(3, rng));
  CHECK(jac.lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("jacobian_input matches finite differences on a 3->4->2 net") {
  const NetworkSpec spec =
      spec_of(3, {4, 2}, Activation::tanh(), Activation::linear());
  Rng rng(13);
  const Vector theta = random_vector(spec.parameter_count(), rng);
  const Vector in = random_vector(3, rng);
  const Matrix fd = fd_jacobian(
      [&](const Vector& v) { return forward(spec, theta, v); }, in, 1e-5);
  CHECK(max_rel_error(jacobian_input(spec, theta, in), fd) < 1e-6);
}

TEST_CASE("jacobian_params: affine map layout") {
  const NetworkSpec spec =
      spec_of(3, {2}, Activation::tanh(), Activation::linear());
  Rng rng(17);
  const Vector theta = random_vector(spec.parameter_count(), rng);
  const Vector u = random_vector(3, rng);
  const Matrix jac = jacobian_params(spec, theta, u);
  // Weight column for entry (i, j) equals u_j at output row i, zero elsewhere.
  for (Index i = 0; i < 2; ++i)
    for (Index j = 0; j < 3; ++j)
      for (Index r = 0; r < 2; ++r)
        CHECK(jac(r, i * 3 + j) == (r == i ? u[j] : 0.0));
  // Bias columns form the identity.
  CHECK((jac.middleCols(6, 2) - Matrix::Identity(2, 2))
            .lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("jacobian_params: zero input zeroes first-layer weight columns") {
  const NetworkSpec spec =
      spec_of(2, {3, 1}, Activation::tanh(), Activation::linear());
  Rng rng(19);
  Vector theta = random_vector(spec.parameter_count(), rng);
  theta.segment(spec.bias_offset(0), 3).setZero();
  theta.segment(spec.bias_offset(1), 1).setZero();
  const Matrix jac = jacobian_params(spec, theta, Vector::Zero(2));
  CHECK(jac.middleCols(spec.weight_offset(0), 3 * 2)
            .lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("jacobian_params matches finite differences on a 2->3->1 net") {
  const NetworkSpec spec =
      spec_of(2, {3, 1}, Activation::tanh(), Activation::linear());
  Rng rng(23);
  const Vector theta = random_vector(spec.parameter_count(), rng);
  const Vector in = random_vector(2, rng);
  const Matrix fd = fd_jacobian(
      [&](const Vector& th) { return forward(spec, th, in); }, theta, 1e-5);
  CHECK(max_rel_error(jacobian_params(spec, theta, in), fd) < 1e-6);
}

TEST_CASE("property: both Jacobians track finite differences") {
  Rng rng(29);
  const std::vector<Activation> hiddens = {
      Activation::tanh(), Activation::sigmoid(), Activation::leaky_relu(0.1)};
  const std::vector<Activation> outputs = {Activation::linear(),
                                           Activation::sigmoid()};
  for (int trial = 0; trial < 25; ++trial) {
    const Index in_dim = 1 + static_cast<Index>(rng.next_u64() % 4);
    const Index hidden = 1 + static_cast<Index>(rng.next_u64() % 5);
    const Index out_dim = 1 + static_cast<Index>(rng.next_u64() % 3);
    std::vector<Index> dims;
    if (rng.uniform01() < 0.8) dims.push_back(hidden);
    if (rng.uniform01() < 0.3) dims.push_back(hidden);
    dims.push_back(out_dim);
    const NetworkSpec spec =
        spec_of(in_dim, dims, hiddens[trial % hiddens.size()],
                outputs[trial % outputs.size()]);
    const Vector theta = random_vector(spec.parameter_count(), rng);
    const Vector input = random_vector(in_dim, rng);
    const NetworkEval eval = evaluate_with_jacobians(spec, theta, input);
    const Matrix fd_in = fd_jacobian(
        [&](const Vector& v) { return forward(spec, theta, v); }, input, 1e-5);
    const Matrix fd_th = fd_jacobian(
        [&](const Vector& th) { return forward(spec, th, input); }, theta,
        1e-5);
    CHECK(max_rel_error(eval.d_input, fd_in) < 1e-5);
    CHECK(max_rel_error(eval.d_params, fd_th) < 1e-5);
    const Vector again = forward(spec, theta, input);
    for (Index i = 0; i < eval.value.size(); ++i)
      CHECK(eval.value[i] == again[i]);
  }
}

}  // TEST_SUITE
