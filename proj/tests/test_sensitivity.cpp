#include <doctest.h>

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <cstdlib>

#include "nails/errors.hpp"
#include "nails/sensitivity.hpp"
#include "nails/solver.hpp"
#include "support/test_helpers.hpp"

using namespace nails;
using nails::testing::make_random_instance;
using nails::testing::max_rel_error;
using nails::testing::RandomInstance;
using nails::testing::random_matrix;
using nails::testing::random_vector;

namespace {

SensitivityBundle bundle_of(RandomInstance& inst) {
  inst.problem.data = &inst.data;
  evaluate_state(inst.state, inst.problem);
  return propagate_sensitivities(inst.state.model, inst.state.x0, inst.data,
                                 inst.state.traj, inst.problem.loss);
}

AdmmCoupling random_coupling(const RnnModel& model, double rho,
                             std::uint64_t seed) {
  AdmmCoupling admm;
  admm.rho = rho;
  const Index n = model.theta_x.size() + model.theta_y.size();
  Rng rng(seed);
  for (Index i = 0; i < n; i += 2) admm.split.push_back(i);
  admm.nu_minus_w =
      random_vector(static_cast<Index>(admm.split.size()), rng, 0.3);
  return admm;
}

}  // namespace

TEST_SUITE("sensitivity") {

TEST_CASE("condensing: scalar linear state map gives powers of a") {
  const double a = 0.8;
  RnnModel m = make_rnn(1, 1, 1, {}, {}, Activation::tanh(),
                        Activation::linear(), false);
  m.theta_x << a, 0.3, 0.0;
  m.theta_y << 1.0, 0.0;
  Dataset data;
  Trace trace;
  trace.inputs = Matrix::Zero(6, 1);
  trace.outputs = Matrix::Zero(6, 1);
  data.traces.push_back(trace);
  TrainingProblem problem;
  problem.data = &data;
  problem.loss = OutputLoss::quadratic(1.0);
  FitState state = make_initial_state(m, data);
  state.x0[0] = Vector::Constant(1, 1.0);
  evaluate_state(state, problem);
  const SensitivityBundle bundle = propagate_sensitivities(
      state.model, state.x0, data, state.traj, problem.loss);
  double power = 1.0;
  for (Index k = 0; k < 6; ++k) {
    CHECK(bundle.traces[0].mx[k](0, 0) == doctest::Approx(power).epsilon(1e-14));
    power *= a;
  }
}

TEST_CASE("condensing recursion holds exactly as assembled") {
  RandomInstance inst = make_random_instance(101, 3, 2, 2, 12);
  const SensitivityBundle bundle = bundle_of(inst);
  const TraceSensitivity& ts = bundle.traces[0];
  const RnnModel& m = inst.state.model;
  for (Index k = 0; k + 1 < 12; ++k) {
    Vector xu(m.n_x + m.n_u);
    xu << inst.state.traj[0].states.row(k).transpose(),
        inst.data.traces[0].inputs.row(k).transpose();
    const NetworkEval ev = evaluate_with_jacobians(m.fx, m.theta_x, xu);
    const Matrix jx = ev.d_input.leftCols(m.n_x);
    const Matrix mx_next = jx * ts.mx[k];
    const Matrix mt_next = jx * ts.mtheta[k] + ev.d_params;
    CHECK((ts.mx[k + 1] - mx_next).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((ts.mtheta[k + 1] - mt_next).lpNorm<Eigen::Infinity>() == 0.0);
  }
  CHECK((ts.mx[0] - Matrix::Identity(3, 3)).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(ts.mtheta[0].lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("stateless model yields empty condensing blocks") {
  RandomInstance inst = make_random_instance(103, 0, 2, 1, 8);
  const SensitivityBundle bundle = bundle_of(inst);
  CHECK(bundle.layout.x0_cols_total() == 0);
  CHECK(bundle.layout.n_theta_x == 0);
  CHECK(bundle.traces[0].mtheta[3].size() == 0);
}

TEST_CASE("condensing matches finite differences of the rollout") {
  RandomInstance inst = make_random_instance(107, 2, 1, 1, 5);
  const SensitivityBundle bundle = bundle_of(inst);
  const RnnModel& m = inst.state.model;
  const Index k_probe = 4;
  // d x_k / d x0 via finite differences of simulate().
  const Matrix fd_x0 = nails::testing::fd_jacobian(
      [&](const Vector& x0) -> Vector {
        return simulate(m, x0, inst.data.traces[0].inputs)
            .states.row(k_probe);
      },
      inst.state.x0[0], 1e-5);
  CHECK(max_rel_error(bundle.traces[0].mx[k_probe], fd_x0) < 1e-5);
  // d x_k / d theta_x likewise.
  const Matrix fd_th = nails::testing::fd_jacobian(
      [&](const Vector& th) -> Vector {
        RnnModel shifted = m;
        shifted.theta_x = th;
        return simulate(shifted, inst.state.x0[0], inst.data.traces[0].inputs)
            .states.row(k_probe);
      },
      m.theta_x, 1e-5);
  CHECK(max_rel_error(bundle.traces[0].mtheta[k_probe], fd_th) < 1e-5);
}

TEST_CASE("quadratic loss: V equals half b squared by construction") {
  RandomInstance inst = make_random_instance(109, 3, 2, 2, 30);
  const SensitivityBundle bundle = bundle_of(inst);
  const StackedLs ls(bundle, inst.state.model, inst.state.x0, inst.problem.reg,
                     {});
  CHECK(std::abs(inst.state.v - ls.half_b_squared()) <
        1e-9 * (1.0 + inst.state.v));
}

TEST_CASE("perfect fit gives b = 0 and a zero step") {
  // Zero parameters and zero targets: every residual, offset, and reg
  // gradient vanishes, so b = 0 and the solved step is exactly zero.
  RandomInstance inst = make_random_instance(113, 2, 1, 1, 25);
  inst.problem.data = &inst.data;
  inst.state.model.theta_x.setZero();
  inst.state.model.theta_y.setZero();
  inst.data.traces[0].outputs.setZero();
  invalidate_trajectory(inst.state);
  evaluate_state(inst.state, inst.problem);
  const SensitivityBundle bundle = propagate_sensitivities(
      inst.state.model, inst.state.x0, inst.data, inst.state.traj,
      inst.problem.loss);
  const StackedLs ls(bundle, inst.state.model, inst.state.x0, inst.problem.reg,
                     {});
  CHECK(ls.b().lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(ls.solve(0.0).lpNorm<Eigen::Infinity>() < 1e-12);
  const Vector grad = objective_gradient(bundle, inst.state.model,
                                         inst.state.x0, inst.problem.reg);
  CHECK(grad.lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("small closed-form solve: static affine fit") {
  // Stateless y = w*u + b fit to two points, no regularizer: the LS step
  // from theta = 0 lands on the interpolating parameters.
  RnnModel m = make_rnn(0, 1, 1, {}, {}, Activation::tanh(),
                        Activation::linear(), true);
  Dataset data;
  Trace trace;
  trace.inputs = (Matrix(2, 1) << 1.0, 2.0).finished();
  trace.outputs = (Matrix(2, 1) << 3.0, 5.0).finished();
  data.traces.push_back(trace);
  TrainingProblem problem;
  problem.data = &data;
  problem.loss = OutputLoss::quadratic(0.5);  // any positive weight
  problem.reg = SmoothRegularizer::l2(0.0, 0.0);
  FitState state = make_initial_state(m, data);
  evaluate_state(state, problem);
  const SensitivityBundle bundle = propagate_sensitivities(
      state.model, state.x0, data, state.traj, problem.loss);
  const StackedLs ls(bundle, state.model, state.x0, problem.reg, {});
  const Vector p = ls.solve(0.0);
  // Exact interpolation: w = 2, b = 1 (theta starts at zero).
  REQUIRE(p.size() == 2);
  CHECK(p[0] == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(p[1] == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("normal equations match the stacked system") {
  for (std::uint64_t seed : {201, 202, 203}) {
    RandomInstance inst = make_random_instance(seed, 3, 2, 2, 20);
    const SensitivityBundle bundle = bundle_of(inst);
    const AdmmCoupling admm =
        seed == 203 ? random_coupling(inst.state.model, 0.7, seed) : AdmmCoupling{};
    const StackedLs stacked(bundle, inst.state.model, inst.state.x0,
                            inst.problem.reg, admm);
    const NormalLs normal(bundle, inst.state.model, inst.state.x0,
                          inst.problem.reg, admm);
    const Matrix ata = stacked.a().transpose() * stacked.a();
    const Vector atb = stacked.a().transpose() * stacked.b();
    CHECK((normal.h() - ata).lpNorm<Eigen::Infinity>() < 1e-10);
    CHECK((normal.c() + atb).lpNorm<Eigen::Infinity>() < 1e-10);
    const Vector ps = stacked.solve(0.0);
    const Vector pn = normal.solve(0.0);
    CHECK((ps - pn).lpNorm<Eigen::Infinity>() <
          1e-8 * (1.0 + ps.lpNorm<Eigen::Infinity>()));
  }
}

TEST_CASE("reg-only system: H is the penalty diagonal") {
  RnnModel m = make_rnn(1, 1, 1, {}, {}, Activation::tanh(),
                        Activation::linear(), false);
  m.theta_x << 0.5, 0.1, 0.0;
  m.theta_y << 1.0, 0.0;
  SensitivityBundle bundle;
  bundle.layout = ParamLayout::of(m, 1);
  TraceSensitivity ts;
  ts.d1.resize(0, 1);
  ts.d2.resize(0, 1);
  bundle.traces.push_back(ts);
  const std::vector<Vector> x0{Vector::Zero(1)};
  const NormalLs normal(bundle, m, x0, SmoothRegularizer::l2(2.0, 0.25), {});
  const Index n_p = bundle.layout.n_p();
  Matrix expect = Matrix::Zero(n_p, n_p);
  expect(0, 0) = 2.0;
  expect.diagonal().tail(n_p - 1).setConstant(0.25);
  CHECK((normal.h() - expect).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("RLS agrees with a hand-solved prior-plus-one-row problem") {
  // Stateless affine model, one data row; minimize
  //   rho/2 ||p + theta||^2 + 1/2 (phi'p - eta)^2
  // whose normal equations (rho I + phi phi') p = -rho theta + phi eta
  // are invertible by hand via Sherman-Morrison.
  RnnModel m = make_rnn(0, 1, 1, {}, {}, Activation::tanh(),
                        Activation::linear(), true);
  m.theta_y << 0.4, -0.2;
  Dataset data;
  Trace trace;
  trace.inputs = Matrix::Constant(1, 1, 2.0);
  trace.outputs = Matrix::Constant(1, 1, 1.0);
  data.traces.push_back(trace);
  TrainingProblem problem;
  problem.data = &data;
  problem.loss = OutputLoss::quadratic(0.5);
  const double rho = 1.0;
  problem.reg = SmoothRegularizer::l2(1.0, rho);
  FitState state = make_initial_state(m, data);
  evaluate_state(state, problem);
  const SensitivityBundle bundle = propagate_sensitivities(
      state.model, state.x0, data, state.traj, problem.loss);
  const RlsLs rls(bundle, state.model, state.x0, problem.reg, {});
  const Vector p = rls.solve(0.0);

  // Hand-built quantities: yhat = 0.4*2 - 0.2 = 0.6, d1 = 2*0.5*(0.6-1),
  // d2 = 2*0.5 = 1; row = sqrt(d2)*[u, 1], eta = -d1/sqrt(d2).
  const double d1 = 2.0 * 0.5 * (0.6 - 1.0);
  Vector phi(2);
  phi << 2.0, 1.0;
  const double eta = -d1;
  const Matrix lhs = rho * Matrix::Identity(2, 2) + phi * phi.transpose();
  const Vector rhs = -rho * m.theta_y + phi * eta;
  const Vector expect = lhs.ldlt().solve(rhs);
  CHECK((p - expect).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("three backends produce the same step") {
  for (std::uint64_t seed : {301, 302, 303, 304}) {
    const bool multi = seed == 304;
    RandomInstance inst =
        make_random_instance(seed, 2, 1, 1, 25, 0.6, 0.15, true, 3,
                             multi ? 2 : 1);
    const SensitivityBundle bundle = bundle_of(inst);
    const AdmmCoupling admm =
        seed % 2 == 0 ? random_coupling(inst.state.model, 1.3, seed)
                      : AdmmCoupling{};
    const auto stacked = build_ls_system(bundle, inst.state.model, inst.state.x0,
                                         inst.problem.reg, admm,
                                         LsBackend::Stacked);
    const auto normal = build_ls_system(bundle, inst.state.model, inst.state.x0,
                                        inst.problem.reg, admm,
                                        LsBackend::Normal);
    const auto rls = build_ls_system(bundle, inst.state.model, inst.state.x0,
                                     inst.problem.reg, admm, LsBackend::Rls);
    const Vector ps = stacked->solve(0.0);
    const Vector pn = normal->solve(0.0);
    const Vector pr = rls->solve(0.0);
    CHECK((ps - pn).lpNorm<Eigen::Infinity>() < 1e-7);
    CHECK((ps - pr).lpNorm<Eigen::Infinity>() < 1e-7);
    // And with damping.
    const double lambda = 0.5;
    CHECK((stacked->solve(lambda) - normal->solve(lambda))
              .lpNorm<Eigen::Infinity>() < 1e-7);
    CHECK((stacked->solve(lambda) - rls->solve(lambda))
              .lpNorm<Eigen::Infinity>() < 1e-7);
  }
}

TEST_CASE("RLS covariance equals the inverse Gram matrix") {
  RandomInstance inst = make_random_instance(311, 2, 1, 2, 30);
  const SensitivityBundle bundle = bundle_of(inst);
  const StackedLs stacked(bundle, inst.state.model, inst.state.x0,
                          inst.problem.reg, {});
  const RlsLs rls(bundle, inst.state.model, inst.state.x0, inst.problem.reg,
                  {});
  const auto sol = rls.solve_with_covariance(0.0);
  const Matrix inv = (stacked.a().transpose() * stacked.a()).inverse();
  CHECK(max_rel_error(sol.covariance, inv) < 1e-6);
}

TEST_CASE("RLS rejects unusable configurations") {
  RandomInstance inst = make_random_instance(313, 2, 1, 1, 10, 0.0, 0.0);
  const SensitivityBundle bundle = bundle_of(inst);
  // No quadratic weight anywhere and no damping.
  const RlsLs rls(bundle, inst.state.model, inst.state.x0,
                  SmoothRegularizer::l2(0.0, 0.0), {});
  CHECK_THROWS_AS(rls.solve(0.0), ConfigError);
  // Damping alone restores solvability.
  CHECK_NOTHROW(rls.solve(0.5));
  // Non-L2 regularizers are rejected at construction.
  BlockRegularizer blk;
  blk.value = [](const Vector&) { return 0.0; };
  blk.gradient = [](const Vector& v) -> Vector { return Vector::Zero(v.size()); };
  blk.hessian_cholesky = [](const Vector& v) -> Matrix {
    return Matrix::Identity(v.size(), v.size());
  };
  CHECK_THROWS_AS(RlsLs(bundle, inst.state.model, inst.state.x0,
                        SmoothRegularizer::general(blk, blk, blk), {}),
                  ConfigError);
}

TEST_CASE("gradient identities") {
  RandomInstance inst = make_random_instance(317, 3, 2, 2, 15);
  const SensitivityBundle bundle = bundle_of(inst);
  const Vector grad = objective_gradient(bundle, inst.state.model,
                                         inst.state.x0, inst.problem.reg);
  const StackedLs stacked(bundle, inst.state.model, inst.state.x0,
                          inst.problem.reg, {});
  SUBCASE("gradient equals -A'b under the quadratic loss") {
    const Vector atb = stacked.a().transpose() * stacked.b();
    CHECK((grad + atb).lpNorm<Eigen::Infinity>() <
          1e-10 * (1.0 + atb.lpNorm<Eigen::Infinity>()));
  }
  SUBCASE("directional derivative identity (grad V)'p = -b'Ap") {
    const Vector p = stacked.solve(0.0);
    const double lhs = grad.dot(p);
    const double rhs = stacked.directional_derivative(p);
    CHECK(std::abs(lhs - rhs) < 1e-9 * (1.0 + std::abs(lhs)));
  }
  SUBCASE("gradient matches finite differences of V") {
    const ParamLayout layout = bundle.layout;
    Vector fd(layout.n_p());
    for (Index i = 0; i < layout.n_p(); ++i) {
      Vector e = Vector::Zero(layout.n_p());
      e[i] = 1.0;
      const double h = 1e-6;
      const double up =
          nails::testing::objective_at(inst.state, inst.problem, layout, e, h);
      const double dn =
          nails::testing::objective_at(inst.state, inst.problem, layout, e, -h);
      fd[i] = (up - dn) / (2.0 * h);
    }
    // Entries below the finite-difference noise floor are compared absolutely.
    CHECK((grad - fd).lpNorm<Eigen::Infinity>() <
          1e-7 * (1.0 + grad.lpNorm<Eigen::Infinity>()));
    CHECK(max_rel_error(grad, fd, 1e-4) < 1e-5);
  }
}

TEST_CASE("multi-trace assembly keeps x0 blocks separate") {
  RandomInstance inst =
      make_random_instance(331, 2, 1, 1, 10, 0.5, 0.1, true, 3, 3);
  const SensitivityBundle bundle = bundle_of(inst);
  CHECK(bundle.layout.x0_cols_total() == 6);
  const StackedLs stacked(bundle, inst.state.model, inst.state.x0,
                          inst.problem.reg, {});
  // Rows of trace 0 only touch the first x0 block.
  const Index rows_per_trace = 10;
  for (Index r = 0; r < rows_per_trace; ++r) {
    CHECK(stacked.a().row(r).segment(2, 4).lpNorm<Eigen::Infinity>() == 0.0);
  }
  // Rows of trace 2 only touch the third block.
  for (Index r = 2 * rows_per_trace; r < 3 * rows_per_trace; ++r) {
    CHECK(stacked.a().row(r).segment(0, 4).lpNorm<Eigen::Infinity>() == 0.0);
  }
}

TEST_CASE("encoder: shared x0 block uses the encoder parameter Jacobian") {
  RnnModel m = make_rnn(2, 1, 1, {3}, {3}, Activation::tanh(),
                        Activation::linear(), true);
  attach_encoder(m, 3, {2}, Activation::tanh());
  init_weights(m, 0.5, 99);
  Rng rng(100);
  Dataset data;
  for (int j = 0; j < 2; ++j) {
    Trace trace;
    trace.inputs = random_matrix(8, 1, rng);
    trace.outputs = random_matrix(8, 1, rng);
    trace.v0 = random_vector(3, rng);
    data.traces.push_back(std::move(trace));
  }
  TrainingProblem problem;
  problem.data = &data;
  problem.loss = OutputLoss::quadratic(1.0 / 16.0);
  problem.reg = SmoothRegularizer::l2(0.3, 0.1);
  FitState state = make_initial_state(m, data);
  evaluate_state(state, problem);
  const SensitivityBundle bundle = propagate_sensitivities(
      state.model, state.x0, data, state.traj, problem.loss);
  CHECK(bundle.layout.shared_x0);
  CHECK(bundle.layout.x0_cols_total() == m.theta_x0.size());
  const Matrix expected =
      jacobian_params(*m.encoder, m.theta_x0, *data.traces[1].v0);
  CHECK((bundle.traces[1].mx[0] - expected).lpNorm<Eigen::Infinity>() == 0.0);
  // Backends still agree in the encoder layout.
  const auto stacked = build_ls_system(bundle, m, state.x0, problem.reg, {},
                                       LsBackend::Stacked);
  const auto rls =
      build_ls_system(bundle, m, state.x0, problem.reg, {}, LsBackend::Rls);
  CHECK((stacked->solve(0.0) - rls->solve(0.0)).lpNorm<Eigen::Infinity>() <
        1e-7);
}

TEST_CASE("assembly rejects non-positive curvature") {
  RandomInstance inst = make_random_instance(337, 2, 1, 1, 6);
  SensitivityBundle bundle = bundle_of(inst);
  bundle.traces[0].d2(3, 0) = 0.0;
  CHECK_THROWS_AS(StackedLs(bundle, inst.state.model, inst.state.x0,
                            inst.problem.reg, {}),
                  NumericError);
}

TEST_CASE("rank-deficient stacked system raises a rank error") {
  // No regularizer and fewer rows than columns.
  RandomInstance inst = make_random_instance(341, 2, 1, 1, 3, 0.0, 0.0);
  const SensitivityBundle bundle = bundle_of(inst);
  const StackedLs stacked(bundle, inst.state.model, inst.state.x0,
                          SmoothRegularizer::l2(0.0, 0.0), {});
  CHECK_THROWS_AS(stacked.solve(0.0), NumericError);
}

TEST_CASE("parallel partition leaves the bundle bit-identical") {
  RandomInstance inst = make_random_instance(347, 3, 2, 2, 150);
  inst.problem.data = &inst.data;
  evaluate_state(inst.state, inst.problem);
  setenv("NAILS_THREADS", "1", 1);
  const SensitivityBundle serial = propagate_sensitivities(
      inst.state.model, inst.state.x0, inst.data, inst.state.traj,
      inst.problem.loss);
  setenv("NAILS_THREADS", "4", 1);
  const SensitivityBundle parallel = propagate_sensitivities(
      inst.state.model, inst.state.x0, inst.data, inst.state.traj,
      inst.problem.loss);
  unsetenv("NAILS_THREADS");
  for (Index k = 0; k < 150; ++k) {
    CHECK((serial.traces[0].mx[k] - parallel.traces[0].mx[k])
              .lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((serial.traces[0].mtheta[k] - parallel.traces[0].mtheta[k])
              .lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((serial.traces[0].fy_dtheta[k] - parallel.traces[0].fy_dtheta[k])
              .lpNorm<Eigen::Infinity>() == 0.0);
  }
  CHECK(serial.total_loss == parallel.total_loss);
}

}  // TEST_SUITE
