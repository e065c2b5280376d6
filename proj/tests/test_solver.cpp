#include <doctest.h>

#include <cmath>

#include "nails/errors.hpp"
#include "nails/solver.hpp"
#include "support/test_helpers.hpp"

using namespace nails;
using nails::testing::make_random_instance;
using nails::testing::RandomInstance;

TEST_SUITE("solver") {

TEST_CASE("init_weights: sigma0 = 0 zeroes every parameter") {
  RnnModel m = make_rnn(3, 2, 1, {4}, {4}, Activation::tanh(),
                        Activation::linear(), true);
  init_weights(m, 0.0, 5);
  CHECK(m.theta_x.lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(m.theta_y.lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("init_weights: deterministic per seed, biases zero") {
  RnnModel a = make_rnn(3, 2, 1, {4}, {4}, Activation::tanh(),
                        Activation::linear(), true);
  RnnModel b = a;
  init_weights(a, 0.15, 77);
  init_weights(b, 0.15, 77);
  for (Index i = 0; i < a.theta_x.size(); ++i)
    CHECK(a.theta_x[i] == b.theta_x[i]);
  for (Index i = 0; i < a.theta_y.size(); ++i)
    CHECK(a.theta_y[i] == b.theta_y[i]);
  // biases of every layer stay zero
  for (Index l = 0; l < a.fx.num_layers(); ++l)
    CHECK(a.theta_x.segment(a.fx.bias_offset(l), a.fx.layer_dims[l]).norm() ==
          0.0);
  CHECK_THROWS_AS(init_weights(a, 1.5, 0), ConfigError);
}

TEST_CASE("init_weights: scaled Glorot standard deviation") {
  // fan_in = fan_out = 4 and sigma0 = 0.15 gives std 0.15*sqrt(2/8) = 0.075.
  NetworkSpec spec;
  spec.input_dim = 4;
  spec.layer_dims = {4};
  Rng rng(123);
  double sum = 0.0, sum_sq = 0.0;
  const int draws = 7000;  // 16 weights each
  for (int i = 0; i < draws; ++i) {
    const Vector theta = init_network_weights(spec, 0.15, rng);
    for (Index j = 0; j < 16; ++j) {
      sum += theta[j];
      sum_sq += theta[j] * theta[j];
    }
  }
  const double n = 16.0 * draws;
  const double stddev = std::sqrt(sum_sq / n - (sum / n) * (sum / n));
  CHECK(stddev == doctest::Approx(0.075).epsilon(0.02));
}

TEST_CASE("algorithm 1: exact on a linear-quadratic problem") {
  // Static affine fy, quadratic loss: the first full step solves the problem.
  RandomInstance inst =
      make_random_instance(401, 0, 2, 1, 30, 0.0, 0.05, true, 0);
  inst.problem.data = &inst.data;
  LineSearchConfig cfg;
  cfg.max_epochs = 2;
  run_algorithm1(inst.state, inst.problem, cfg);
  REQUIRE(inst.state.history.size() >= 1);
  CHECK(inst.state.history[0].step_param == 1.0);  // full step accepted
  // Second epoch finds an (essentially) stationary point.
  CHECK(inst.state.stop == StopReason::SmallImprovement);
}

TEST_CASE("algorithm 1: stationary start terminates via eps_v") {
  RandomInstance inst =
      make_random_instance(403, 0, 1, 1, 20, 0.0, 0.1, true, 0);
  inst.problem.data = &inst.data;
  LineSearchConfig cfg;
  cfg.max_epochs = 50;
  run_algorithm1(inst.state, inst.problem, cfg);
  REQUIRE(inst.state.stop == StopReason::SmallImprovement);
  const double v_converged = inst.state.v;
  const int epochs_used = inst.state.epochs_run;
  run_algorithm1(inst.state, inst.problem, cfg);
  CHECK(inst.state.v == doctest::Approx(v_converged).epsilon(1e-12));
  CHECK(inst.state.epochs_run == epochs_used + 1);
  CHECK(inst.state.stop == StopReason::SmallImprovement);
}

TEST_CASE("algorithm 1: E = 0 returns the state untouched") {
  RandomInstance inst = make_random_instance(407, 2, 1, 1, 15);
  inst.problem.data = &inst.data;
  const Vector theta_before = inst.state.model.theta_x;
  LineSearchConfig cfg;
  cfg.max_epochs = 0;
  run_algorithm1(inst.state, inst.problem, cfg);
  CHECK(inst.state.history.empty());
  for (Index i = 0; i < theta_before.size(); ++i)
    CHECK(inst.state.model.theta_x[i] == theta_before[i]);
}

TEST_CASE("algorithm 1: Armijo condition re-verifies from the observer log") {
  RandomInstance inst = make_random_instance(409, 3, 1, 1, 40);
  inst.problem.data = &inst.data;
  LineSearchConfig cfg;
  cfg.max_epochs = 20;
  struct Row {
    double v_before, v_after, alpha, dir_deriv;
  };
  std::vector<Row> rows;
  run_algorithm1(inst.state, inst.problem, cfg, [&](const EpochInfo& info) {
    rows.push_back({info.v_before, info.v_after, info.alpha, info.dir_deriv});
  });
  REQUIRE(!rows.empty());
  for (const Row& row : rows) {
    if (row.alpha == 0.0) continue;  // line-search failure records no update
    CHECK(row.v_after <=
          row.v_before + cfg.c1 * row.alpha * row.dir_deriv + 1e-12);
    CHECK(row.dir_deriv < 0.0);  // solved step is a descent direction
  }
}

TEST_CASE("algorithm 1: V never increases across epochs (5 seeds)") {
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    RandomInstance inst = make_random_instance(500 + seed, 2, 1, 1, 30);
    inst.problem.data = &inst.data;
    LineSearchConfig cfg;
    cfg.max_epochs = 15;
    run_algorithm1(inst.state, inst.problem, cfg);
    double prev = std::numeric_limits<double>::infinity();
    for (const auto& row : inst.state.history) {
      CHECK(row.v <= prev + 1e-12);
      prev = row.v;
    }
  }
}

TEST_CASE("algorithm 1: cached trajectory matches a fresh rollout bit for bit") {
  RandomInstance inst = make_random_instance(419, 2, 1, 1, 25);
  inst.problem.data = &inst.data;
  LineSearchConfig cfg;
  cfg.max_epochs = 5;
  run_algorithm1(inst.state, inst.problem, cfg);
  const Trajectory fresh = simulate(inst.state.model, inst.state.x0[0],
                                    inst.data.traces[0].inputs);
  CHECK((fresh.states - inst.state.traj[0].states).lpNorm<Eigen::Infinity>() ==
        0.0);
  CHECK((fresh.outputs - inst.state.traj[0].outputs)
            .lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("algorithm 2: damping limit shrinks the step to zero") {
  RandomInstance inst = make_random_instance(421, 2, 1, 1, 20);
  inst.problem.data = &inst.data;
  evaluate_state(inst.state, inst.problem);
  const SensitivityBundle bundle = propagate_sensitivities(
      inst.state.model, inst.state.x0, inst.data, inst.state.traj,
      inst.problem.loss);
  const auto ls = build_ls_system(bundle, inst.state.model, inst.state.x0,
                                  inst.problem.reg, {}, LsBackend::Stacked);
  CHECK(ls->solve(1e12).lpNorm<Eigen::Infinity>() < 1e-6);
  // lambda = 0 reproduces the undamped Gauss-Newton step.
  CHECK((ls->solve(0.0) - ls->solve(0.0)).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("algorithm 2: monotone V and replayable lambda bookkeeping") {
  for (std::uint64_t seed : {11, 12, 13}) {
    RandomInstance inst = make_random_instance(600 + seed, 2, 1, 1, 30);
    inst.problem.data = &inst.data;
    LmConfig cfg;
    cfg.max_epochs = 12;
    run_algorithm2(inst.state, inst.problem, cfg);
    double prev = std::numeric_limits<double>::infinity();
    double lambda = cfg.lambda0;
    for (const auto& row : inst.state.history) {
      CHECK(row.v <= prev + 1e-12);
      prev = row.v;
      if (row.step_param != 0.0) {
        // Replay: the accepted lambda is the starting lambda scaled by c2
        // once per rejected inner solve.
        const double expected =
            lambda * std::pow(cfg.c2, row.inner_solves - 1);
        CHECK(row.step_param == doctest::Approx(expected).epsilon(1e-12));
        lambda = expected / cfg.c3;
      }
      CHECK(row.inner_solves <= cfg.n_lambda);
    }
  }
}

TEST_CASE("algorithm 2: trajectory feasibility after the run") {
  RandomInstance inst = make_random_instance(431, 3, 2, 1, 20);
  inst.problem.data = &inst.data;
  LmConfig cfg;
  cfg.max_epochs = 6;
  run_algorithm2(inst.state, inst.problem, cfg);
  const Trajectory fresh = simulate(inst.state.model, inst.state.x0[0],
                                    inst.data.traces[0].inputs);
  CHECK((fresh.states - inst.state.traj[0].states).lpNorm<Eigen::Infinity>() ==
        0.0);
}

TEST_CASE("solvers are deterministic: identical history on identical runs") {
  auto run = [](bool lm) {
    RandomInstance inst = make_random_instance(443, 2, 1, 1, 25);
    inst.problem.data = &inst.data;
    if (lm) {
      LmConfig cfg;
      cfg.max_epochs = 8;
      run_algorithm2(inst.state, inst.problem, cfg);
    } else {
      LineSearchConfig cfg;
      cfg.max_epochs = 8;
      run_algorithm1(inst.state, inst.problem, cfg);
    }
    return inst.state.history;
  };
  for (bool lm : {false, true}) {
    const auto a = run(lm);
    const auto b = run(lm);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].v == b[i].v);
      CHECK(a[i].step_param == b[i].step_param);
      CHECK(a[i].inner_solves == b[i].inner_solves);
    }
  }
}

TEST_CASE("amsgrad: zero gradient leaves parameters unchanged") {
  // Zero parameters, zero targets, zero regularizer: gradient is exactly 0.
  RandomInstance inst = make_random_instance(449, 2, 1, 1, 10, 0.0, 0.0);
  inst.problem.data = &inst.data;
  inst.state.model.theta_x.setZero();
  inst.state.model.theta_y.setZero();
  inst.data.traces[0].outputs.setZero();
  invalidate_trajectory(inst.state);
  AmsgradConfig cfg;
  cfg.max_epochs = 5;
  run_amsgrad(inst.state, inst.problem, cfg);
  CHECK(inst.state.model.theta_x.lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(inst.state.model.theta_y.lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("amsgrad: converges toward the quadratic minimizer") {
  // Static scalar problem: V(w, b) = mean (w*u + b - y)^2.
  RandomInstance inst =
      make_random_instance(457, 0, 1, 1, 40, 0.0, 1e-6, true, 0);
  inst.problem.data = &inst.data;
  AmsgradConfig cfg;
  cfg.max_epochs = 400;
  cfg.lr = 0.05;
  run_amsgrad(inst.state, inst.problem, cfg);
  const double v_end = inst.state.v;
  // Compare against the exact least-squares fit found by algorithm 1.
  RandomInstance exact =
      make_random_instance(457, 0, 1, 1, 40, 0.0, 1e-6, true, 0);
  exact.problem.data = &exact.data;
  LineSearchConfig ls;
  ls.max_epochs = 10;
  run_algorithm1(exact.state, exact.problem, ls);
  CHECK(v_end <= exact.state.v + 0.05 * (1.0 + exact.state.v));
  // Monotone distance after burn-in.
  REQUIRE(inst.state.history.size() > 100);
  const double early = inst.state.history[50].v;
  const double late = inst.state.history.back().v;
  CHECK(late <= early);
}

TEST_CASE("amsgrad: returns the best iterate seen") {
  RandomInstance inst = make_random_instance(461, 2, 1, 1, 20);
  inst.problem.data = &inst.data;
  AmsgradConfig cfg;
  cfg.max_epochs = 60;
  cfg.lr = 0.2;  // deliberately twitchy
  run_amsgrad(inst.state, inst.problem, cfg);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& row : inst.state.history) best = std::min(best, row.v);
  CHECK(inst.state.v <= best + 1e-12);
}

TEST_CASE("config validation") {
  LineSearchConfig ls;
  ls.c1 = 0.0;
  CHECK_THROWS_AS(ls.validate(), ConfigError);
  LmConfig lm;
  lm.c2 = 1.0;
  CHECK_THROWS_AS(lm.validate(), ConfigError);
  AmsgradConfig ams;
  ams.lr = 0.0;
  CHECK_THROWS_AS(ams.validate(), ConfigError);
}

}  // TEST_SUITE
