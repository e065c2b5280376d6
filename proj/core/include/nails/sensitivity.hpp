#pragma once

#include <memory>
#include <vector>

#include "nails/loss.hpp"
#include "nails/model.hpp"

namespace nails {

/// Column layout of the step vector p = [x0 block | theta_x | theta_y].
/// Without an encoder the x0 block holds one n_x-wide sub-block per trace;
/// with an encoder it is a single theta_x0 block shared by every trace.
struct ParamLayout {
  Index n_traces = 0;
  Index x0_cols_trace = 0;  // n_x, or n_theta_x0 with an encoder
  bool shared_x0 = false;
  Index n_theta_x = 0;
  Index n_theta_y = 0;

  static ParamLayout of(const RnnModel& model, Index n_traces);

  Index x0_cols_total() const {
    return shared_x0 ? x0_cols_trace : n_traces * x0_cols_trace;
  }
  Index x0_col_start(Index trace) const {
    return shared_x0 ? 0 : trace * x0_cols_trace;
  }
  Index theta_x_start() const { return x0_cols_total(); }
  Index theta_y_start() const { return theta_x_start() + n_theta_x; }
  Index n_p() const { return theta_y_start() + n_theta_y; }
};

/// ADMM coupling term rho/2 sum_s (theta_s - free_s)^2 added to the smooth
/// objective during an inner solve. `split` holds indices into the
/// concatenated [theta_x; theta_y] vector and free = nu - w.
struct AdmmCoupling {
  double rho = 0.0;
  std::vector<Index> split;
  Vector nu_minus_w;

  bool active() const { return rho > 0.0 && !split.empty(); }
  double penalty(const Vector& theta_x, const Vector& theta_y) const;
};

/// Linearization of one trace around its nominal trajectory: per-step output
/// Jacobians, the condensing matrices of the state recursion, and the loss
/// derivative weights.
struct TraceSensitivity {
  std::vector<Matrix> mx;         // d x_k / d x0-block, n_x x x0_cols_trace
  std::vector<Matrix> mtheta;     // d x_k / d theta_x,  n_x x n_theta_x
  std::vector<Matrix> fy_dx;      // d y_k / d x_k,      n_y x n_x
  std::vector<Matrix> fy_dtheta;  // d y_k / d theta_y,  n_y x n_theta_y
  Matrix d1, d2;                  // N x n_y loss derivatives at (y_k, yhat_k)
  double loss_value = 0.0;
};

struct SensitivityBundle {
  ParamLayout layout;
  std::vector<TraceSensitivity> traces;
  double total_loss = 0.0;
};

/// Computes per-step Jacobians (parallel over time steps) and runs the
/// condensing recursion. Trajectories must be feasible for (model, x0).
SensitivityBundle propagate_sensitivities(const RnnModel& model,
                                          const std::vector<Vector>& x0,
                                          const Dataset& data,
                                          const std::vector<Trajectory>& traj,
                                          const OutputLoss& loss);

/// Exact gradient of the smooth (optionally ADMM-augmented) objective at the
/// nominal point, assembled directly from the bundle.
Vector objective_gradient(const SensitivityBundle& bundle, const RnnModel& model,
                          const std::vector<Vector>& x0,
                          const SmoothRegularizer& reg,
                          const AdmmCoupling& admm = {});

enum class LsBackend { Stacked, Normal, Rls };

LsBackend parse_backend(const std::string& name);
std::string backend_name(LsBackend backend);

/// One epoch's linearized least-squares problem. solve() may be called
/// repeatedly with different Levenberg-Marquardt damping.
class LsSystem {
 public:
  virtual ~LsSystem() = default;

  /// Minimizer of ½||A p - b||² + ½ lambda ||p||².
  virtual Vector solve(double lambda) const = 0;

  /// (grad V)' p, from the backend's native quantities.
  virtual double directional_derivative(const Vector& p) const = 0;

  /// ½||b||² over data, regularizer, and coupling rows.
  double half_b_squared() const { return half_b_sq_; }
  const Vector& objective_grad() const { return grad_; }
  Index n_p() const { return n_p_; }

 protected:
  Index n_p_ = 0;
  double half_b_sq_ = 0.0;
  Vector grad_;
};

class StackedLs : public LsSystem {
 public:
  StackedLs(const SensitivityBundle& bundle, const RnnModel& model,
            const std::vector<Vector>& x0, const SmoothRegularizer& reg,
            const AdmmCoupling& admm);
  Vector solve(double lambda) const override;
  double directional_derivative(const Vector& p) const override;
  const Matrix& a() const { return a_; }
  const Vector& b() const { return b_; }

 private:
  Matrix a_;
  Vector b_;
};

class NormalLs : public LsSystem {
 public:
  NormalLs(const SensitivityBundle& bundle, const RnnModel& model,
           const std::vector<Vector>& x0, const SmoothRegularizer& reg,
           const AdmmCoupling& admm);
  Vector solve(double lambda) const override;
  double directional_derivative(const Vector& p) const override;
  const Matrix& h() const { return h_; }
  const Vector& c() const { return c_; }

 private:
  Matrix h_;  // A'A
  Vector c_;  // -A'b
};

/// Sequential rank-one updates over the data regressors; the regularizer,
/// coupling, and damping terms enter through the prior. Requires the L2
/// regularizer form with a strictly positive combined weight on every column.
class RlsLs : public LsSystem {
 public:
  RlsLs(const SensitivityBundle& bundle, const RnnModel& model,
        const std::vector<Vector>& x0, const SmoothRegularizer& reg,
        const AdmmCoupling& admm);
  Vector solve(double lambda) const override;
  double directional_derivative(const Vector& p) const override;

  struct Solution {
    Vector p;
    Matrix covariance;  // P after the final update
  };
  Solution solve_with_covariance(double lambda) const;

 private:
  const SensitivityBundle& bundle_;
  Vector prior_weight_;  // per-column quadratic weight, before damping
  Vector prior_value_;   // per-column weight * mean
};

std::unique_ptr<LsSystem> build_ls_system(const SensitivityBundle& bundle,
                                          const RnnModel& model,
                                          const std::vector<Vector>& x0,
                                          const SmoothRegularizer& reg,
                                          const AdmmCoupling& admm,
                                          LsBackend backend);

}  // namespace nails
