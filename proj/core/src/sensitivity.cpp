#include "nails/sensitivity.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <cmath>

#include "nails/errors.hpp"
#include "nails/parallel.hpp"

namespace nails {

ParamLayout ParamLayout::of(const RnnModel& model, Index n_traces) {
  ParamLayout layout;
  layout.n_traces = n_traces;
  layout.shared_x0 = model.encoder.has_value();
  layout.x0_cols_trace =
      layout.shared_x0 ? model.theta_x0.size() : model.n_x;
  layout.n_theta_x = model.theta_x.size();
  layout.n_theta_y = model.theta_y.size();
  return layout;
}

double AdmmCoupling::penalty(const Vector& theta_x,
                             const Vector& theta_y) const {
  if (!active()) return 0.0;
  if (nu_minus_w.size() != static_cast<Index>(split.size()))
    throw ShapeError("ADMM coupling: split/target length mismatch");
  double acc = 0.0;
  for (size_t s = 0; s < split.size(); ++s) {
    const Index idx = split[s];
    const double theta = idx < theta_x.size()
                             ? theta_x[idx]
                             : theta_y[idx - theta_x.size()];
    const double r = theta - nu_minus_w[static_cast<Index>(s)];
    acc += r * r;
  }
  return 0.5 * rho * acc;
}

SensitivityBundle propagate_sensitivities(const RnnModel& model,
                                          const std::vector<Vector>& x0,
                                          const Dataset& data,
                                          const std::vector<Trajectory>& traj,
                                          const OutputLoss& loss) {
  model.validate();
  data.validate();
  const size_t n_traces = data.traces.size();
  if (traj.size() != n_traces)
    throw ShapeError("one trajectory per trace expected");
  if (!model.encoder && x0.size() != n_traces)
    throw ShapeError("one x0 per trace expected");

  SensitivityBundle bundle;
  bundle.layout = ParamLayout::of(model, static_cast<Index>(n_traces));
  bundle.traces.resize(n_traces);

  const Index n_x = model.n_x;
  const Index n_theta_x = model.theta_x.size();

  for (size_t j = 0; j < n_traces; ++j) {
    const Trace& trace = data.traces[j];
    const Trajectory& t = traj[j];
    const Index steps = trace.length();
    if (t.states.rows() != steps || t.outputs.rows() != steps)
      throw ShapeError("trajectory/trace length mismatch");

    TraceSensitivity& ts = bundle.traces[j];
    ts.mx.resize(steps);
    ts.mtheta.resize(steps);
    ts.fy_dx.resize(steps);
    ts.fy_dtheta.resize(steps);
    ts.d1.resize(steps, model.n_y);
    ts.d2.resize(steps, model.n_y);

    // Per-step Jacobians of fx at the nominal trajectory; slot-parallel.
    std::vector<Matrix> fx_dx(steps), fx_dtheta(steps);
    Vector step_loss = Vector::Zero(steps);
    parallel_for(steps, [&](Index k) {
      const Vector xk = t.states.row(k);
      const Vector uk = trace.inputs.row(k);
      if (n_x > 0 && k + 1 < steps) {
        Vector xu(n_x + model.n_u);
        xu << xk, uk;
        NetworkEval ev = evaluate_with_jacobians(model.fx, model.theta_x, xu);
        if (!ev.d_input.allFinite() || !ev.d_params.allFinite())
          throw NumericError("non-finite state Jacobian at step " +
                             std::to_string(k));
        fx_dx[k] = ev.d_input.leftCols(n_x);
        fx_dtheta[k] = ev.d_params;
      }
      NetworkEval fy =
          evaluate_with_jacobians(model.fy, model.theta_y, model.fy_input(xk, uk));
      if (!fy.d_input.allFinite() || !fy.d_params.allFinite())
        throw NumericError("non-finite output Jacobian at step " +
                           std::to_string(k));
      ts.fy_dx[k] = fy.d_input.leftCols(n_x);
      ts.fy_dtheta[k] = std::move(fy.d_params);
      const LossEval le = loss.eval(trace.outputs.row(k), t.outputs.row(k));
      ts.d1.row(k) = le.d1;
      ts.d2.row(k) = le.d2;
      step_loss[k] = le.value;
    });
    ts.loss_value = step_loss.sum();
    bundle.total_loss += ts.loss_value;

    // Condensing recursion; inherently sequential.
    if (model.encoder) {
      if (!trace.v0)
        throw ConfigError("trace " + std::to_string(j) +
                          " carries no v0 for the encoder");
      ts.mx[0] = jacobian_params(*model.encoder, model.theta_x0, *trace.v0);
    } else {
      ts.mx[0] = Matrix::Identity(n_x, n_x);
    }
    ts.mtheta[0] = Matrix::Zero(n_x, n_theta_x);
    for (Index k = 0; k + 1 < steps; ++k) {
      if (n_x == 0) {
        ts.mx[k + 1] = ts.mx[0];
        ts.mtheta[k + 1] = ts.mtheta[0];
        continue;
      }
      ts.mx[k + 1].noalias() = fx_dx[k] * ts.mx[k];
      ts.mtheta[k + 1].noalias() = fx_dx[k] * ts.mtheta[k];
      ts.mtheta[k + 1] += fx_dtheta[k];
      if (!ts.mx[k + 1].allFinite() || !ts.mtheta[k + 1].allFinite())
        throw NumericError("non-finite condensing matrix at step " +
                           std::to_string(k + 1));
    }
  }
  return bundle;
}

namespace {

void check_curvature(const SensitivityBundle& bundle) {
  for (const auto& ts : bundle.traces)
    if (ts.d2.size() > 0 && ts.d2.minCoeff() <= 0.0)
      throw NumericError(
          "loss curvature must be strictly positive to assemble the "
          "least-squares rows");
}

/// Walks data rows in canonical (trace, step, output) order. fn receives the
/// trace index, the sqrt(d2) weight, the raw offset d1/sqrt(d2), and the
/// unweighted row segments over (x0 block | theta_x | theta_y).
template <typename Fn>
void for_each_data_row(const SensitivityBundle& bundle, Fn&& fn) {
  Matrix seg_x0, seg_tx;
  for (size_t j = 0; j < bundle.traces.size(); ++j) {
    const TraceSensitivity& ts = bundle.traces[j];
    const Index steps = ts.d1.rows();
    const Index ny = ts.d1.cols();
    for (Index k = 0; k < steps; ++k) {
      seg_x0.noalias() = ts.fy_dx[k] * ts.mx[k];
      seg_tx.noalias() = ts.fy_dx[k] * ts.mtheta[k];
      for (Index i = 0; i < ny; ++i) {
        const double w = std::sqrt(ts.d2(k, i));
        const double offset = ts.d1(k, i) / w;
        fn(static_cast<Index>(j), w, offset, seg_x0.row(i), seg_tx.row(i),
           ts.fy_dtheta[k].row(i));
      }
    }
  }
}

struct PenaltyRowBlock {
  Index col_start = 0;
  RegRows rows;
};

/// Regularizer rows in canonical order: x0 blocks (per trace, or the shared
/// theta_x0 block), theta_x, theta_y.
std::vector<PenaltyRowBlock> penalty_blocks(const ParamLayout& layout,
                                            const RnnModel& model,
                                            const std::vector<Vector>& x0,
                                            const SmoothRegularizer& reg) {
  std::vector<PenaltyRowBlock> blocks;
  if (layout.shared_x0) {
    blocks.push_back({0, reg.rows_x0(model.theta_x0)});
  } else {
    for (Index j = 0; j < layout.n_traces; ++j)
      blocks.push_back({layout.x0_col_start(j), reg.rows_x0(x0[j])});
  }
  blocks.push_back({layout.theta_x_start(), reg.rows_theta_x(model.theta_x)});
  blocks.push_back({layout.theta_y_start(), reg.rows_theta_y(model.theta_y)});
  return blocks;
}

struct AdmmRow {
  Index col = 0;
  double coeff = 0.0;   // sqrt(rho)
  double offset = 0.0;  // sqrt(rho) * (theta_s - free_s)
};

std::vector<AdmmRow> admm_rows(const ParamLayout& layout, const RnnModel& model,
                               const AdmmCoupling& admm) {
  std::vector<AdmmRow> rows;
  if (!admm.active()) return rows;
  if (admm.nu_minus_w.size() != static_cast<Index>(admm.split.size()))
    throw ShapeError("ADMM coupling: split/target length mismatch");
  const double root = std::sqrt(admm.rho);
  rows.reserve(admm.split.size());
  for (size_t s = 0; s < admm.split.size(); ++s) {
    const Index idx = admm.split[s];
    if (idx < 0 || idx >= layout.n_theta_x + layout.n_theta_y)
      throw ShapeError("ADMM split index out of range");
    const double theta = idx < layout.n_theta_x
                             ? model.theta_x[idx]
                             : model.theta_y[idx - layout.n_theta_x];
    rows.push_back({layout.theta_x_start() + idx, root,
                    root * (theta - admm.nu_minus_w[static_cast<Index>(s)])});
  }
  return rows;
}

double penalty_half_b_squared(const std::vector<PenaltyRowBlock>& blocks,
                              const std::vector<AdmmRow>& coupling) {
  double acc = 0.0;
  for (const auto& blk : blocks) acc += blk.rows.offset.squaredNorm();
  for (const auto& row : coupling) acc += row.offset * row.offset;
  return 0.5 * acc;
}

}  // namespace

Vector objective_gradient(const SensitivityBundle& bundle, const RnnModel& model,
                          const std::vector<Vector>& x0,
                          const SmoothRegularizer& reg,
                          const AdmmCoupling& admm) {
  const ParamLayout& layout = bundle.layout;
  Vector grad = Vector::Zero(layout.n_p());

  for (size_t j = 0; j < bundle.traces.size(); ++j) {
    const TraceSensitivity& ts = bundle.traces[j];
    const Index steps = ts.d1.rows();
    auto gx0 = grad.segment(layout.x0_col_start(static_cast<Index>(j)),
                            layout.x0_cols_trace);
    auto gtx = grad.segment(layout.theta_x_start(), layout.n_theta_x);
    auto gty = grad.segment(layout.theta_y_start(), layout.n_theta_y);
    Vector pull;
    for (Index k = 0; k < steps; ++k) {
      pull.noalias() = ts.fy_dx[k].transpose() * ts.d1.row(k).transpose();
      gx0.noalias() += ts.mx[k].transpose() * pull;
      gtx.noalias() += ts.mtheta[k].transpose() * pull;
      gty.noalias() += ts.fy_dtheta[k].transpose() * ts.d1.row(k).transpose();
    }
  }

  if (layout.shared_x0) {
    grad.segment(0, layout.x0_cols_trace) += reg.gradient_x0(model.theta_x0);
  } else {
    for (Index j = 0; j < layout.n_traces; ++j)
      grad.segment(layout.x0_col_start(j), layout.x0_cols_trace) +=
          reg.gradient_x0(x0[j]);
  }
  grad.segment(layout.theta_x_start(), layout.n_theta_x) +=
      reg.gradient_theta_x(model.theta_x);
  grad.segment(layout.theta_y_start(), layout.n_theta_y) +=
      reg.gradient_theta_y(model.theta_y);

  if (admm.active()) {
    for (size_t s = 0; s < admm.split.size(); ++s) {
      const Index idx = admm.split[s];
      const double theta = idx < layout.n_theta_x
                               ? model.theta_x[idx]
                               : model.theta_y[idx - layout.n_theta_x];
      grad[layout.theta_x_start() + idx] +=
          admm.rho * (theta - admm.nu_minus_w[static_cast<Index>(s)]);
    }
  }
  return grad;
}

LsBackend parse_backend(const std::string& name) {
  if (name == "stacked") return LsBackend::Stacked;
  if (name == "normal") return LsBackend::Normal;
  if (name == "rls") return LsBackend::Rls;
  throw ConfigError("unknown least-squares backend '" + name + "'");
}

std::string backend_name(LsBackend backend) {
  switch (backend) {
    case LsBackend::Stacked:
      return "stacked";
    case LsBackend::Normal:
      return "normal";
    case LsBackend::Rls:
      return "rls";
  }
  return "stacked";
}

StackedLs::StackedLs(const SensitivityBundle& bundle, const RnnModel& model,
                     const std::vector<Vector>& x0,
                     const SmoothRegularizer& reg, const AdmmCoupling& admm) {
  check_curvature(bundle);
  const ParamLayout& layout = bundle.layout;
  n_p_ = layout.n_p();
  grad_ = objective_gradient(bundle, model, x0, reg, admm);

  Index data_rows = 0;
  for (const auto& ts : bundle.traces) data_rows += ts.d1.size();
  const auto blocks = penalty_blocks(layout, model, x0, reg);
  const auto coupling = admm_rows(layout, model, admm);
  Index total = data_rows;
  for (const auto& blk : blocks) total += blk.rows.coeff.rows();
  total += static_cast<Index>(coupling.size());

  a_ = Matrix::Zero(total, n_p_);
  b_ = Vector::Zero(total);
  Index r = 0;
  for_each_data_row(bundle, [&](Index trace, double w, double offset,
                                const auto& seg_x0, const auto& seg_tx,
                                const auto& seg_ty) {
    a_.row(r).segment(layout.x0_col_start(trace), layout.x0_cols_trace) =
        w * seg_x0;
    a_.row(r).segment(layout.theta_x_start(), layout.n_theta_x) = w * seg_tx;
    a_.row(r).segment(layout.theta_y_start(), layout.n_theta_y) = w * seg_ty;
    b_[r] = -offset;
    ++r;
  });
  for (const auto& blk : blocks) {
    const Index rows = blk.rows.coeff.rows();
    if (rows == 0) continue;
    a_.block(r, blk.col_start, rows, blk.rows.coeff.cols()) = blk.rows.coeff;
    b_.segment(r, rows) = -blk.rows.offset;
    r += rows;
  }
  for (const auto& row : coupling) {
    a_(r, row.col) = row.coeff;
    b_[r] = -row.offset;
    ++r;
  }
  half_b_sq_ = 0.5 * b_.squaredNorm();
}

Vector StackedLs::solve(double lambda) const {
  if (lambda == 0.0) {
    Eigen::ColPivHouseholderQR<Matrix> qr(a_);
    if (qr.rank() < n_p_)
      throw NumericError("rank-deficient least-squares system (rank " +
                         std::to_string(qr.rank()) + " of " +
                         std::to_string(n_p_) + ")");
    return qr.solve(b_);
  }
  Matrix aug(a_.rows() + n_p_, n_p_);
  aug.topRows(a_.rows()) = a_;
  aug.bottomRows(n_p_) =
      std::sqrt(lambda) * Matrix::Identity(n_p_, n_p_);
  Vector rhs = Vector::Zero(aug.rows());
  rhs.head(a_.rows()) = b_;
  return aug.colPivHouseholderQr().solve(rhs);
}

double StackedLs::directional_derivative(const Vector& p) const {
  return -b_.dot(a_ * p);
}

NormalLs::NormalLs(const SensitivityBundle& bundle, const RnnModel& model,
                   const std::vector<Vector>& x0, const SmoothRegularizer& reg,
                   const AdmmCoupling& admm) {
  check_curvature(bundle);
  const ParamLayout& layout = bundle.layout;
  n_p_ = layout.n_p();
  grad_ = objective_gradient(bundle, model, x0, reg, admm);

  h_ = Matrix::Zero(n_p_, n_p_);
  c_ = Vector::Zero(n_p_);
  Vector row(n_p_);
  double offsets_sq = 0.0;
  for_each_data_row(bundle, [&](Index trace, double w, double offset,
                                const auto& seg_x0, const auto& seg_tx,
                                const auto& seg_ty) {
    row.setZero();
    row.segment(layout.x0_col_start(trace), layout.x0_cols_trace) = w * seg_x0;
    row.segment(layout.theta_x_start(), layout.n_theta_x) = w * seg_tx;
    row.segment(layout.theta_y_start(), layout.n_theta_y) = w * seg_ty;
    h_.selfadjointView<Eigen::Lower>().rankUpdate(row, 1.0);
    c_ += row * offset;  // c = -A'b with b = -offset
    offsets_sq += offset * offset;
  });
  const auto blocks = penalty_blocks(layout, model, x0, reg);
  for (const auto& blk : blocks) {
    for (Index i = 0; i < blk.rows.coeff.rows(); ++i) {
      row.setZero();
      row.segment(blk.col_start, blk.rows.coeff.cols()) = blk.rows.coeff.row(i);
      h_.selfadjointView<Eigen::Lower>().rankUpdate(row, 1.0);
      c_ += row * blk.rows.offset[i];
      offsets_sq += blk.rows.offset[i] * blk.rows.offset[i];
    }
  }
  for (const auto& cr : admm_rows(layout, model, admm)) {
    h_(cr.col, cr.col) += cr.coeff * cr.coeff;
    c_[cr.col] += cr.coeff * cr.offset;
    offsets_sq += cr.offset * cr.offset;
  }
  h_ = h_.selfadjointView<Eigen::Lower>();
  half_b_sq_ = 0.5 * offsets_sq;
}

Vector NormalLs::solve(double lambda) const {
  Matrix damped = h_;
  if (lambda != 0.0) damped.diagonal().array() += lambda;
  Eigen::LDLT<Matrix> ldlt(damped);
  Vector p = ldlt.solve(-c_);
  const double residual = (damped * p + c_).lpNorm<Eigen::Infinity>();
  const double scale = std::max(1.0, c_.lpNorm<Eigen::Infinity>());
  if (!p.allFinite() || residual > 1e-6 * scale)
    throw NumericError("normal equations are singular or badly conditioned");
  return p;
}

double NormalLs::directional_derivative(const Vector& p) const {
  return c_.dot(p);
}

RlsLs::RlsLs(const SensitivityBundle& bundle, const RnnModel& model,
             const std::vector<Vector>& x0, const SmoothRegularizer& reg,
             const AdmmCoupling& admm)
    : bundle_(bundle) {
  check_curvature(bundle);
  if (!reg.is_l2())
    throw ConfigError(
        "the RLS backend supports only the diagonal L2 regularizer");
  const ParamLayout& layout = bundle.layout;
  n_p_ = layout.n_p();
  grad_ = objective_gradient(bundle, model, x0, reg, admm);

  // Quadratic prior absorbing the regularizer and ADMM rows:
  // weight_c/2 * (p_c - mean_c)^2 with value_c = weight_c * mean_c.
  prior_weight_ = Vector::Zero(n_p_);
  prior_value_ = Vector::Zero(n_p_);
  if (layout.shared_x0) {
    prior_weight_.head(layout.x0_cols_trace).setConstant(reg.rho_x());
    prior_value_.head(layout.x0_cols_trace) = -reg.rho_x() * model.theta_x0;
  } else {
    for (Index j = 0; j < layout.n_traces; ++j) {
      prior_weight_.segment(layout.x0_col_start(j), layout.x0_cols_trace)
          .setConstant(reg.rho_x());
      prior_value_.segment(layout.x0_col_start(j), layout.x0_cols_trace) =
          -reg.rho_x() * x0[j];
    }
  }
  prior_weight_.segment(layout.theta_x_start(), layout.n_theta_x)
      .setConstant(reg.rho_theta());
  prior_value_.segment(layout.theta_x_start(), layout.n_theta_x) =
      -reg.rho_theta() * model.theta_x;
  prior_weight_.segment(layout.theta_y_start(), layout.n_theta_y)
      .setConstant(reg.rho_theta());
  prior_value_.segment(layout.theta_y_start(), layout.n_theta_y) =
      -reg.rho_theta() * model.theta_y;
  for (const auto& cr : admm_rows(layout, model, admm)) {
    prior_weight_[cr.col] += cr.coeff * cr.coeff;
    prior_value_[cr.col] -= cr.coeff * cr.offset;
  }

  double offsets_sq = 0.0;
  for_each_data_row(bundle, [&](Index, double, double offset, const auto&,
                                const auto&, const auto&) {
    offsets_sq += offset * offset;
  });
  half_b_sq_ =
      0.5 * offsets_sq +
      penalty_half_b_squared(penalty_blocks(layout, model, x0, reg),
                             admm_rows(layout, model, admm));
}

RlsLs::Solution RlsLs::solve_with_covariance(double lambda) const {
  const ParamLayout& layout = bundle_.layout;
  Vector weight = prior_weight_.array() + lambda;
  if (weight.size() > 0 && weight.minCoeff() <= 0.0)
    throw ConfigError(
        "RLS initialization needs a strictly positive L2 or damping weight on "
        "every column");
  Solution sol;
  sol.covariance = Matrix::Zero(n_p_, n_p_);
  sol.covariance.diagonal() = weight.cwiseInverse();
  sol.p = prior_value_.cwiseQuotient(weight);

  Vector phi(n_p_), pphi(n_p_), gain(n_p_);
  for_each_data_row(bundle_, [&](Index trace, double w, double offset,
                                 const auto& seg_x0, const auto& seg_tx,
                                 const auto& seg_ty) {
    phi.setZero();
    phi.segment(layout.x0_col_start(trace), layout.x0_cols_trace) = w * seg_x0;
    phi.segment(layout.theta_x_start(), layout.n_theta_x) = w * seg_tx;
    phi.segment(layout.theta_y_start(), layout.n_theta_y) = w * seg_ty;
    const double eta = -offset;
    pphi.noalias() = sol.covariance.selfadjointView<Eigen::Lower>() * phi;
    const double denom = 1.0 + phi.dot(pphi);
    if (!(denom > 0.0) || !std::isfinite(denom))
      throw NumericError("RLS update lost positive definiteness");
    sol.covariance.selfadjointView<Eigen::Lower>().rankUpdate(pphi,
                                                              -1.0 / denom);
    gain = pphi / denom;
    sol.p += gain * (eta - phi.dot(sol.p));
  });
  sol.covariance = sol.covariance.selfadjointView<Eigen::Lower>();
  return sol;
}

Vector RlsLs::solve(double lambda) const {
  return solve_with_covariance(lambda).p;
}

double RlsLs::directional_derivative(const Vector& p) const {
  return grad_.dot(p);
}

std::unique_ptr<LsSystem> build_ls_system(const SensitivityBundle& bundle,
                                          const RnnModel& model,
                                          const std::vector<Vector>& x0,
                                          const SmoothRegularizer& reg,
                                          const AdmmCoupling& admm,
                                          LsBackend backend) {
  switch (backend) {
    case LsBackend::Stacked:
      return std::make_unique<StackedLs>(bundle, model, x0, reg, admm);
    case LsBackend::Normal:
      return std::make_unique<NormalLs>(bundle, model, x0, reg, admm);
    case LsBackend::Rls:
      return std::make_unique<RlsLs>(bundle, model, x0, reg, admm);
  }
  throw ConfigError("unknown backend");
}

}  // namespace nails
