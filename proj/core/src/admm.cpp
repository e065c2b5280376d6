#include "nails/admm.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

#include "nails/errors.hpp"

namespace nails {

namespace {

double elapsed_s(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

}  // namespace

NonSmoothReg NonSmoothReg::none() { return {}; }

NonSmoothReg NonSmoothReg::l1(double tau_x, double tau_y) {
  NonSmoothReg g;
  g.kind = NonSmoothKind::L1;
  g.tau_x = tau_x;
  g.tau_y = tau_y;
  return g;
}

NonSmoothReg NonSmoothReg::l0(double tau_x, double tau_y) {
  NonSmoothReg g;
  g.kind = NonSmoothKind::L0;
  g.tau_x = tau_x;
  g.tau_y = tau_y;
  return g;
}

NonSmoothReg NonSmoothReg::group_lasso(double tau_g,
                                       std::vector<std::vector<Index>> groups) {
  NonSmoothReg g;
  g.kind = NonSmoothKind::GroupLasso;
  g.tau_g = tau_g;
  g.groups = std::move(groups);
  return g;
}

NonSmoothReg NonSmoothReg::quantize(std::vector<double> levels,
                                    std::vector<Index> indices) {
  NonSmoothReg g;
  g.kind = NonSmoothKind::Quantize;
  g.levels = std::move(levels);
  g.quant_indices = std::move(indices);
  return g;
}

void NonSmoothReg::validate(Index n_theta_x, Index n_theta_y) const {
  const Index n = n_theta_x + n_theta_y;
  switch (kind) {
    case NonSmoothKind::None:
      return;
    case NonSmoothKind::L1:
    case NonSmoothKind::L0:
      if (tau_x < 0.0 || tau_y < 0.0)
        throw ConfigError("sparsity penalties must be >= 0");
      return;
    case NonSmoothKind::GroupLasso: {
      if (tau_g < 0.0) throw ConfigError("group penalty must be >= 0");
      if (groups.empty()) throw ConfigError("group penalty needs groups");
      std::set<Index> seen;
      for (const auto& g : groups) {
        if (g.empty()) throw ConfigError("empty parameter group");
        for (Index idx : g) {
          if (idx < 0 || idx >= n)
            throw ConfigError("group index out of range");
          if (!seen.insert(idx).second)
            throw ConfigError("parameter groups must be disjoint");
        }
      }
      return;
    }
    case NonSmoothKind::Quantize: {
      if (levels.empty()) throw ConfigError("quantization needs levels");
      for (size_t i = 1; i < levels.size(); ++i)
        if (!(levels[i] > levels[i - 1]))
          throw ConfigError("levels must be strictly increasing");
      if (quant_indices.empty())
        throw ConfigError("quantization needs a nonempty index set");
      for (Index idx : quant_indices)
        if (idx < 0 || idx >= n)
          throw ConfigError("quantization index out of range");
      return;
    }
  }
}

std::vector<Index> NonSmoothReg::split_indices(Index n_theta_x,
                                               Index n_theta_y) const {
  std::vector<Index> split;
  switch (kind) {
    case NonSmoothKind::None:
      return split;
    case NonSmoothKind::L1:
    case NonSmoothKind::L0:
      split.resize(n_theta_x + n_theta_y);
      for (Index i = 0; i < static_cast<Index>(split.size()); ++i)
        split[i] = i;
      return split;
    case NonSmoothKind::GroupLasso:
      for (const auto& g : groups) split.insert(split.end(), g.begin(), g.end());
      break;
    case NonSmoothKind::Quantize:
      split = quant_indices;
      break;
  }
  std::sort(split.begin(), split.end());
  split.erase(std::unique(split.begin(), split.end()), split.end());
  return split;
}

Vector prox_l1(const Vector& v, double alpha) {
  if (alpha < 0.0) throw ConfigError("soft threshold needs alpha >= 0");
  Vector out(v.size());
  for (Index i = 0; i < v.size(); ++i) {
    if (v[i] >= alpha)
      out[i] = v[i] - alpha;
    else if (v[i] <= -alpha)
      out[i] = v[i] + alpha;
    else
      out[i] = 0.0;
  }
  return out;
}

Vector prox_group(const Vector& v, double alpha) {
  if (alpha < 0.0) throw ConfigError("block soft threshold needs alpha >= 0");
  const double norm = v.norm();
  if (norm > alpha) return (1.0 - alpha / norm) * v;
  return Vector::Zero(v.size());
}

Vector prox_l0(const Vector& v, double tau, double rho) {
  if (!(tau >= 0.0) || !(rho > 0.0))
    throw ConfigError("hard threshold needs tau >= 0 and rho > 0");
  const double threshold = 2.0 * tau / rho;
  Vector out(v.size());
  for (Index i = 0; i < v.size(); ++i)
    out[i] = (v[i] * v[i] < threshold) ? 0.0 : v[i];
  return out;
}

double nearest_level(double v, const std::vector<double>& levels) {
  auto it = std::lower_bound(levels.begin(), levels.end(), v);
  if (it == levels.begin()) return *it;
  if (it == levels.end()) return levels.back();
  const double hi = *it;
  const double lo = *(it - 1);
  // Exact ties round to the larger level.
  return (hi - v) <= (v - lo) ? hi : lo;
}

Vector prox_quantize(const Vector& v, const std::vector<double>& levels,
                     const std::vector<Index>& indices) {
  if (levels.empty()) throw ConfigError("quantization needs levels");
  Vector out = v;
  for (Index idx : indices) {
    if (idx < 0 || idx >= v.size())
      throw ShapeError("quantization index out of range");
    out[idx] = nearest_level(v[idx], levels);
  }
  return out;
}

std::vector<std::vector<Index>> build_state_groups(const RnnModel& model) {
  model.validate();
  if (model.n_x < 1)
    throw ConfigError("state groups need at least one hidden state");
  if (model.fx.num_layers() < 2)
    throw ConfigError(
        "state groups need at least one hidden layer in the state network");
  const Index n_x = model.n_x;
  const Index n_theta_x = model.theta_x.size();
  const Index fx_in = model.fx.input_dim;
  const Index n1x = model.fx.layer_dims[0];
  const Index fy_in = model.fy.input_dim;
  const Index n1y = model.fy.layer_dims[0];
  const Index last = model.fx.num_layers() - 1;
  const Index last_in = model.fx.layer_input_dim(last);
  const Index last_w = model.fx.weight_offset(last);
  const Index last_b = model.fx.bias_offset(last);

  std::vector<std::vector<Index>> groups(n_x);
  for (Index i = 0; i < n_x; ++i) {
    auto& g = groups[i];
    g.reserve(n1x + n1y + last_in + 1);
    for (Index r = 0; r < n1x; ++r)  // i-th column of the first fx weights
      g.push_back(model.fx.weight_offset(0) + r * fx_in + i);
    for (Index r = 0; r < n1y; ++r)  // i-th column of the first fy weights
      g.push_back(n_theta_x + model.fy.weight_offset(0) + r * fy_in + i);
    for (Index c = 0; c < last_in; ++c)  // i-th row of the last fx weights
      g.push_back(last_w + i * last_in + c);
    g.push_back(last_b + i);  // i-th entry of the last fx bias
  }
  return groups;
}

namespace {

Vector gather(const RnnModel& model, const std::vector<Index>& split) {
  const Index n_theta_x = model.theta_x.size();
  Vector out(static_cast<Index>(split.size()));
  for (size_t s = 0; s < split.size(); ++s) {
    const Index idx = split[s];
    out[static_cast<Index>(s)] = idx < n_theta_x
                                     ? model.theta_x[idx]
                                     : model.theta_y[idx - n_theta_x];
  }
  return out;
}

void scatter(RnnModel& model, const std::vector<Index>& split,
             const Vector& values) {
  const Index n_theta_x = model.theta_x.size();
  for (size_t s = 0; s < split.size(); ++s) {
    const Index idx = split[s];
    if (idx < n_theta_x)
      model.theta_x[idx] = values[static_cast<Index>(s)];
    else
      model.theta_y[idx - n_theta_x] = values[static_cast<Index>(s)];
  }
}

/// nu-update: prox of g/rho at the split vector v.
Vector apply_prox(const NonSmoothReg& g, const std::vector<Index>& split,
                  Index n_theta_x, const Vector& v, double rho) {
  switch (g.kind) {
    case NonSmoothKind::None:
      return v;
    case NonSmoothKind::L1: {
      Vector out(v.size());
      for (Index s = 0; s < v.size(); ++s) {
        const double a = (split[s] < n_theta_x ? g.tau_x : g.tau_y) / rho;
        const double x = v[s];
        out[s] = x >= a ? x - a : (x <= -a ? x + a : 0.0);
      }
      return out;
    }
    case NonSmoothKind::L0: {
      Vector out(v.size());
      for (Index s = 0; s < v.size(); ++s) {
        const double tau = split[s] < n_theta_x ? g.tau_x : g.tau_y;
        const double x = v[s];
        out[s] = (x * x < 2.0 * tau / rho) ? 0.0 : x;
      }
      return out;
    }
    case NonSmoothKind::GroupLasso: {
      Vector out = v;
      for (const auto& group : g.groups) {
        Vector block(static_cast<Index>(group.size()));
        std::vector<Index> pos(group.size());
        for (size_t i = 0; i < group.size(); ++i) {
          const auto it =
              std::lower_bound(split.begin(), split.end(), group[i]);
          pos[i] = static_cast<Index>(it - split.begin());
          block[static_cast<Index>(i)] = v[pos[i]];
        }
        const Vector shrunk = prox_group(block, g.tau_g / rho);
        for (size_t i = 0; i < group.size(); ++i)
          out[pos[i]] = shrunk[static_cast<Index>(i)];
      }
      return out;
    }
    case NonSmoothKind::Quantize: {
      Vector out(v.size());
      for (Index s = 0; s < v.size(); ++s)
        out[s] = nearest_level(v[s], g.levels);
      return out;
    }
  }
  return v;
}

double sparsity_pct(const RnnModel& model) {
  const Index n = model.theta_x.size() + model.theta_y.size();
  if (n == 0) return 0.0;
  Index zeros = 0;
  for (Index i = 0; i < model.theta_x.size(); ++i)
    if (model.theta_x[i] == 0.0) ++zeros;
  for (Index i = 0; i < model.theta_y.size(); ++i)
    if (model.theta_y[i] == 0.0) ++zeros;
  return 100.0 * static_cast<double>(zeros) / static_cast<double>(n);
}

int count_active_groups(const RnnModel& model, const NonSmoothReg& g) {
  if (g.kind != NonSmoothKind::GroupLasso) return -1;
  const Index n_theta_x = model.theta_x.size();
  int active = 0;
  for (const auto& group : g.groups) {
    bool nonzero = false;
    for (Index idx : group) {
      const double value = idx < n_theta_x ? model.theta_x[idx]
                                           : model.theta_y[idx - n_theta_x];
      if (value != 0.0) {
        nonzero = true;
        break;
      }
    }
    if (nonzero) ++active;
  }
  return active;
}

void run_inner(FitState& state, const TrainingProblem& problem,
               const AdmmConfig& config) {
  if (config.use_lm)
    run_algorithm2(state, problem, config.lm, config.inner_observer);
  else
    run_algorithm1(state, problem, config.line_search, config.inner_observer);
}

}  // namespace

NailsResult run_nails(FitState state, const TrainingProblem& problem,
                      const NonSmoothReg& nonsmooth, const AdmmConfig& config) {
  if (config.n_admm < 1) throw ConfigError("n_admm must be >= 1");
  NailsResult result;

  if (nonsmooth.kind == NonSmoothKind::None) {
    TrainingProblem smooth = problem;
    smooth.admm = AdmmCoupling{};
    for (int t = 0; t < config.n_admm; ++t) run_inner(state, smooth, config);
    result.best = state;
    result.state = std::move(state);
    return result;
  }

  if (!(config.rho > 0.0)) throw ConfigError("ADMM rho must be > 0");
  const Index n_theta_x = state.model.theta_x.size();
  const Index n_theta_y = state.model.theta_y.size();
  nonsmooth.validate(n_theta_x, n_theta_y);
  const std::vector<Index> split =
      nonsmooth.split_indices(n_theta_x, n_theta_y);

  AdmmState admm;
  admm.split = split;
  admm.rho = config.rho;
  admm.nu = gather(state.model, split);
  admm.w = Vector::Zero(admm.nu.size());

  TrainingProblem inner = problem;
  TrainingProblem plain = problem;
  plain.admm = AdmmCoupling{};

  double best_score = std::numeric_limits<double>::infinity();
  bool best_set = false;
  for (int t = 0; t < config.n_admm; ++t) {
    const auto t0 = std::chrono::steady_clock::now();
    inner.admm.rho = config.rho;
    inner.admm.split = split;
    inner.admm.nu_minus_w = admm.nu - admm.w;
    run_inner(state, inner, config);

    const Vector theta_split = gather(state.model, split);
    admm.nu = apply_prox(nonsmooth, split, n_theta_x, theta_split + admm.w,
                         config.rho);
    admm.w += theta_split - admm.nu;
    ++admm.iterations;

    // Projected iterate: split entries replaced by nu; exact zeros/levels.
    FitState projected = state;
    scatter(projected.model, split, admm.nu);
    invalidate_trajectory(projected);
    double projected_loss = std::numeric_limits<double>::infinity();
    bool feasible = true;
    try {
      evaluate_state(projected, plain);
      projected_loss = projected.train_loss;
    } catch (const DivergenceError&) {
      feasible = false;
    } catch (const DomainError&) {
      feasible = false;
    }

    AdmmIterRow row;
    row.t = t;
    row.train_loss = projected_loss;
    row.primal_residual = (theta_split - admm.nu).norm();
    row.sparsity_pct = sparsity_pct(projected.model);
    row.active_groups = count_active_groups(projected.model, nonsmooth);
    row.wall_s = elapsed_s(t0);
    result.admm_history.push_back(row);

    const double score =
        !feasible ? std::numeric_limits<double>::infinity()
                  : (config.validation_score ? config.validation_score(projected)
                                             : projected_loss);
    if (!best_set || score < best_score) {
      best_score = score;
      result.best = projected;
      best_set = true;
    }
    if (t + 1 == config.n_admm) result.state = std::move(projected);
  }
  result.admm = std::move(admm);
  return result;
}

}  // namespace nails
