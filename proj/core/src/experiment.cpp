#include "nails/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "nails/data.hpp"
#include "nails/errors.hpp"
#include "nails/initstate.hpp"

namespace nails {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v, const char* spec = "%.17g") {
  char buf[48];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

struct Standardization {
  bool on_u = false;
  bool on_y = false;
  Vector u_mean, u_std, y_mean, y_std;

  static void fit_columns(const std::vector<const Matrix*>& blocks,
                          Vector& mean, Vector& stddev) {
    const Index cols = blocks.front()->cols();
    Index rows = 0;
    mean = Vector::Zero(cols);
    for (const auto* m : blocks) {
      rows += m->rows();
      mean += m->colwise().sum().transpose();
    }
    mean /= static_cast<double>(rows);
    stddev = Vector::Zero(cols);
    for (const auto* m : blocks)
      for (Index c = 0; c < cols; ++c)
        stddev[c] += (m->col(c).array() - mean[c]).square().sum();
    stddev = (stddev / static_cast<double>(rows)).cwiseSqrt();
    for (Index c = 0; c < cols; ++c)
      if (stddev[c] == 0.0) stddev[c] = 1.0;
  }

  void fit(const std::vector<Trace>& traces, bool include_y) {
    std::vector<const Matrix*> inputs, outputs;
    for (const auto& t : traces) {
      inputs.push_back(&t.inputs);
      outputs.push_back(&t.outputs);
    }
    fit_columns(inputs, u_mean, u_std);
    fit_columns(outputs, y_mean, y_std);
    on_u = true;
    on_y = include_y;
  }

  void apply(Trace& trace) const {
    if (on_u)
      for (Index c = 0; c < trace.inputs.cols(); ++c)
        trace.inputs.col(c) =
            (trace.inputs.col(c).array() - u_mean[c]) / u_std[c];
    if (on_y)
      for (Index c = 0; c < trace.outputs.cols(); ++c)
        trace.outputs.col(c) =
            (trace.outputs.col(c).array() - y_mean[c]) / y_std[c];
  }

  Matrix restore_outputs(const Matrix& yhat) const {
    if (!on_y) return yhat;
    Matrix out = yhat;
    for (Index c = 0; c < out.cols(); ++c)
      out.col(c) = out.col(c).array() * y_std[c] + y_mean[c];
    return out;
  }
};

Standardization from_stored(const StoredModel& stored) {
  Standardization stz;
  stz.on_u = stored.standardized;
  stz.on_y = stored.y_standardized;
  stz.u_mean = stored.u_mean;
  stz.u_std = stored.u_std;
  stz.y_mean = stored.y_mean;
  stz.y_std = stored.y_std;
  return stz;
}

struct PreparedData {
  Dataset train;                      // transformed, windowed
  std::vector<Trace> train_original;  // same trimming, original units
  std::optional<Trace> test;          // transformed, not windowed
  std::optional<Trace> test_original;
  Standardization stz;
};

PreparedData prepare_data(const ExperimentConfig& cfg) {
  PreparedData prepared;
  std::vector<Trace> raw;
  std::optional<Trace> raw_test;
  if (!cfg.synthetic.empty()) {
    SyntheticBinarySystem system;
    system.noise_std = cfg.sigma_n;
    system.seed = cfg.data_seed;
    auto [train, test] = split_half(generate_binary_benchmark(system, cfg.n_total));
    raw.push_back(std::move(train));
    raw_test = std::move(test);
  } else {
    for (const auto& path : cfg.train_paths)
      raw.push_back(load_csv(path, cfg.n_u, cfg.n_y, cfg.has_header));
    if (!cfg.test_path.empty())
      raw_test = load_csv(cfg.test_path, cfg.n_u, cfg.n_y, cfg.has_header);
  }

  if (cfg.standardize) {
    prepared.stz.fit(raw, cfg.loss_kind == LossKind::QuadraticMse);
    for (auto& t : raw) prepared.stz.apply(t);
    if (raw_test) prepared.stz.apply(*raw_test);
  }

  for (auto& t : raw) {
    if (cfg.use_encoder()) {
      EncoderWindow win = build_v0(t, cfg.n_a, cfg.n_b);
      prepared.train.traces.push_back(std::move(win.trimmed));
    } else {
      prepared.train.traces.push_back(std::move(t));
    }
  }
  prepared.train.validate();

  // Original-unit copies with identical trimming, for metric reporting.
  prepared.train_original.reserve(prepared.train.traces.size());
  for (const auto& t : prepared.train.traces) {
    Trace orig;
    orig.inputs = t.inputs;
    orig.outputs = prepared.stz.restore_outputs(t.outputs);
    prepared.train_original.push_back(std::move(orig));
  }
  if (raw_test) {
    prepared.test = raw_test;
    Trace orig;
    orig.inputs = raw_test->inputs;
    orig.outputs = prepared.stz.restore_outputs(raw_test->outputs);
    prepared.test_original = std::move(orig);
  }
  return prepared;
}

RnnModel build_model(const ExperimentConfig& cfg, Index n_u, Index n_y) {
  RnnModel model =
      make_rnn(cfg.n_x, n_u, n_y, cfg.fx_hidden, cfg.fy_hidden, cfg.hidden_act,
               cfg.output_act, cfg.feedthrough);
  if (cfg.use_encoder()) {
    const Index n_v = cfg.n_a * n_y + cfg.n_b * n_u;
    attach_encoder(model, n_v, cfg.encoder_hidden, cfg.hidden_act);
  }
  return model;
}

OutputLoss build_loss(const ExperimentConfig& cfg, Index total_samples) {
  if (cfg.loss_kind == LossKind::ModifiedCrossEntropy)
    return OutputLoss::cross_entropy(cfg.xent_eps);
  const double scale = cfg.loss_scale > 0.0
                           ? cfg.loss_scale
                           : 1.0 / static_cast<double>(total_samples);
  return OutputLoss::quadratic(scale);
}

NonSmoothReg build_nonsmooth(const ExperimentConfig& cfg,
                             const RnnModel& model) {
  switch (cfg.nonsmooth_kind) {
    case NonSmoothKind::None:
      return NonSmoothReg::none();
    case NonSmoothKind::L1:
      return NonSmoothReg::l1(cfg.tau_x, cfg.tau_y);
    case NonSmoothKind::L0:
      return NonSmoothReg::l0(cfg.tau_x, cfg.tau_y);
    case NonSmoothKind::GroupLasso:
      return NonSmoothReg::group_lasso(cfg.tau_g, build_state_groups(model));
    case NonSmoothKind::Quantize: {
      std::vector<Index> indices(model.theta_x.size() + model.theta_y.size());
      for (size_t i = 0; i < indices.size(); ++i)
        indices[i] = static_cast<Index>(i);
      return NonSmoothReg::quantize(cfg.levels, indices);
    }
  }
  return NonSmoothReg::none();
}

struct SplitMetrics {
  double bfr_v = 0.0, rmse_v = 0.0, accuracy_v = 0.0, loss_v = 0.0;
};

/// Open-loop simulation metrics in original units over one or more traces.
SplitMetrics evaluate_split(const RnnModel& model,
                            const std::vector<Vector>& x0,
                            const std::vector<const Trace*>& transformed,
                            const std::vector<const Trace*>& original,
                            const Standardization& stz,
                            const OutputLoss& loss) {
  Index rows = 0;
  for (const auto* t : original) rows += t->length();
  const Index n_y = original.front()->outputs.cols();
  Matrix y(rows, n_y), yhat(rows, n_y);
  double loss_total = 0.0;
  Index at = 0;
  for (size_t j = 0; j < transformed.size(); ++j) {
    const Trajectory traj = simulate(model, x0[j], transformed[j]->inputs);
    for (Index k = 0; k < traj.outputs.rows(); ++k)
      loss_total += loss.value(transformed[j]->outputs.row(k),
                               traj.outputs.row(k));
    y.middleRows(at, traj.outputs.rows()) = original[j]->outputs;
    yhat.middleRows(at, traj.outputs.rows()) = stz.restore_outputs(traj.outputs);
    at += traj.outputs.rows();
  }
  SplitMetrics m;
  m.loss_v = loss_total;
  try {
    m.bfr_v = bfr(y, yhat);
  } catch (const DataError&) {
    m.bfr_v = std::numeric_limits<double>::quiet_NaN();
  }
  m.rmse_v = rmse(y, yhat);
  try {
    m.accuracy_v = accuracy(y, yhat);
  } catch (const DataError&) {
    m.accuracy_v = std::numeric_limits<double>::quiet_NaN();
  }
  return m;
}

}  // namespace

RunArtifacts run_experiment(const ExperimentConfig& cfg) {
  PreparedData data = prepare_data(cfg);
  const Index n_u = data.train.n_u();
  const Index n_y = data.train.n_y();

  RnnModel model = build_model(cfg, n_u, n_y);
  init_weights(model, cfg.sigma0, cfg.seed);

  TrainingProblem problem;
  problem.data = &data.train;
  problem.loss = build_loss(cfg, data.train.total_samples());
  problem.reg = SmoothRegularizer::l2(cfg.rho_x, cfg.rho_theta);

  FitState state = make_initial_state(std::move(model), data.train);

  RunArtifacts artifacts;
  FitState result;
  if (cfg.solver == SolverChoice::Amsgrad) {
    AmsgradConfig acfg;
    acfg.lr = cfg.lr;
    acfg.beta1 = cfg.beta1;
    acfg.beta2 = cfg.beta2;
    acfg.max_epochs = cfg.resolved_epochs();
    run_amsgrad(state, problem, acfg);
    result = std::move(state);
  } else {
    AdmmConfig admm_cfg;
    admm_cfg.rho = cfg.resolved_admm_rho();
    admm_cfg.n_admm = cfg.n_admm;
    admm_cfg.use_lm = cfg.solver == SolverChoice::Nailm;
    admm_cfg.line_search.c1 = cfg.c1;
    admm_cfg.line_search.sigma = cfg.ls_sigma;
    admm_cfg.line_search.n_sigma = cfg.n_sigma;
    admm_cfg.line_search.eps_v = cfg.eps_v;
    admm_cfg.line_search.max_epochs = cfg.resolved_epochs();
    admm_cfg.line_search.backend = cfg.backend;
    admm_cfg.lm.lambda0 = cfg.lambda0;
    admm_cfg.lm.c2 = cfg.c2;
    admm_cfg.lm.c3 = cfg.c3;
    admm_cfg.lm.n_lambda = cfg.n_lambda;
    admm_cfg.lm.eps_v = cfg.eps_v;
    admm_cfg.lm.max_epochs = cfg.resolved_epochs();
    admm_cfg.lm.backend = cfg.backend;
    const NonSmoothReg nonsmooth = build_nonsmooth(cfg, state.model);
    NailsResult nails = run_nails(std::move(state), problem, nonsmooth, admm_cfg);
    artifacts.admm_history = std::move(nails.admm_history);
    // The trained model is the final (nu-projected) iterate.
    result = std::move(nails.state);
  }

  artifacts.history = result.history;
  artifacts.stored.model = result.model;
  artifacts.stored.x0 = result.x0;
  artifacts.stored.standardized = data.stz.on_u;
  artifacts.stored.u_mean = data.stz.u_mean;
  artifacts.stored.u_std = data.stz.u_std;
  artifacts.stored.y_standardized = data.stz.on_y;
  artifacts.stored.y_mean = data.stz.y_mean;
  artifacts.stored.y_std = data.stz.y_std;
  artifacts.stored.loss =
      cfg.loss_kind == LossKind::ModifiedCrossEntropy ? "xent" : "mse";
  artifacts.stored.loss_scale = problem.loss.is_quadratic()
                                    ? problem.loss.scale()
                                    : 0.0;
  artifacts.stored.loss_eps = cfg.xent_eps;
  artifacts.stored.rho_x = cfg.rho_x;
  artifacts.stored.n_a = cfg.n_a;
  artifacts.stored.n_b = cfg.n_b;

  auto& metrics = artifacts.metrics;
  metrics["v_final"] = result.v;
  metrics["train_loss"] = result.train_loss;
  metrics["epochs"] = static_cast<double>(result.epochs_run);
  metrics["sparsity"] =
      sparsity(result.model.theta_x, result.model.theta_y);

  {
    std::vector<const Trace*> transformed, original;
    for (size_t j = 0; j < data.train.traces.size(); ++j) {
      transformed.push_back(&data.train.traces[j]);
      original.push_back(&data.train_original[j]);
    }
    const SplitMetrics m = evaluate_split(result.model, result.x0, transformed,
                                          original, data.stz, problem.loss);
    metrics["bfr_train"] = m.bfr_v;
    metrics["rmse_train"] = m.rmse_v;
    metrics["accuracy_train"] = m.accuracy_v;
  }

  if (data.test) {
    Vector x0_test;
    Trace test_transformed = *data.test;
    Trace test_original = *data.test_original;
    if (result.model.encoder) {
      EncoderWindow win = build_v0(test_transformed, cfg.n_a, cfg.n_b);
      x0_test = encode_x0(result.model, win.v0);
      test_transformed = std::move(win.trimmed);
      test_original.inputs =
          test_original.inputs.bottomRows(test_transformed.length());
      test_original.outputs =
          test_original.outputs.bottomRows(test_transformed.length());
    } else if (result.model.has_state()) {
      PsoConfig pso = cfg.pso;
      pso.horizon = std::min<Index>(pso.horizon, test_transformed.length());
      x0_test = estimate_x0(result.model, test_transformed, problem.loss,
                            cfg.rho_x, pso);
    } else {
      x0_test = Vector(0);
    }
    const SplitMetrics m = evaluate_split(
        result.model, {x0_test}, {&test_transformed}, {&test_original},
        data.stz, problem.loss);
    metrics["bfr_test"] = m.bfr_v;
    metrics["rmse_test"] = m.rmse_v;
    metrics["accuracy_test"] = m.accuracy_v;
  }
  return artifacts;
}

namespace {

void write_history_csv(const std::string& path, const RunArtifacts& artifacts,
                       bool timing) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << "schema,phase,iter,v,step,inner_solves,primal_residual,sparsity_pct,"
         "active_groups,wall_s\n";
  for (const auto& row : artifacts.history) {
    out << "1,epoch," << row.epoch << "," << fmt(row.v) << ","
        << fmt(row.step_param) << "," << row.inner_solves << ",,,,"
        << fmt(timing ? row.wall_s : 0.0) << "\n";
  }
  for (const auto& row : artifacts.admm_history) {
    out << "1,admm," << row.t << "," << fmt(row.train_loss) << ",,,"
        << fmt(row.primal_residual) << "," << fmt(row.sparsity_pct, "%.6f")
        << "," << row.active_groups << ","
        << fmt(timing ? row.wall_s : 0.0) << "\n";
  }
  if (!out) throw DataError("write to '" + path + "' failed");
}

void write_metric_rows(std::ostream& out,
                       const std::map<std::string, double>& metrics) {
  out << "metric,split,value\n";
  auto emit = [&](const std::string& key, const std::string& name,
                  const std::string& split, const char* spec) {
    const auto it = metrics.find(key);
    if (it == metrics.end()) return;
    out << name << "," << split << "," << fmt(it->second, spec) << "\n";
  };
  emit("v_final", "v_final", "train", "%.17g");
  emit("train_loss", "loss", "train", "%.17g");
  emit("epochs", "epochs", "train", "%.0f");
  emit("bfr_train", "bfr", "train", "%.15g");
  emit("rmse_train", "rmse", "train", "%.15g");
  emit("accuracy_train", "accuracy", "train", "%.2f");
  emit("sparsity", "sparsity", "model", "%.6f");
  emit("bfr_test", "bfr", "test", "%.15g");
  emit("rmse_test", "rmse", "test", "%.15g");
  emit("accuracy_test", "accuracy", "test", "%.2f");
  emit("loss_eval", "loss", "eval", "%.17g");
  emit("bfr_eval", "bfr", "eval", "%.15g");
  emit("rmse_eval", "rmse", "eval", "%.15g");
  emit("accuracy_eval", "accuracy", "eval", "%.2f");
}

}  // namespace

void write_artifacts(const std::string& out_dir, const RunArtifacts& artifacts,
                     bool timing) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create output directory '" + out_dir + "'");
  save_model(out_dir + "/model.txt", artifacts.stored);
  write_history_csv(out_dir + "/history.csv", artifacts, timing);
  std::ofstream metrics(out_dir + "/metrics.csv");
  if (!metrics) throw DataError("cannot write metrics.csv in '" + out_dir + "'");
  write_metric_rows(metrics, artifacts.metrics);
}

namespace {

struct SweepSpec {
  std::string section;
  std::string key;
  std::vector<double> values;
};

SweepSpec parse_sweep(const std::string& text) {
  const size_t eq = text.find('=');
  if (eq == std::string::npos)
    throw ConfigError("sweep must be KEY=START:STOP:{lin|log}:COUNT");
  std::string key = text.substr(0, eq);
  const std::string rest = text.substr(eq + 1);
  std::vector<std::string> parts;
  size_t pos = 0;
  while (true) {
    const size_t colon = rest.find(':', pos);
    parts.push_back(rest.substr(
        pos, colon == std::string::npos ? std::string::npos : colon - pos));
    if (colon == std::string::npos) break;
    pos = colon + 1;
  }
  if (parts.size() != 4)
    throw ConfigError("sweep must be KEY=START:STOP:{lin|log}:COUNT");

  SweepSpec spec;
  const size_t dot = key.find('.');
  if (dot != std::string::npos) {
    spec.section = key.substr(0, dot);
    spec.key = key.substr(dot + 1);
  } else {
    static const std::map<std::string, std::pair<std::string, std::string>>
        aliases = {
            {"tau", {"nonsmooth", "tau"}},
            {"tau_g", {"nonsmooth", "tau_g"}},
            {"rho", {"nonsmooth", "rho"}},
            {"rho_x", {"reg", "rho_x"}},
            {"rho_theta", {"reg", "rho_theta"}},
            {"lr", {"solver", "lr"}},
            {"sigma0", {"init", "sigma0"}},
            {"lambda0", {"solver", "lambda0"}},
            {"eps_v", {"solver", "eps_v"}},
        };
    const auto it = aliases.find(key);
    if (it == aliases.end())
      throw ConfigError("unknown sweep key '" + key +
                        "'; use section.key or a known alias");
    spec.section = it->second.first;
    spec.key = it->second.second;
  }

  double start = 0.0, stop = 0.0;
  int count = 0;
  try {
    start = std::stod(parts[0]);
    stop = std::stod(parts[1]);
    count = std::stoi(parts[3]);
  } catch (const std::exception&) {
    throw ConfigError("sweep bounds or count malformed in '" + text + "'");
  }
  if (count < 1) throw ConfigError("sweep COUNT must be >= 1");
  const std::string mode = parts[2];
  if (mode != "lin" && mode != "log")
    throw ConfigError("sweep mode must be lin or log");
  if (mode == "log" && (start <= 0.0 || stop <= 0.0))
    throw ConfigError("log sweep needs positive bounds");
  for (int i = 0; i < count; ++i) {
    const double f =
        count == 1 ? 0.0
                   : static_cast<double>(i) / static_cast<double>(count - 1);
    spec.values.push_back(mode == "lin"
                              ? start + f * (stop - start)
                              : std::exp(std::log(start) +
                                         f * (std::log(stop) - std::log(start))));
  }
  return spec;
}

void apply_overrides(IniFile& ini, const TrainOptions& options) {
  if (options.seed) ini.set("init", "seed", std::to_string(*options.seed));
  if (options.solver) ini.set("solver", "kind", *options.solver);
  if (options.standardize) ini.set("data", "standardize", "1");
}

}  // namespace

int cmd_train(const TrainOptions& options) {
  IniFile ini = IniFile::parse_file(options.config_path);
  apply_overrides(ini, options);

  if (!options.sweep) {
    const ExperimentConfig cfg = parse_experiment_config(ini);
    const RunArtifacts artifacts = run_experiment(cfg);
    write_artifacts(options.out_dir, artifacts, options.timing);
    return 0;
  }

  const SweepSpec spec = parse_sweep(*options.sweep);
  std::error_code ec;
  fs::create_directories(options.out_dir, ec);
  if (ec)
    throw DataError("cannot create output directory '" + options.out_dir + "'");
  std::ofstream summary(options.out_dir + "/sweep.csv");
  if (!summary)
    throw DataError("cannot write sweep.csv in '" + options.out_dir + "'");
  summary << "index," << spec.section << "." << spec.key
          << ",v_final,train_loss,bfr_train,accuracy_train,sparsity\n";
  for (size_t i = 0; i < spec.values.size(); ++i) {
    IniFile run_ini = ini;
    run_ini.set(spec.section, spec.key, fmt(spec.values[i]));
    const ExperimentConfig cfg = parse_experiment_config(run_ini);
    const RunArtifacts artifacts = run_experiment(cfg);
    char sub[32];
    std::snprintf(sub, sizeof(sub), "/sweep_%03zu", i);
    write_artifacts(options.out_dir + sub, artifacts, options.timing);
    const auto& m = artifacts.metrics;
    auto get = [&](const char* k) {
      const auto it = m.find(k);
      return it == m.end() ? std::numeric_limits<double>::quiet_NaN()
                           : it->second;
    };
    summary << i << "," << fmt(spec.values[i]) << "," << fmt(get("v_final"))
            << "," << fmt(get("train_loss")) << "," << fmt(get("bfr_train"))
            << "," << fmt(get("accuracy_train"), "%.2f") << ","
            << fmt(get("sparsity"), "%.6f") << "\n";
  }
  return 0;
}

int cmd_eval(const EvalOptions& options) {
  const StoredModel stored = load_model(options.model_path);
  const RnnModel& model = stored.model;
  Trace raw = load_csv(options.data_path, model.n_u, model.n_y,
                       options.has_header);
  const Standardization stz = from_stored(stored);
  Trace transformed = raw;
  stz.apply(transformed);
  Trace original = raw;

  const OutputLoss loss =
      stored.loss == "xent"
          ? OutputLoss::cross_entropy(stored.loss_eps)
          : OutputLoss::quadratic(stored.loss_scale > 0.0
                                      ? stored.loss_scale
                                      : 1.0 / static_cast<double>(raw.length()));

  Vector x0;
  std::string mode = options.x0_mode;
  if (mode == "auto") mode = model.encoder ? "encoder" : "pso";
  if (model.encoder || mode == "encoder") {
    if (!model.encoder)
      throw ConfigError("model has no encoder for x0 mode 'encoder'");
    EncoderWindow win = build_v0(transformed, stored.n_a, stored.n_b);
    x0 = encode_x0(model, win.v0);
    transformed = std::move(win.trimmed);
    original.inputs = original.inputs.bottomRows(transformed.length());
    original.outputs = original.outputs.bottomRows(transformed.length());
  } else if (mode == "pso") {
    PsoConfig pso;
    pso.seed = options.pso_seed;
    pso.horizon = std::min<Index>(pso.horizon, transformed.length());
    x0 = estimate_x0(model, transformed, loss, stored.rho_x, pso);
  } else if (mode == "zero") {
    x0 = Vector::Zero(model.n_x);
  } else if (mode.rfind("stored", 0) == 0) {
    size_t index = 0;
    const size_t colon = mode.find(':');
    if (colon != std::string::npos) {
      try {
        index = std::stoul(mode.substr(colon + 1));
      } catch (const std::exception&) {
        throw ConfigError("bad x0 mode '" + options.x0_mode + "'");
      }
    }
    if (index >= stored.x0.size())
      throw DataError("model stores " + std::to_string(stored.x0.size()) +
                      " initial states, none at index " + std::to_string(index));
    x0 = stored.x0[index];
  } else {
    throw ConfigError("unknown x0 mode '" + options.x0_mode + "'");
  }

  const SplitMetrics m = evaluate_split(model, {x0}, {&transformed},
                                        {&original}, stz, loss);
  std::map<std::string, double> metrics;
  metrics["bfr_eval"] = m.bfr_v;
  metrics["rmse_eval"] = m.rmse_v;
  metrics["accuracy_eval"] = m.accuracy_v;
  metrics["loss_eval"] = m.loss_v;
  write_metric_rows(std::cout, metrics);
  if (!options.out_path.empty()) {
    std::ofstream out(options.out_path);
    if (!out) throw DataError("cannot write '" + options.out_path + "'");
    write_metric_rows(out, metrics);
  }
  return 0;
}

namespace {

double max_rel_error(const Matrix& analytic, const Matrix& reference) {
  double worst = 0.0;
  for (Index r = 0; r < analytic.rows(); ++r)
    for (Index c = 0; c < analytic.cols(); ++c) {
      const double denom =
          std::max(std::abs(analytic(r, c)), std::abs(reference(r, c)));
      if (denom <= 1e-8) continue;
      worst = std::max(worst, std::abs(analytic(r, c) - reference(r, c)) / denom);
    }
  return worst;
}

Matrix fd_jacobian(const std::function<Vector(const Vector&)>& f,
                   const Vector& at, double h) {
  const Vector base = f(at);
  Matrix jac(base.size(), at.size());
  for (Index c = 0; c < at.size(); ++c) {
    Vector hi = at, lo = at;
    hi[c] += h;
    lo[c] -= h;
    jac.col(c) = (f(hi) - f(lo)) / (2.0 * h);
  }
  return jac;
}

}  // namespace

int cmd_gradcheck(const GradcheckOptions& options) {
  ExperimentConfig cfg;
  cfg.n_x = 3;
  cfg.fx_hidden = {4};
  cfg.fy_hidden = {4};
  cfg.n_u = 2;
  cfg.n_y = 2;
  cfg.rho_x = 0.5;
  cfg.rho_theta = 0.1;
  cfg.synthetic = "";
  if (options.config_path) {
    const IniFile ini = IniFile::parse_file(*options.config_path);
    ExperimentConfig parsed = parse_experiment_config(ini);
    parsed.loss_kind = LossKind::QuadraticMse;  // the checks use a smooth loss
    cfg = parsed;
    if (!cfg.synthetic.empty()) {
      cfg.n_u = 1;
      cfg.n_y = 1;
    }
  }

  Rng rng(options.seed);
  const Index steps = 20;
  RnnModel model = build_model(cfg, cfg.n_u, cfg.n_y);
  init_weights(model, 0.5, options.seed + 1);

  Dataset data;
  Trace trace;
  trace.inputs.resize(steps, cfg.n_u);
  trace.outputs.resize(steps, cfg.n_y);
  for (Index r = 0; r < steps; ++r) {
    for (Index c = 0; c < cfg.n_u; ++c) trace.inputs(r, c) = rng.normal();
    for (Index c = 0; c < cfg.n_y; ++c) trace.outputs(r, c) = rng.normal();
  }
  if (cfg.use_encoder()) {
    EncoderWindow win = build_v0(trace, cfg.n_a, cfg.n_b);
    trace = std::move(win.trimmed);
  }
  data.traces.push_back(std::move(trace));

  const double h = 1e-5;
  const double tol = 1e-4;
  struct Row {
    std::string name;
    double err;
  };
  std::vector<Row> rows;

  Vector probe(model.fy_input_dim());
  for (Index i = 0; i < probe.size(); ++i) probe[i] = rng.normal();
  if (model.has_state()) {
    Vector xu(model.n_x + model.n_u);
    for (Index i = 0; i < xu.size(); ++i) xu[i] = rng.normal();
    Matrix fx_di = jacobian_input(model.fx, model.theta_x, xu);
    if (options.corrupt) fx_di(0, 0) += 0.1;
    rows.push_back({"fx_jacobian_input",
                    max_rel_error(fx_di, fd_jacobian(
                                             [&](const Vector& v) {
                                               return forward(model.fx,
                                                              model.theta_x, v);
                                             },
                                             xu, h))});
    rows.push_back(
        {"fx_jacobian_params",
         max_rel_error(jacobian_params(model.fx, model.theta_x, xu),
                       fd_jacobian(
                           [&](const Vector& th) {
                             return forward(model.fx, th, xu);
                           },
                           model.theta_x, h))});
  }
  rows.push_back({"fy_jacobian_input",
                  max_rel_error(jacobian_input(model.fy, model.theta_y, probe),
                                fd_jacobian(
                                    [&](const Vector& v) {
                                      return forward(model.fy, model.theta_y, v);
                                    },
                                    probe, h))});
  rows.push_back(
      {"fy_jacobian_params",
       max_rel_error(jacobian_params(model.fy, model.theta_y, probe),
                     fd_jacobian(
                         [&](const Vector& th) {
                           return forward(model.fy, th, probe);
                         },
                         model.theta_y, h))});

  // Full objective gradient against finite differences of the objective.
  TrainingProblem problem;
  problem.data = &data;
  problem.loss = OutputLoss::quadratic(1.0 / static_cast<double>(steps));
  problem.reg = SmoothRegularizer::l2(cfg.rho_x, cfg.rho_theta);
  FitState state = make_initial_state(model, data);
  evaluate_state(state, problem);
  const ParamLayout layout = ParamLayout::of(state.model, 1);
  const SensitivityBundle bundle = propagate_sensitivities(
      state.model, state.x0, data, state.traj, problem.loss);
  Vector grad = objective_gradient(bundle, state.model, state.x0, problem.reg);
  if (options.corrupt) grad[0] += 0.1;
  Vector fd_grad(layout.n_p());
  for (Index i = 0; i < layout.n_p(); ++i) {
    Vector e = Vector::Zero(layout.n_p());
    e[i] = 1.0;
    FitState hi = state, lo = state;
    apply_step(hi, layout, e, h);
    apply_step(lo, layout, e, -h);
    evaluate_state(hi, problem);
    evaluate_state(lo, problem);
    fd_grad[i] = (hi.v - lo.v) / (2.0 * h);
  }
  rows.push_back({"objective_gradient", max_rel_error(grad, fd_grad)});

  bool all_ok = true;
  std::printf("check,max_rel_err,tol,status\n");
  for (const auto& row : rows) {
    const bool ok = row.err < tol;
    all_ok = all_ok && ok;
    std::printf("%s,%.3g,%.1g,%s\n", row.name.c_str(), row.err, tol,
                ok ? "pass" : "FAIL");
  }
  return all_ok ? 0 : 1;
}

int cmd_generate(const GenerateOptions& options) {
  GenerateOptions opts = options;
  if (options.config_path) {
    const IniFile ini = IniFile::parse_file(*options.config_path);
    opts.kind = ini.get("generate", "kind", opts.kind);
    opts.sigma_n = ini.get_double("generate", "sigma", opts.sigma_n);
    opts.n_total = ini.get_int("generate", "n", static_cast<int>(opts.n_total));
    opts.seed = ini.get_u64("generate", "seed", opts.seed);
  }
  if (opts.kind != "binary")
    throw ConfigError("unknown generator kind '" + opts.kind + "'");
  if (opts.sigma_n < 0.0) throw ConfigError("sigma must be >= 0");
  if (opts.n_total < 2) throw ConfigError("n must be >= 2");

  SyntheticBinarySystem system;
  system.noise_std = opts.sigma_n;
  system.seed = opts.seed;
  const Trace full = generate_binary_benchmark(system, opts.n_total);
  auto [train, test] = split_half(full);

  std::error_code ec;
  fs::create_directories(opts.out_dir, ec);
  if (ec)
    throw DataError("cannot create output directory '" + opts.out_dir + "'");
  save_csv(opts.out_dir + "/train.csv", train, true);
  save_csv(opts.out_dir + "/test.csv", test, true);
  std::ofstream sidecar(opts.out_dir + "/generate.ini");
  if (!sidecar)
    throw DataError("cannot write sidecar in '" + opts.out_dir + "'");
  sidecar << "[generate]\n"
          << "kind=" << opts.kind << "\n"
          << "sigma=" << fmt(opts.sigma_n) << "\n"
          << "n=" << opts.n_total << "\n"
          << "seed=" << opts.seed << "\n";
  return 0;
}

}  // namespace nails
