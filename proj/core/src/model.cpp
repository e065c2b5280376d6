#include "nails/model.hpp"

#include "nails/errors.hpp"

namespace nails {

Index Dataset::total_samples() const {
  Index n = 0;
  for (const auto& t : traces) n += t.length();
  return n;
}

void Dataset::validate() const {
  if (traces.empty()) throw DataError("dataset has no traces");
  const Index nu = traces.front().inputs.cols();
  const Index ny = traces.front().outputs.cols();
  for (size_t j = 0; j < traces.size(); ++j) {
    const Trace& t = traces[j];
    if (t.inputs.rows() != t.outputs.rows())
      throw DataError("trace " + std::to_string(j) +
                      ": input/output row counts differ");
    if (t.inputs.cols() != nu || t.outputs.cols() != ny)
      throw DataError("trace " + std::to_string(j) +
                      ": channel widths differ from the first trace");
    if (t.length() == 0)
      throw DataError("trace " + std::to_string(j) + " is empty");
  }
}

Index RnnModel::fy_input_dim() const {
  if (!has_state()) return n_u;
  return feedthrough ? n_x + n_u : n_x;
}

Vector RnnModel::fy_input(const Vector& x, const Vector& u) const {
  if (!has_state()) return u;
  if (!feedthrough) return x;
  Vector xu(n_x + n_u);
  xu << x, u;
  return xu;
}

void RnnModel::validate() const {
  fy.validate();
  if (fy.output_dim() != n_y)
    throw ConfigError("fy output width must equal n_y");
  if (fy.input_dim != fy_input_dim())
    throw ConfigError("fy input width inconsistent with feedthrough/n_x/n_u");
  if (theta_y.size() != fy.parameter_count())
    throw ConfigError("theta_y size mismatch");
  if (has_state()) {
    fx.validate();
    if (fx.output_dim() != n_x) throw ConfigError("fx output width must equal n_x");
    if (fx.input_dim != n_x + n_u)
      throw ConfigError("fx input width must equal n_x + n_u");
    if (theta_x.size() != fx.parameter_count())
      throw ConfigError("theta_x size mismatch");
  } else if (theta_x.size() != 0) {
    throw ConfigError("stateless model cannot carry theta_x");
  }
  if (encoder) {
    encoder->validate();
    if (encoder->output_dim() != n_x)
      throw ConfigError("encoder output width must equal n_x");
    if (theta_x0.size() != encoder->parameter_count())
      throw ConfigError("theta_x0 size mismatch");
  }
}

RnnModel make_rnn(Index n_x, Index n_u, Index n_y,
                  const std::vector<Index>& fx_hidden,
                  const std::vector<Index>& fy_hidden,
                  const Activation& hidden, const Activation& output,
                  bool feedthrough) {
  RnnModel m;
  m.n_x = n_x;
  m.n_u = n_u;
  m.n_y = n_y;
  m.feedthrough = feedthrough;
  if (n_x > 0) {
    m.fx.input_dim = n_x + n_u;
    m.fx.layer_dims = fx_hidden;
    m.fx.layer_dims.push_back(n_x);
    m.fx.hidden_activation = hidden;
    m.fx.output_activation = Activation::linear();
    m.theta_x = Vector::Zero(m.fx.parameter_count());
  }
  m.fy.input_dim = m.fy_input_dim();
  m.fy.layer_dims = fy_hidden;
  m.fy.layer_dims.push_back(n_y);
  m.fy.hidden_activation = hidden;
  m.fy.output_activation = output;
  m.theta_y = Vector::Zero(m.fy.parameter_count());
  m.validate();
  return m;
}

void attach_encoder(RnnModel& model, Index n_v,
                    const std::vector<Index>& hidden,
                    const Activation& hidden_activation) {
  if (!model.has_state())
    throw ConfigError("cannot attach an encoder to a stateless model");
  NetworkSpec enc;
  enc.input_dim = n_v;
  enc.layer_dims = hidden;
  enc.layer_dims.push_back(model.n_x);
  enc.hidden_activation = hidden_activation;
  enc.output_activation = Activation::linear();
  model.encoder = enc;
  model.theta_x0 = Vector::Zero(enc.parameter_count());
  model.validate();
}

Trajectory simulate(const RnnModel& model, const Vector& x0,
                    const Matrix& inputs) {
  if (inputs.cols() != model.n_u)
    throw ShapeError("inputs have " + std::to_string(inputs.cols()) +
                     " columns, model expects " + std::to_string(model.n_u));
  if (x0.size() != model.n_x)
    throw ShapeError("x0 has " + std::to_string(x0.size()) +
                     " entries, model expects " + std::to_string(model.n_x));
  const Index steps = inputs.rows();
  Trajectory traj;
  traj.states.resize(steps, model.n_x);
  traj.outputs.resize(steps, model.n_y);

  Vector x = x0;
  Vector xu(model.has_state() ? model.n_x + model.n_u : 0);
  for (Index k = 0; k < steps; ++k) {
    traj.states.row(k) = x;
    const Vector u = inputs.row(k);
    const Vector y = forward(model.fy, model.theta_y, model.fy_input(x, u));
    if (!y.allFinite()) throw DivergenceError("non-finite output", k);
    traj.outputs.row(k) = y;
    if (model.has_state() && k + 1 < steps) {
      xu << x, u;
      x = forward(model.fx, model.theta_x, xu);
      if (!x.allFinite()) throw DivergenceError("non-finite state", k + 1);
    }
  }
  return traj;
}

Vector encode_x0(const RnnModel& model, const Vector& v0) {
  if (!model.encoder) throw ConfigError("model has no initial-state encoder");
  return forward(*model.encoder, model.theta_x0, v0);
}

EncoderWindow build_v0(const Trace& trace, Index n_a, Index n_b) {
  if (n_a < 0 || n_b < 0) throw ConfigError("n_a and n_b must be >= 0");
  const Index warm = std::max(n_a, n_b);
  if (trace.length() <= warm)
    throw DataError("trace has " + std::to_string(trace.length()) +
                    " samples, needs more than " + std::to_string(warm) +
                    " warm-up rows");
  const Index ny = trace.outputs.cols();
  const Index nu = trace.inputs.cols();
  EncoderWindow win;
  win.v0.resize(n_a * ny + n_b * nu);
  Index pos = 0;
  for (Index i = 1; i <= n_a; ++i) {
    win.v0.segment(pos, ny) = trace.outputs.row(warm - i);
    pos += ny;
  }
  for (Index i = 1; i <= n_b; ++i) {
    win.v0.segment(pos, nu) = trace.inputs.row(warm - i);
    pos += nu;
  }
  win.trimmed.inputs = trace.inputs.bottomRows(trace.length() - warm);
  win.trimmed.outputs = trace.outputs.bottomRows(trace.length() - warm);
  win.trimmed.v0 = win.v0;
  return win;
}

}  // namespace nails
