#pragma once

#include <optional>
#include <vector>

#include "nails/network.hpp"

namespace nails {

/// One experiment record: inputs N x n_u, outputs N x n_y, and an optional
/// measured vector v0 feeding the initial-state encoder.
struct Trace {
  Matrix inputs;
  Matrix outputs;
  std::optional<Vector> v0;

  Index length() const { return inputs.rows(); }
};

struct Dataset {
  std::vector<Trace> traces;

  Index n_u() const { return traces.empty() ? 0 : traces.front().inputs.cols(); }
  Index n_y() const { return traces.empty() ? 0 : traces.front().outputs.cols(); }
  Index total_samples() const;
  void validate() const;
};

/// Recurrent state-space model: state update x_{k+1} = fx([x_k; u_k]) and
/// output y_k = fy([x_k; u_k]) (or fy(x_k) without feedthrough), both layered
/// networks, plus an optional encoder mapping v0 to x0. n_x == 0 degenerates
/// to the static map y_k = fy(u_k); fx is unused in that case.
struct RnnModel {
  Index n_x = 0;
  Index n_u = 0;
  Index n_y = 0;
  bool feedthrough = true;
  NetworkSpec fx;
  NetworkSpec fy;
  std::optional<NetworkSpec> encoder;

  Vector theta_x;
  Vector theta_y;
  Vector theta_x0;

  bool has_state() const { return n_x > 0; }
  Index fy_input_dim() const;
  Vector fy_input(const Vector& x, const Vector& u) const;

  void validate() const;
};

/// Builds the canonical wiring: fx maps [x; u] -> x with a linear output
/// layer; fy maps [x; u] (or x, or u when n_x == 0) -> y.
RnnModel make_rnn(Index n_x, Index n_u, Index n_y,
                  const std::vector<Index>& fx_hidden,
                  const std::vector<Index>& fy_hidden,
                  const Activation& hidden, const Activation& output,
                  bool feedthrough);

/// Adds an encoder network v0 -> x0 with the given hidden widths.
void attach_encoder(RnnModel& model, Index n_v,
                    const std::vector<Index>& hidden,
                    const Activation& hidden_activation);

struct Trajectory {
  Matrix states;   // N x n_x
  Matrix outputs;  // N x n_y
};

/// Rolls the recursion for inputs.rows() steps from x0. Throws
/// DivergenceError (with the step index) on the first non-finite value.
Trajectory simulate(const RnnModel& model, const Vector& x0,
                    const Matrix& inputs);

/// forward(encoder, v0); ConfigError when no encoder is attached.
Vector encode_x0(const RnnModel& model, const Vector& v0);

/// v0 built from the n_a most recent outputs then the n_b most recent inputs
/// before the training window (most-recent-first); the window starts at
/// max(n_a, n_b) and the returned trace is trimmed accordingly.
struct EncoderWindow {
  Vector v0;
  Trace trimmed;
};
EncoderWindow build_v0(const Trace& trace, Index n_a, Index n_b);

}  // namespace nails
