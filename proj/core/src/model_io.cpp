#include "nails/model_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "nails/errors.hpp"

namespace nails {

namespace {

constexpr int kFormatVersion = 1;

void write_value(std::ostream& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out << buf;
}

void write_vector(std::ostream& out, const std::string& key, const Vector& v) {
  out << key << " " << v.size();
  for (Index i = 0; i < v.size(); ++i) {
    out << " ";
    write_value(out, v[i]);
  }
  out << "\n";
}

void write_dims(std::ostream& out, const std::string& key,
                const std::vector<Index>& dims) {
  out << key << " " << dims.size();
  for (Index d : dims) out << " " << d;
  out << "\n";
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  void expect(const std::string& key) {
    std::string token;
    if (!(in_ >> token) || token != key)
      throw DataError("model file: expected '" + key + "', found '" + token +
                      "'");
  }
  template <typename T>
  T value(const std::string& key) {
    expect(key);
    T v;
    if (!(in_ >> v)) throw DataError("model file: bad value for '" + key + "'");
    return v;
  }
  std::string token(const std::string& key) {
    expect(key);
    std::string v;
    if (!(in_ >> v)) throw DataError("model file: bad value for '" + key + "'");
    return v;
  }
  Vector vector(const std::string& key) {
    const Index n = value<Index>(key);
    if (n < 0) throw DataError("model file: negative length for '" + key + "'");
    Vector v(n);
    for (Index i = 0; i < n; ++i)
      if (!(in_ >> v[i]))
        throw DataError("model file: truncated vector '" + key + "'");
    return v;
  }
  std::vector<Index> dims(const std::string& key) {
    const Index n = value<Index>(key);
    std::vector<Index> d(n);
    for (Index i = 0; i < n; ++i)
      if (!(in_ >> d[i]))
        throw DataError("model file: truncated dims '" + key + "'");
    return d;
  }

 private:
  std::istream& in_;
};

}  // namespace

void save_model(const std::string& path, const StoredModel& stored) {
  stored.model.validate();
  std::ofstream out(path);
  if (!out) throw DataError("cannot write model file '" + path + "'");
  const RnnModel& m = stored.model;
  out << "nails-model " << kFormatVersion << "\n";
  out << "n_x " << m.n_x << "\n";
  out << "n_u " << m.n_u << "\n";
  out << "n_y " << m.n_y << "\n";
  out << "feedthrough " << (m.feedthrough ? 1 : 0) << "\n";
  out << "fy_layers";
  out << " " << m.fy.layer_dims.size();
  for (Index d : m.fy.layer_dims) out << " " << d;
  out << "\n";
  out << "fy_hidden " << m.fy.hidden_activation.name() << "\n";
  out << "fy_output " << m.fy.output_activation.name() << "\n";
  if (m.has_state()) {
    out << "fx_layers " << m.fx.layer_dims.size();
    for (Index d : m.fx.layer_dims) out << " " << d;
    out << "\n";
    out << "fx_hidden " << m.fx.hidden_activation.name() << "\n";
  }
  out << "encoder " << (m.encoder ? 1 : 0) << "\n";
  if (m.encoder) {
    out << "encoder_input " << m.encoder->input_dim << "\n";
    out << "encoder_layers " << m.encoder->layer_dims.size();
    for (Index d : m.encoder->layer_dims) out << " " << d;
    out << "\n";
    out << "encoder_hidden " << m.encoder->hidden_activation.name() << "\n";
    out << "n_a " << stored.n_a << "\n";
    out << "n_b " << stored.n_b << "\n";
  }
  write_vector(out, "theta_x", m.theta_x);
  write_vector(out, "theta_y", m.theta_y);
  write_vector(out, "theta_x0", m.theta_x0);
  out << "x0_count " << stored.x0.size() << "\n";
  for (const auto& x : stored.x0) write_vector(out, "x0", x);
  out << "standardize_u " << (stored.standardized ? 1 : 0) << "\n";
  if (stored.standardized) {
    write_vector(out, "u_mean", stored.u_mean);
    write_vector(out, "u_std", stored.u_std);
  }
  out << "standardize_y " << (stored.y_standardized ? 1 : 0) << "\n";
  if (stored.y_standardized) {
    write_vector(out, "y_mean", stored.y_mean);
    write_vector(out, "y_std", stored.y_std);
  }
  out << "loss " << stored.loss << "\n";
  out << "loss_scale ";
  write_value(out, stored.loss_scale);
  out << "\nloss_eps ";
  write_value(out, stored.loss_eps);
  out << "\nrho_x ";
  write_value(out, stored.rho_x);
  out << "\nend\n";
  if (!out) throw DataError("write to '" + path + "' failed");
}

StoredModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model file '" + path + "'");
  Reader r(in);
  const int version = r.value<int>("nails-model");
  if (version != kFormatVersion)
    throw DataError("unsupported model format version " +
                    std::to_string(version));
  StoredModel stored;
  RnnModel& m = stored.model;
  m.n_x = r.value<Index>("n_x");
  m.n_u = r.value<Index>("n_u");
  m.n_y = r.value<Index>("n_y");
  m.feedthrough = r.value<int>("feedthrough") != 0;
  auto fy_dims = r.dims("fy_layers");
  m.fy.layer_dims = std::move(fy_dims);
  m.fy.hidden_activation = Activation::parse(r.token("fy_hidden"));
  m.fy.output_activation = Activation::parse(r.token("fy_output"));
  if (m.n_x > 0) {
    m.fx.layer_dims = r.dims("fx_layers");
    m.fx.hidden_activation = Activation::parse(r.token("fx_hidden"));
    m.fx.output_activation = Activation::linear();
    m.fx.input_dim = m.n_x + m.n_u;
  }
  m.fy.input_dim = m.fy_input_dim();
  if (r.value<int>("encoder") != 0) {
    NetworkSpec enc;
    enc.input_dim = r.value<Index>("encoder_input");
    enc.layer_dims = r.dims("encoder_layers");
    enc.hidden_activation = Activation::parse(r.token("encoder_hidden"));
    enc.output_activation = Activation::linear();
    m.encoder = enc;
    stored.n_a = r.value<Index>("n_a");
    stored.n_b = r.value<Index>("n_b");
  }
  m.theta_x = r.vector("theta_x");
  m.theta_y = r.vector("theta_y");
  m.theta_x0 = r.vector("theta_x0");
  const Index count = r.value<Index>("x0_count");
  stored.x0.resize(count);
  for (Index j = 0; j < count; ++j) stored.x0[j] = r.vector("x0");
  stored.standardized = r.value<int>("standardize_u") != 0;
  if (stored.standardized) {
    stored.u_mean = r.vector("u_mean");
    stored.u_std = r.vector("u_std");
  }
  stored.y_standardized = r.value<int>("standardize_y") != 0;
  if (stored.y_standardized) {
    stored.y_mean = r.vector("y_mean");
    stored.y_std = r.vector("y_std");
  }
  stored.loss = r.token("loss");
  stored.loss_scale = r.value<double>("loss_scale");
  stored.loss_eps = r.value<double>("loss_eps");
  stored.rho_x = r.value<double>("rho_x");
  r.expect("end");
  m.validate();
  return stored;
}

}  // namespace nails
