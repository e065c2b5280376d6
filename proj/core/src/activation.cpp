#include "nails/activation.hpp"

#include <cmath>
#include <cstdio>

#include "nails/errors.hpp"

namespace nails {

Activation Activation::leaky_relu(double slope) {
  if (!(slope > 0.0 && slope < 1.0))
    throw ConfigError("leaky_relu slope must lie in (0, 1), got " +
                      std::to_string(slope));
  return Activation(ActivationKind::LeakyRelu, slope);
}

double Activation::value(double v) const {
  switch (kind_) {
    case ActivationKind::Linear:
      return v;
    case ActivationKind::Tanh:
      return std::tanh(v);
    case ActivationKind::Sigmoid:
      return 1.0 / (1.0 + std::exp(-v));
    case ActivationKind::LeakyRelu:
      return v >= 0.0 ? v : slope_ * v;
  }
  return v;
}

double Activation::derivative(double v) const {
  switch (kind_) {
    case ActivationKind::Linear:
      return 1.0;
    case ActivationKind::Tanh: {
      const double t = std::tanh(v);
      return 1.0 - t * t;
    }
    case ActivationKind::Sigmoid: {
      const double s = 1.0 / (1.0 + std::exp(-v));
      return s * (1.0 - s);
    }
    case ActivationKind::LeakyRelu:
      return v >= 0.0 ? 1.0 : slope_;
  }
  return 1.0;
}

void Activation::apply(const Vector& v, Vector& out) const {
  out.resize(v.size());
  for (Index i = 0; i < v.size(); ++i) out[i] = value(v[i]);
}

void Activation::apply_derivative(const Vector& v, Vector& out) const {
  out.resize(v.size());
  for (Index i = 0; i < v.size(); ++i) out[i] = derivative(v[i]);
}

Activation Activation::parse(const std::string& name) {
  if (name == "linear") return linear();
  if (name == "tanh") return tanh();
  if (name == "sigmoid") return sigmoid();
  if (name == "leaky_relu") return leaky_relu();
  const std::string prefix = "leaky_relu:";
  if (name.rfind(prefix, 0) == 0) {
    return leaky_relu(std::stod(name.substr(prefix.size())));
  }
  throw ConfigError("unknown activation '" + name + "'");
}

std::string Activation::name() const {
  switch (kind_) {
    case ActivationKind::Linear:
      return "linear";
    case ActivationKind::Tanh:
      return "tanh";
    case ActivationKind::Sigmoid:
      return "sigmoid";
    case ActivationKind::LeakyRelu: {
      char buf[48];
      std::snprintf(buf, sizeof(buf), "leaky_relu:%.17g", slope_);
      return buf;
    }
  }
  return "linear";
}

}  // namespace nails
