#include "nails/data.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include "nails/errors.hpp"
#include "nails/rng.hpp"

namespace nails {

namespace {

std::vector<double> parse_line(const std::string& line, size_t line_no,
                               Index expected) {
  std::vector<double> row;
  row.reserve(expected);
  size_t pos = 0;
  while (true) {
    const size_t comma = line.find(',', pos);
    const std::string cell = line.substr(
        pos, comma == std::string::npos ? std::string::npos : comma - pos);
    size_t used = 0;
    double value = 0.0;
    try {
      value = std::stod(cell, &used);
    } catch (const std::exception&) {
      throw DataError("line " + std::to_string(line_no) +
                      ": non-numeric cell '" + cell + "'");
    }
    while (used < cell.size() &&
           (cell[used] == ' ' || cell[used] == '\t' || cell[used] == '\r'))
      ++used;
    if (used != cell.size())
      throw DataError("line " + std::to_string(line_no) +
                      ": trailing junk in cell '" + cell + "'");
    row.push_back(value);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (static_cast<Index>(row.size()) != expected)
    throw DataError("line " + std::to_string(line_no) + ": expected " +
                    std::to_string(expected) + " columns, found " +
                    std::to_string(row.size()));
  return row;
}

}  // namespace

Trace load_csv(const std::string& path, Index n_u, Index n_y, bool has_header) {
  if (n_u < 0 || n_y < 1) throw ConfigError("need n_u >= 0 and n_y >= 1");
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  const Index width = n_u + n_y;
  std::vector<std::vector<double>> rows;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && has_header) continue;
    if (line.empty()) continue;
    rows.push_back(parse_line(line, line_no, width));
  }
  if (rows.empty()) throw DataError("'" + path + "' holds no data rows");
  Trace trace;
  trace.inputs.resize(static_cast<Index>(rows.size()), n_u);
  trace.outputs.resize(static_cast<Index>(rows.size()), n_y);
  for (size_t r = 0; r < rows.size(); ++r) {
    for (Index c = 0; c < n_u; ++c)
      trace.inputs(static_cast<Index>(r), c) = rows[r][c];
    for (Index c = 0; c < n_y; ++c)
      trace.outputs(static_cast<Index>(r), c) = rows[r][n_u + c];
  }
  return trace;
}

void save_csv(const std::string& path, const Trace& trace, bool header) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  const Index n_u = trace.inputs.cols();
  const Index n_y = trace.outputs.cols();
  if (header) {
    for (Index c = 0; c < n_u; ++c) out << "u" << c << ",";
    for (Index c = 0; c < n_y; ++c)
      out << "y" << c << (c + 1 < n_y ? "," : "");
    out << "\n";
  }
  char buf[40];
  for (Index r = 0; r < trace.length(); ++r) {
    for (Index c = 0; c < n_u; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", trace.inputs(r, c));
      out << buf << ",";
    }
    for (Index c = 0; c < n_y; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", trace.outputs(r, c));
      out << buf << (c + 1 < n_y ? "," : "");
    }
    out << "\n";
  }
  if (!out) throw DataError("write to '" + path + "' failed");
}

Vector SyntheticBinarySystem::next_state(const Vector& x, double u) const {
  const Vector pulse = x.array() * (0.9 + 0.1 * x.array().sin());
  return a * pulse + b * (u * (1.0 - u * u * u));
}

double SyntheticBinarySystem::output_margin(const Vector& x) const {
  const Vector lifted = x.array() + x.array().cube() / 3.0;
  return c.dot(lifted) - offset;
}

Trace generate_binary_benchmark(const SyntheticBinarySystem& system,
                                Index n_total) {
  if (n_total < 2) throw ConfigError("need at least two samples");
  if (system.noise_std < 0.0) throw ConfigError("noise_std must be >= 0");
  Rng rng(system.seed);
  Trace trace;
  trace.inputs.resize(n_total, 1);
  trace.outputs.resize(n_total, 1);
  Vector x = Vector::Zero(3);
  double u = 0.0;
  for (Index k = 0; k < n_total; ++k) {
    if (k == 0 || rng.uniform01() < system.change_prob) u = rng.uniform01();
    trace.inputs(k, 0) = u;
    const double zeta = system.noise_std * rng.normal();
    trace.outputs(k, 0) =
        system.output_margin(x) + zeta >= 0.0 ? 1.0 : 0.0;
    Vector xi(3);
    for (Index i = 0; i < 3; ++i) xi[i] = system.noise_std * rng.normal();
    x = system.next_state(x, u) + xi;
  }
  return trace;
}

std::pair<Trace, Trace> split_half(const Trace& trace) {
  const Index n = trace.length();
  if (n < 2) throw DataError("trace too short to split");
  const Index half = n / 2;
  Trace train, test;
  train.inputs = trace.inputs.topRows(half);
  train.outputs = trace.outputs.topRows(half);
  test.inputs = trace.inputs.bottomRows(n - half);
  test.outputs = trace.outputs.bottomRows(n - half);
  return {std::move(train), std::move(test)};
}

double bfr(const Matrix& y, const Matrix& yhat) {
  if (y.rows() != yhat.rows() || y.cols() != yhat.cols())
    throw ShapeError("bfr: shape mismatch");
  if (y.size() < 2) throw DataError("bfr needs at least two samples");
  const double mean = y.mean();
  const double denom = (y.array() - mean).matrix().norm();
  if (denom == 0.0) throw DataError("bfr undefined for constant outputs");
  return 100.0 * (1.0 - (y - yhat).norm() / denom);
}

double rmse(const Matrix& y, const Matrix& yhat) {
  if (y.rows() != yhat.rows() || y.cols() != yhat.cols())
    throw ShapeError("rmse: shape mismatch");
  if (y.size() == 0) throw DataError("rmse of empty data");
  return std::sqrt((y - yhat).squaredNorm() /
                   static_cast<double>(y.size()));
}

double accuracy(const Matrix& y, const Matrix& yhat) {
  if (y.rows() != yhat.rows() || y.cols() != yhat.cols())
    throw ShapeError("accuracy: shape mismatch");
  if (y.rows() == 0) throw DataError("accuracy of empty data");
  Index hits = 0;
  for (Index r = 0; r < y.rows(); ++r) {
    bool ok = true;
    for (Index c = 0; c < y.cols(); ++c) {
      const double rounded = yhat(r, c) >= 0.5 ? 1.0 : 0.0;
      if (rounded != y(r, c)) {
        ok = false;
        break;
      }
    }
    if (ok) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(y.rows());
}

double sparsity(const Vector& theta_x, const Vector& theta_y) {
  const Index n = theta_x.size() + theta_y.size();
  if (n == 0) throw DataError("sparsity of an empty parameter vector");
  Index zeros = 0;
  for (Index i = 0; i < theta_x.size(); ++i)
    if (theta_x[i] == 0.0) ++zeros;
  for (Index i = 0; i < theta_y.size(); ++i)
    if (theta_y[i] == 0.0) ++zeros;
  return 100.0 * static_cast<double>(zeros) / static_cast<double>(n);
}

}  // namespace nails
