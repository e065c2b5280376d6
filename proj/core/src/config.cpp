#include "nails/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "nails/errors.hpp"

namespace nails {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  size_t e = s.find_last_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  size_t pos = 0;
  while (true) {
    const size_t next = s.find(sep, pos);
    parts.push_back(trim(s.substr(
        pos, next == std::string::npos ? std::string::npos : next - pos)));
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  return parts;
}

double to_double(const std::string& section, const std::string& key,
                 const std::string& value) {
  try {
    size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("[" + section + "] " + key + ": bad number '" + value +
                      "'");
  }
}

}  // namespace

IniFile IniFile::parse_string(const std::string& text,
                              const std::string& origin) {
  IniFile ini;
  ini.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  std::string section;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == ';' || t[0] == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw ConfigError(origin + ":" + std::to_string(line_no) +
                          ": unterminated section header");
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty())
        throw ConfigError(origin + ":" + std::to_string(line_no) +
                          ": empty section name");
      ini.sections_[section];
      continue;
    }
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(line_no) +
                        ": expected key=value");
    const std::string key = trim(t.substr(0, eq));
    if (key.empty())
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
    if (section.empty())
      throw ConfigError(origin + ":" + std::to_string(line_no) +
                        ": key outside any [section]");
    ini.sections_[section][key] = trim(t.substr(eq + 1));
  }
  return ini;
}

IniFile IniFile::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file '" + path + "' not found");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_string(buffer.str(), path);
}

bool IniFile::has(const std::string& section, const std::string& key) const {
  const auto sit = sections_.find(section);
  return sit != sections_.end() && sit->second.count(key) > 0;
}

std::string IniFile::get(const std::string& section, const std::string& key,
                         const std::string& fallback) const {
  const auto sit = sections_.find(section);
  if (sit == sections_.end()) return fallback;
  const auto kit = sit->second.find(key);
  return kit == sit->second.end() ? fallback : kit->second;
}

double IniFile::get_double(const std::string& section, const std::string& key,
                           double fallback) const {
  if (!has(section, key)) return fallback;
  return to_double(section, key, get(section, key, ""));
}

int IniFile::get_int(const std::string& section, const std::string& key,
                     int fallback) const {
  const double v = get_double(section, key, static_cast<double>(fallback));
  if (v != std::floor(v))
    throw ConfigError("[" + section + "] " + key + " must be an integer");
  return static_cast<int>(v);
}

std::uint64_t IniFile::get_u64(const std::string& section,
                               const std::string& key,
                               std::uint64_t fallback) const {
  if (!has(section, key)) return fallback;
  const std::string value = get(section, key, "");
  try {
    return std::stoull(value);
  } catch (const std::exception&) {
    throw ConfigError("[" + section + "] " + key + ": bad seed '" + value + "'");
  }
}

bool IniFile::get_bool(const std::string& section, const std::string& key,
                       bool fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = get(section, key, "");
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("[" + section + "] " + key + ": bad boolean '" + v + "'");
}

std::vector<double> IniFile::get_double_list(const std::string& section,
                                             const std::string& key) const {
  std::vector<double> out;
  if (!has(section, key)) return out;
  for (const auto& part : split(get(section, key, ""), ','))
    if (!part.empty()) out.push_back(to_double(section, key, part));
  return out;
}

std::vector<Index> IniFile::get_index_list(const std::string& section,
                                           const std::string& key) const {
  std::vector<Index> out;
  for (double v : get_double_list(section, key)) {
    if (v != std::floor(v) || v < 0)
      throw ConfigError("[" + section + "] " + key +
                        " must list nonnegative integers");
    out.push_back(static_cast<Index>(v));
  }
  return out;
}

std::vector<std::string> IniFile::get_string_list(const std::string& section,
                                                  const std::string& key) const {
  std::vector<std::string> out;
  if (!has(section, key)) return out;
  for (const auto& part : split(get(section, key, ""), ','))
    if (!part.empty()) out.push_back(part);
  return out;
}

void IniFile::set(const std::string& section, const std::string& key,
                  const std::string& value) {
  sections_[section][key] = value;
}

std::vector<double> parse_levels(const std::string& text) {
  std::vector<double> levels;
  if (text.find(':') != std::string::npos) {
    const auto parts = split(text, ':');
    if (parts.size() != 3)
      throw ConfigError("levels grid must be lo:step:hi, got '" + text + "'");
    const double lo = to_double("nonsmooth", "levels", parts[0]);
    const double step = to_double("nonsmooth", "levels", parts[1]);
    const double hi = to_double("nonsmooth", "levels", parts[2]);
    if (!(step > 0.0) || hi < lo)
      throw ConfigError("levels grid needs step > 0 and hi >= lo");
    const Index count = static_cast<Index>(std::llround((hi - lo) / step)) + 1;
    for (Index i = 0; i < count; ++i) levels.push_back(lo + i * step);
    return levels;
  }
  for (const auto& part : split(text, ','))
    if (!part.empty()) levels.push_back(to_double("nonsmooth", "levels", part));
  return levels;
}

namespace {

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"model",
       {"n_x", "fx_hidden", "fy_hidden", "activation", "output", "feedthrough",
        "encoder_hidden", "n_a", "n_b"}},
      {"loss", {"kind", "scale", "eps"}},
      {"reg", {"rho_x", "rho_theta"}},
      {"nonsmooth",
       {"kind", "tau", "tau_x", "tau_y", "tau_g", "rho", "n_admm", "levels"}},
      {"solver",
       {"kind", "epochs", "eps_v", "c1", "sigma", "n_sigma", "lambda0", "c2",
        "c3", "n_lambda", "lr", "beta1", "beta2", "backend"}},
      {"init", {"sigma0", "seed"}},
      {"data",
       {"train", "test", "n_u", "n_y", "header", "synthetic", "sigma_n",
        "n_total", "seed", "standardize"}},
      {"x0",
       {"population", "bound", "n0", "iterations", "inertia", "cognitive",
        "social", "seed"}},
      {"generate", {"kind", "sigma", "n", "seed"}},
  };
  return keys;
}

}  // namespace

ExperimentConfig parse_experiment_config(const IniFile& ini) {
  const auto& schema = known_keys();
  for (const auto& [section, entries] : ini.sections()) {
    const auto sit = schema.find(section);
    if (sit == schema.end())
      throw ConfigError("unknown config section [" + section + "]");
    for (const auto& [key, value] : entries) {
      (void)value;
      if (sit->second.count(key) == 0)
        throw ConfigError("unknown key '" + key + "' in section [" + section +
                          "]");
    }
  }

  ExperimentConfig cfg;
  cfg.n_x = ini.get_int("model", "n_x", 4);
  if (cfg.n_x < 0) throw ConfigError("n_x must be >= 0");
  if (ini.has("model", "fx_hidden"))
    cfg.fx_hidden = ini.get_index_list("model", "fx_hidden");
  if (ini.has("model", "fy_hidden"))
    cfg.fy_hidden = ini.get_index_list("model", "fy_hidden");
  cfg.hidden_act = Activation::parse(ini.get("model", "activation", "tanh"));
  cfg.output_act = Activation::parse(ini.get("model", "output", "linear"));
  cfg.feedthrough = ini.get_bool("model", "feedthrough", true);
  cfg.encoder_hidden = ini.get_index_list("model", "encoder_hidden");
  cfg.n_a = ini.get_int("model", "n_a", 0);
  cfg.n_b = ini.get_int("model", "n_b", 0);
  if (cfg.n_a < 0 || cfg.n_b < 0) throw ConfigError("n_a/n_b must be >= 0");

  const std::string loss = ini.get("loss", "kind", "mse");
  if (loss == "mse")
    cfg.loss_kind = LossKind::QuadraticMse;
  else if (loss == "xent")
    cfg.loss_kind = LossKind::ModifiedCrossEntropy;
  else
    throw ConfigError("[loss] kind must be mse or xent, got '" + loss + "'");
  cfg.loss_scale = ini.get_double("loss", "scale", 0.0);
  if (cfg.loss_scale < 0.0) throw ConfigError("[loss] scale must be >= 0");
  cfg.xent_eps = ini.get_double("loss", "eps", 1e-4);

  cfg.rho_x = ini.get_double("reg", "rho_x", 1.0);
  cfg.rho_theta = ini.get_double("reg", "rho_theta", 0.1);
  if (cfg.rho_x < 0.0 || cfg.rho_theta < 0.0)
    throw ConfigError("[reg] penalties must be >= 0");

  const std::string g = ini.get("nonsmooth", "kind", "none");
  if (g == "none")
    cfg.nonsmooth_kind = NonSmoothKind::None;
  else if (g == "l1")
    cfg.nonsmooth_kind = NonSmoothKind::L1;
  else if (g == "l0")
    cfg.nonsmooth_kind = NonSmoothKind::L0;
  else if (g == "group")
    cfg.nonsmooth_kind = NonSmoothKind::GroupLasso;
  else if (g == "quantize")
    cfg.nonsmooth_kind = NonSmoothKind::Quantize;
  else
    throw ConfigError("[nonsmooth] kind must be one of none, l1, l0, group, "
                      "quantize; got '" + g + "'");
  const double tau = ini.get_double("nonsmooth", "tau", 0.0);
  cfg.tau_x = ini.get_double("nonsmooth", "tau_x", tau);
  cfg.tau_y = ini.get_double("nonsmooth", "tau_y", tau);
  cfg.tau_g = ini.get_double("nonsmooth", "tau_g", 0.0);
  cfg.admm_rho = ini.get_double("nonsmooth", "rho", 0.0);
  cfg.n_admm = ini.get_int("nonsmooth", "n_admm", 1);
  if (ini.has("nonsmooth", "levels"))
    cfg.levels = parse_levels(ini.get("nonsmooth", "levels", ""));

  const std::string solver = ini.get("solver", "kind", "nails");
  if (solver == "nails")
    cfg.solver = SolverChoice::Nails;
  else if (solver == "nailm")
    cfg.solver = SolverChoice::Nailm;
  else if (solver == "amsgrad")
    cfg.solver = SolverChoice::Amsgrad;
  else
    throw ConfigError("[solver] kind must be nails, nailm, or amsgrad; got '" +
                      solver + "'");
  cfg.epochs = ini.get_int("solver", "epochs", -1);
  cfg.eps_v = ini.get_double("solver", "eps_v", 1e-6);
  cfg.c1 = ini.get_double("solver", "c1", 1e-4);
  cfg.ls_sigma = ini.get_double("solver", "sigma", 0.5);
  cfg.n_sigma = ini.get_int("solver", "n_sigma", 20);
  cfg.lambda0 = ini.get_double("solver", "lambda0", 100.0);
  cfg.c2 = ini.get_double("solver", "c2", 1.5);
  cfg.c3 = ini.get_double("solver", "c3", 5.0);
  cfg.n_lambda = ini.get_int("solver", "n_lambda", 20);
  cfg.lr = ini.get_double("solver", "lr", 0.01);
  cfg.beta1 = ini.get_double("solver", "beta1", 0.9);
  cfg.beta2 = ini.get_double("solver", "beta2", 0.999);
  cfg.backend = parse_backend(ini.get("solver", "backend", "stacked"));

  cfg.sigma0 = ini.get_double("init", "sigma0", 0.15);
  cfg.seed = ini.get_u64("init", "seed", 0);

  cfg.train_paths = ini.get_string_list("data", "train");
  cfg.test_path = ini.get("data", "test", "");
  cfg.n_u = ini.get_int("data", "n_u", 1);
  cfg.n_y = ini.get_int("data", "n_y", 1);
  cfg.has_header = ini.get_bool("data", "header", false);
  cfg.synthetic = ini.get("data", "synthetic", "");
  if (!cfg.synthetic.empty() && cfg.synthetic != "binary")
    throw ConfigError("[data] synthetic must be empty or 'binary'");
  cfg.sigma_n = ini.get_double("data", "sigma_n", 0.0);
  if (cfg.sigma_n < 0.0) throw ConfigError("[data] sigma_n must be >= 0");
  cfg.n_total = ini.get_int("data", "n_total", 2000);
  cfg.data_seed = ini.get_u64("data", "seed", 0);
  cfg.standardize = ini.get_bool("data", "standardize", false);
  if (cfg.train_paths.empty() && cfg.synthetic.empty())
    throw ConfigError("[data] needs train=<csv paths> or synthetic=binary");

  cfg.pso.population = ini.get_int("x0", "population", 0);
  cfg.pso.bound = ini.get_double("x0", "bound", 3.0);
  cfg.pso.horizon = ini.get_int("x0", "n0", 100);
  cfg.pso.iterations = ini.get_int("x0", "iterations", 50);
  cfg.pso.inertia = ini.get_double("x0", "inertia", 0.7);
  cfg.pso.cognitive = ini.get_double("x0", "cognitive", 1.5);
  cfg.pso.social = ini.get_double("x0", "social", 1.5);
  cfg.pso.seed = ini.get_u64("x0", "seed", 1);
  return cfg;
}

}  // namespace nails
