#include "liperm/config.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "liperm/io_util.hpp"
#include "liperm/rng.hpp"

namespace liperm::cli {

using nlohmann::json;

std::string experiment_name(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::kSpiral: return "spiral";
    case ExperimentKind::kGmmSweep: return "gmm_sweep";
    case ExperimentKind::kRateStudy: return "rate_study";
    case ExperimentKind::kBoundsVerify: return "bounds_verify";
    case ExperimentKind::kTrainSingle: return "train_single";
  }
  return "?";
}

ExperimentKind experiment_from_name(const std::string& s) {
  if (s == "spiral") return ExperimentKind::kSpiral;
  if (s == "gmm_sweep") return ExperimentKind::kGmmSweep;
  if (s == "rate_study") return ExperimentKind::kRateStudy;
  if (s == "bounds_verify") return ExperimentKind::kBoundsVerify;
  if (s == "train_single") return ExperimentKind::kTrainSingle;
  throw ConfigError("unknown experiment: " + s);
}

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

// Strips a trailing comment that is not inside a string literal.
std::string strip_comment(const std::string& s) {
  bool in_str = false;
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') in_str = !in_str;
    if (s[i] == '#' && !in_str) return s.substr(0, i);
  }
  return s;
}

json parse_toml_value(const std::string& raw);

json parse_toml_array(const std::string& raw) {
  // raw includes the surrounding brackets
  json arr = json::array();
  size_t i = 1;
  const size_t end = raw.size() - 1;
  while (i < end) {
    while (i < end && (std::isspace(static_cast<unsigned char>(raw[i])) ||
                       raw[i] == ',')) {
      ++i;
    }
    if (i >= end) break;
    size_t j = i;
    if (raw[j] == '[') {
      int depth = 0;
      bool in_str = false;
      for (; j < end; ++j) {
        if (raw[j] == '"') in_str = !in_str;
        if (in_str) continue;
        if (raw[j] == '[') ++depth;
        if (raw[j] == ']' && --depth == 0) {
          ++j;
          break;
        }
      }
    } else if (raw[j] == '"') {
      ++j;
      while (j < end && raw[j] != '"') ++j;
      ++j;
    } else {
      while (j < end && raw[j] != ',' && raw[j] != ']') ++j;
    }
    arr.push_back(parse_toml_value(trim(raw.substr(i, j - i))));
    i = j;
  }
  return arr;
}

json parse_toml_value(const std::string& raw) {
  if (raw.empty()) throw ConfigError("toml: empty value");
  if (raw.front() == '[') return parse_toml_array(raw);
  if (raw.front() == '"') {
    if (raw.size() < 2 || raw.back() != '"') {
      throw ConfigError("toml: unterminated string");
    }
    return raw.substr(1, raw.size() - 2);
  }
  if (raw == "true") return true;
  if (raw == "false") return false;
  // number: integer if it looks integral, double otherwise
  if (raw.find_first_of(".eE") == std::string::npos) {
    try {
      return std::stoll(raw);
    } catch (...) {
      throw ConfigError("toml: bad value '" + raw + "'");
    }
  }
  try {
    return std::stod(raw);
  } catch (...) {
    throw ConfigError("toml: bad value '" + raw + "'");
  }
}

std::vector<std::string> split_dotted(const std::string& s) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, '.')) parts.push_back(trim(cur));
  return parts;
}

}  // namespace

json toml_to_json(const std::string& text) {
  json root = json::object();
  json* table = &root;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    line = trim(strip_comment(line));
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("toml: bad table header");
      const auto path = split_dotted(line.substr(1, line.size() - 2));
      table = &root;
      for (const auto& key : path) table = &(*table)[key];
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("toml: expected key = value");
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    // multi-line arrays: keep reading until brackets balance
    if (!value.empty() && value.front() == '[') {
      long depth = 0;
      const auto count = [&](const std::string& s) {
        bool in_str = false;
        for (char c : s) {
          if (c == '"') in_str = !in_str;
          if (in_str) continue;
          if (c == '[') ++depth;
          if (c == ']') --depth;
        }
      };
      count(value);
      while (depth > 0 && std::getline(is, line)) {
        line = trim(strip_comment(line));
        count(line);
        value += " " + line;
      }
      if (depth != 0) throw ConfigError("toml: unbalanced array");
    }
    (*table)[key] = parse_toml_value(value);
  }
  return root;
}

json load_config_file(const std::string& path) {
  const std::string text = read_file(path);
  const bool is_toml =
      path.size() >= 5 && path.compare(path.size() - 5, 5, ".toml") == 0;
  try {
    return is_toml ? toml_to_json(text) : json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
}

void GmmSpec::validate() const {
  if (means.cols() < 1) throw ConfigError("gmm: need at least one component");
  if (mixture_weights.size() != means.cols()) {
    throw ConfigError("gmm: weights/means mismatch");
  }
  if (std::abs(mixture_weights.sum() - 1.0) > 1e-9) {
    throw ConfigError("gmm: mixture weights must sum to 1");
  }
  if (!(covariance_scale > 0.0)) throw ConfigError("gmm: bad covariance scale");
  if (!(box_hi > box_lo)) throw ConfigError("gmm: bad box");
}

ot::DiscreteMeasure GmmSpec::sample(int n, std::uint64_t seed,
                                    long* rejected) const {
  validate();
  if (n < 1) throw ConfigError("gmm: need n >= 1");
  Rng rng(seed);
  const int D = static_cast<int>(means.rows());
  const double sd = std::sqrt(covariance_scale);
  Eigen::MatrixXd pts(D, n);
  long rejections = 0;
  for (int i = 0; i < n; ++i) {
    while (true) {
      const double u = rng.uniform01();
      int k = 0;
      double acc = 0.0;
      for (; k < means.cols(); ++k) {
        acc += mixture_weights[k];
        if (u <= acc || k + 1 == means.cols()) break;
      }
      Eigen::VectorXd x(D);
      for (int c = 0; c < D; ++c) x[c] = means(c, k) + sd * rng.normal();
      if ((x.array() >= box_lo).all() && (x.array() <= box_hi).all()) {
        pts.col(i) = (x.array() - box_lo) / (box_hi - box_lo);
        break;
      }
      ++rejections;
    }
  }
  if (rejected != nullptr) *rejected = rejections;
  return ot::DiscreteMeasure::uniform_atoms(std::move(pts));
}

Eigen::Vector2d SpiralSpec::curve(double t) const {
  const double r = r0 + r_growth * t;
  const double theta = theta_rate * t;
  return {0.5 + r * std::cos(theta), 0.5 + r * std::sin(theta)};
}

ot::DiscreteMeasure SpiralSpec::sample(int n, std::uint64_t seed) const {
  if (n < 1) throw ConfigError("spiral: need n >= 1");
  Rng rng(seed);
  Eigen::MatrixXd pts(2, n);
  for (int i = 0; i < n; ++i) {
    Eigen::Vector2d p = curve(rng.uniform01());
    if (jitter > 0.0) {
      p[0] += jitter * rng.normal();
      p[1] += jitter * rng.normal();
    }
    pts.col(i) = p;
  }
  // jitter can step outside the box; clamping is the documented choice here
  pts = pts.cwiseMax(0.0).cwiseMin(1.0);
  return ot::DiscreteMeasure::uniform_atoms(std::move(pts));
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("config: need at least one seed");
  if (d < 1 || D < 1) throw ConfigError("config: bad dimensions");
  if (d > D) throw ConfigError("config: d must not exceed D");
  if (d == D && !allow_d_eq_D) {
    throw ConfigError("config: d == D requires allow_d_eq_D");
  }
  if (n_train < 1) throw ConfigError("config: n_train must be >= 1");
  if (experiment == ExperimentKind::kGmmSweep && lambda_grid.empty()) {
    throw ConfigError("config: gmm_sweep needs a nonempty lambda grid");
  }
  for (double l : lambda_grid) {
    if (l < 0.0) throw ConfigError("config: lambda must be >= 0");
  }
  if (q < 1.0) throw ConfigError("config: q must be >= 1");
  train_cfg.validate();
  if (experiment == ExperimentKind::kGmmSweep ||
      (experiment == ExperimentKind::kTrainSingle && data_source == "gmm")) {
    gmm.validate();
  }
  if (heatmap.bins < 1) throw ConfigError("config: heatmap bins must be >= 1");
  if (!(heatmap.hi > heatmap.lo)) throw ConfigError("config: bad heatmap range");
}

namespace {

template <typename T>
void read_into(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void read_train(const json& j, train::LipermObjectiveConfig& cfg) {
  read_into(j, "iterations", cfg.iterations);
  read_into(j, "mc_samples", cfg.mc_samples);
  read_into(j, "critic_steps", cfg.critic_steps);
  read_into(j, "encoder_steps", cfg.encoder_steps);
  read_into(j, "generator_steps", cfg.generator_steps);
  read_into(j, "gp_weight", cfg.gp_weight);
  read_into(j, "lr_critic", cfg.lr_critic);
  read_into(j, "lr_encoder", cfg.lr_encoder);
  read_into(j, "lr_generator", cfg.lr_generator);
  read_into(j, "adam_beta1", cfg.adam_beta1);
  read_into(j, "adam_beta2", cfg.adam_beta2);
  read_into(j, "divergence_threshold", cfg.divergence_threshold);
  read_into(j, "batch_size", cfg.batch_size);
}

nets::Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return nets::Activation::kTanh;
  if (s == "leaky_relu") return nets::Activation::kLeakyRelu;
  throw ConfigError("config: unknown activation " + s);
}

void read_arch(const json& j, train::ArchSpec& arch) {
  read_into(j, "gen_widths", arch.gen_widths);
  read_into(j, "enc_widths", arch.enc_widths);
  read_into(j, "critic_widths", arch.critic_widths);
  read_into(j, "L_H", arch.L_H);
  if (j.contains("activation")) {
    arch.hidden = activation_from_string(j.at("activation"));
  }
  if (j.contains("gen_lipschitz")) {
    const auto& m = j.at("gen_lipschitz");
    const std::string kind = m.value("kind", "unconstrained");
    if (kind == "unconstrained") {
      arch.gen_mode = nets::LipschitzMode::unconstrained();
    } else if (kind == "certified") {
      arch.gen_mode = nets::LipschitzMode::certified(m.at("bound").get<double>());
    } else {
      throw ConfigError("config: generator mode must be unconstrained or certified");
    }
  }
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg;
  if (!j.contains("experiment")) {
    throw ConfigError("config: missing 'experiment'");
  }
  cfg.experiment = experiment_from_name(j.at("experiment"));
  read_into(j, "output_dir", cfg.output_dir);
  read_into(j, "seeds", cfg.seeds);
  read_into(j, "d", cfg.d);
  read_into(j, "D", cfg.D);
  read_into(j, "allow_d_eq_D", cfg.allow_d_eq_D);
  read_into(j, "n_train", cfg.n_train);
  read_into(j, "lambda_grid", cfg.lambda_grid);
  read_into(j, "q", cfg.q);
  read_into(j, "lambda", cfg.lambda_single);
  read_into(j, "data_source", cfg.data_source);
  read_into(j, "data_csv", cfg.data_csv);

  if (j.contains("train")) read_train(j.at("train"), cfg.train_cfg);
  cfg.train_cfg.q = cfg.q;
  if (j.contains("arch")) read_arch(j.at("arch"), cfg.arch);
  cfg.arch.latent_dim = cfg.d;

  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    read_into(e, "m_eval", cfg.eval.m_eval);
    read_into(e, "heatmap_points", cfg.eval.heatmap_points);
    read_into(e, "probe_steps", cfg.eval.probe_steps);
    read_into(e, "probe_mc_samples", cfg.eval.probe_mc_samples);
    read_into(e, "probe_lr", cfg.eval.probe_lr);
    read_into(e, "grid_m", cfg.eval.grid_m);
    read_into(e, "max_ot_atoms", cfg.eval.max_ot_atoms);
  }

  // Appendix defaults: means [0,6],[5,0],[8,8], covariance 2 I_2, equal
  // thirds, box [-4,12]^2.
  cfg.gmm.means.resize(2, 3);
  cfg.gmm.means << 0.0, 5.0, 8.0, 6.0, 0.0, 8.0;
  cfg.gmm.mixture_weights = Eigen::VectorXd::Constant(3, 1.0 / 3.0);
  if (j.contains("gmm")) {
    const auto& g = j.at("gmm");
    if (g.contains("means")) {
      const auto rows = g.at("means").get<std::vector<std::vector<double>>>();
      if (rows.empty()) throw ConfigError("config: gmm means empty");
      cfg.gmm.means.resize(static_cast<long>(rows[0].size()),
                           static_cast<long>(rows.size()));
      for (size_t k = 0; k < rows.size(); ++k) {
        if (rows[k].size() != rows[0].size()) {
          throw ConfigError("config: ragged gmm means");
        }
        for (size_t c = 0; c < rows[k].size(); ++c) {
          cfg.gmm.means(static_cast<long>(c), static_cast<long>(k)) =
              rows[k][c];
        }
      }
      cfg.gmm.mixture_weights = Eigen::VectorXd::Constant(
          cfg.gmm.means.cols(), 1.0 / double(cfg.gmm.means.cols()));
    }
    if (g.contains("weights")) {
      const auto w = g.at("weights").get<std::vector<double>>();
      cfg.gmm.mixture_weights =
          Eigen::Map<const Eigen::VectorXd>(w.data(), long(w.size()));
    }
    read_into(g, "covariance_scale", cfg.gmm.covariance_scale);
    if (g.contains("box")) {
      const auto box = g.at("box").get<std::vector<double>>();
      if (box.size() != 2) throw ConfigError("config: gmm box needs [lo, hi]");
      cfg.gmm.box_lo = box[0];
      cfg.gmm.box_hi = box[1];
    }
  }

  if (j.contains("spiral")) {
    const auto& s = j.at("spiral");
    read_into(s, "r0", cfg.spiral.r0);
    read_into(s, "r_growth", cfg.spiral.r_growth);
    read_into(s, "theta_rate", cfg.spiral.theta_rate);
    read_into(s, "jitter", cfg.spiral.jitter);
    read_into(s, "n_arrows", cfg.spiral.n_arrows);
    read_into(s, "lambdas", cfg.spiral.lambdas);
  }

  if (j.contains("rate_study")) {
    const auto& r = j.at("rate_study");
    read_into(r, "d", cfg.rate.d);
    read_into(r, "n_grid", cfg.rate.n_grid);
    read_into(r, "trials", cfg.rate.trials);
    read_into(r, "grid_m", cfg.rate.grid_m);
  }

  if (j.contains("bounds_verify")) {
    const auto& v = j.at("bounds_verify");
    read_into(v, "num_point_sets", cfg.verify.num_point_sets);
    read_into(v, "dims", cfg.verify.dims);
    read_into(v, "n_min", cfg.verify.n_min);
    read_into(v, "n_max", cfg.verify.n_max);
    read_into(v, "covering_trials", cfg.verify.covering_trials);
    read_into(v, "covering_mc", cfg.verify.covering_mc);
    read_into(v, "ga_trials", cfg.verify.ga_trials);
    read_into(v, "grid_atom_budget", cfg.verify.grid_atom_budget);
    read_into(v, "inject_violation", cfg.verify.inject_violation);
  }

  if (j.contains("bounds")) {
    const auto& b = j.at("bounds");
    read_into(b, "c_hat", cfg.bound_inputs.c_hat);
    read_into(b, "L_star", cfg.bound_inputs.L_star);
    read_into(b, "sigma_star", cfg.bound_inputs.sigma_star);
    read_into(b, "g_star_in_g0", cfg.bound_inputs.g_star_in_g0);
  }

  if (j.contains("heatmap")) {
    const auto& h = j.at("heatmap");
    read_into(h, "bins", cfg.heatmap.bins);
    read_into(h, "lo", cfg.heatmap.lo);
    read_into(h, "hi", cfg.heatmap.hi);
  }

  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  try {
    return config_from_json(load_config_file(path));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

}  // namespace liperm::cli
