#include "liperm/bounds.hpp"

#include <cmath>
#include <nlohmann/json.hpp>

#include "liperm/rng.hpp"

namespace liperm::bounds {

namespace {
using nlohmann::json;
}

std::string bound_kind_name(BoundKind k) {
  switch (k) {
    case BoundKind::kHardLb: return "hard_lb";
    case BoundKind::kSoftLb: return "soft_lb";
    case BoundKind::kLambdaThreshold: return "lambda_threshold";
    case BoundKind::kUbDecomposition: return "ub_decomposition";
    case BoundKind::kGaLb: return "ga_lb";
    case BoundKind::kCoveringLb: return "covering_lb";
  }
  return "?";
}

BoundKind bound_kind_from_name(const std::string& s) {
  if (s == "hard_lb") return BoundKind::kHardLb;
  if (s == "soft_lb") return BoundKind::kSoftLb;
  if (s == "lambda_threshold") return BoundKind::kLambdaThreshold;
  if (s == "ub_decomposition") return BoundKind::kUbDecomposition;
  if (s == "ga_lb") return BoundKind::kGaLb;
  if (s == "covering_lb") return BoundKind::kCoveringLb;
  throw ConfigError("unknown bound kind: " + s);
}

std::string BoundReport::to_json_string() const {
  json j;
  j["kind"] = bound_kind_name(kind);
  j["inputs"] = inputs;
  j["terms"] = terms;
  j["value"] = value;
  j["flags"] = flags;
  j["notes"] = notes;
  return j.dump(2);
}

BoundReport BoundReport::from_json_string(const std::string& text) {
  const json j = json::parse(text);
  BoundReport r;
  r.kind = bound_kind_from_name(j.at("kind"));
  r.inputs = j.at("inputs").get<std::map<std::string, double>>();
  r.terms = j.at("terms").get<std::map<std::string, double>>();
  r.value = j.at("value");
  r.flags = j.at("flags").get<std::vector<std::string>>();
  r.notes = j.at("notes");
  return r;
}

double unit_ball_volume(int d) {
  if (d < 1) throw ConfigError("unit_ball_volume: need d >= 1");
  const double x = 0.5 * d;
  return std::exp(x * std::log(M_PI) - std::lgamma(1.0 + x));
}

double hard_lower_bound(double L_H, double n, int d) {
  if (!(L_H > 0.0) || n < 1.0 || d < 1) {
    throw ConfigError("hard_lower_bound: need L_H > 0, n >= 1, d >= 1");
  }
  const double vd = unit_ball_volume(d);
  return 1.0 / (2.0 * L_H * (1.0 + std::pow(2.0 * vd * n, 1.0 / d)));
}

double soft_lower_bound(double L_H, double n, int d, double lambda, double q,
                        double inf_g0_ipm) {
  if (!(lambda > 0.0)) throw ConfigError("soft_lower_bound: need lambda > 0");
  if (q < 1.0) throw ConfigError("soft_lower_bound: need q >= 1");
  if (inf_g0_ipm < 0.0) throw ConfigError("soft_lower_bound: need inf >= 0");
  const double hard = hard_lower_bound(L_H, n, d);
  const double correction =
      std::pow(inf_g0_ipm, 1.0 / q) / (L_H * std::pow(lambda, 1.0 / q));
  return hard - correction;
}

BoundReport soft_lower_bound_report(double L_H, double n, int d, double lambda,
                                    double q, double inf_g0_ipm) {
  BoundReport r;
  r.kind = BoundKind::kSoftLb;
  r.inputs = {{"L_H", L_H}, {"n", n},           {"d", double(d)},
              {"lambda", lambda}, {"q", q},     {"inf_g0_ipm", inf_g0_ipm}};
  r.value = soft_lower_bound(L_H, n, d, lambda, q, inf_g0_ipm);
  r.terms["hard_term"] = hard_lower_bound(L_H, n, d);
  r.terms["correction"] = r.terms["hard_term"] - r.value;
  if (r.value < 0.0) r.flags.push_back("vacuous");
  return r;
}

double lambda_threshold(double n, int d, double q, double inf_g0_ipm) {
  if (q < 1.0) throw ConfigError("lambda_threshold: need q >= 1");
  if (inf_g0_ipm < 0.0) throw ConfigError("lambda_threshold: need inf >= 0");
  const double vd = unit_ball_volume(d);
  const double base = 1.0 + std::pow(2.0 * vd * n, 1.0 / d);
  return std::pow(4.0, q) * std::pow(base, q) * inf_g0_ipm;
}

double inf_g0_proxy(double L_star, double sigma_star, int d, double n,
                    double c_hat) {
  if (L_star < 0.0 || sigma_star < 0.0 || c_hat < 0.0 || n < 1.0 || d < 1) {
    throw ConfigError("inf_g0_proxy: bad inputs");
  }
  return c_hat * L_star * std::sqrt(double(d)) * std::pow(n, -1.0 / d) +
         sigma_star;
}

BoundReport ub_decomposition(double oracle_ipm, double penalty_of_oracle,
                             double lambda, double sigma_star, double L_star,
                             int d, double n, double c_hat) {
  if (oracle_ipm < 0.0 || penalty_of_oracle < 0.0 || lambda < 0.0 ||
      sigma_star < 0.0 || L_star < 0.0 || c_hat < 0.0) {
    throw ConfigError("ub_decomposition: inputs must be >= 0");
  }
  BoundReport r;
  r.kind = BoundKind::kUbDecomposition;
  r.inputs = {{"oracle_ipm", oracle_ipm},
              {"penalty_of_oracle", penalty_of_oracle},
              {"lambda", lambda},
              {"sigma_star", sigma_star},
              {"L_star", L_star},
              {"d", double(d)},
              {"n", n},
              {"c_hat", c_hat}};
  r.terms["oracle_ipm_term"] = oracle_ipm;
  r.terms["penalty_term"] = lambda * penalty_of_oracle;
  r.terms["sigma_term"] = 4.0 * sigma_star;
  r.terms["rate_term"] =
      c_hat * L_star * std::sqrt(double(d)) * std::pow(n, -1.0 / d);
  r.value = r.terms["oracle_ipm_term"] + r.terms["penalty_term"] +
            r.terms["sigma_term"] + r.terms["rate_term"];
  r.notes = "c_hat is fitted empirically, not a paper constant";
  return r;
}

double recompute_value(const BoundReport& r) {
  const auto in = [&](const char* key) { return r.inputs.at(key); };
  switch (r.kind) {
    case BoundKind::kHardLb:
      return hard_lower_bound(in("L_H"), in("n"),
                              static_cast<int>(in("d")));
    case BoundKind::kSoftLb:
      return soft_lower_bound(in("L_H"), in("n"), static_cast<int>(in("d")),
                              in("lambda"), in("q"), in("inf_g0_ipm"));
    case BoundKind::kLambdaThreshold:
      return lambda_threshold(in("n"), static_cast<int>(in("d")), in("q"),
                              in("inf_g0_ipm"));
    case BoundKind::kUbDecomposition:
      return ub_decomposition(in("oracle_ipm"), in("penalty_of_oracle"),
                              in("lambda"), in("sigma_star"), in("L_star"),
                              static_cast<int>(in("d")), in("n"), in("c_hat"))
          .value;
    case BoundKind::kGaLb:
      return in("exact_cost") + in("grid_error") - in("rhs_bound");
    case BoundKind::kCoveringLb:
      return in("k") - in("k_min");
  }
  throw UsageError("recompute_value: unknown kind");
}

double ga_function(const VectorXd& x, const MatrixXd& atoms) {
  double best = 1.0;
  for (long j = 0; j < atoms.cols(); ++j) {
    best = std::min(best, (x - atoms.col(j)).norm());
  }
  return best;
}

int decisive_grid_m(int d, double bound, long atom_budget) {
  if (!(bound > 0.0)) throw ConfigError("decisive_grid_m: need bound > 0");
  const long wanted =
      static_cast<long>(std::ceil(4.0 * std::sqrt(double(d)) / bound));
  const long cap = static_cast<long>(
      std::floor(std::pow(double(atom_budget), 1.0 / d) + 1e-9));
  return static_cast<int>(std::max<long>(2, std::min(wanted, cap)));
}

BoundReport GaCheckResult::report() const {
  BoundReport r;
  r.kind = BoundKind::kGaLb;
  r.inputs = {{"exact_cost", exact_cost},
              {"grid_error", grid_error},
              {"rhs_bound", rhs_bound},
              {"mc_integral", mc_integral},
              {"grid_m", double(grid_m)}};
  r.value = margin;
  if (!ok) r.flags.push_back("violation");
  return r;
}

GaCheckResult ga_lower_bound_check(const MatrixXd& atoms,
                                   const VectorXd& weights,
                                   const GaCheckOptions& opts) {
  const int d = static_cast<int>(atoms.rows());
  const int n = static_cast<int>(atoms.cols());
  if (n < 1) throw ConfigError("ga_lower_bound_check: empty atom set");
  if (std::abs(weights.sum() - 1.0) > 1e-9) {
    throw ConfigError("ga_lower_bound_check: weights must sum to 1");
  }

  GaCheckResult res;
  Rng rng(opts.seed);
  double acc = 0.0;
  VectorXd u(d);
  for (int s = 0; s < opts.mc_samples; ++s) {
    for (int i = 0; i < d; ++i) u[i] = rng.uniform01();
    acc += ga_function(u, atoms);
  }
  res.mc_integral = acc / double(opts.mc_samples);

  res.rhs_bound = hard_lower_bound(1.0, double(n), d);
  res.grid_m = decisive_grid_m(d, res.rhs_bound, opts.grid_atom_budget);
  const auto grid = ot::grid_uniform(d, res.grid_m, opts.grid_atom_budget);
  const ot::DiscreteMeasure measure(atoms, weights);
  res.exact_cost = ot::exact_w1(grid, measure, opts.w1).cost;
  res.grid_error = std::sqrt(double(d)) / (2.0 * res.grid_m);
  res.margin = res.exact_cost + res.grid_error - res.rhs_bound;
  res.ok = res.margin >= 0.0;
  return res;
}

BoundReport CoveringCheckResult::report() const {
  BoundReport r;
  r.kind = BoundKind::kCoveringLb;
  r.inputs = {{"k", double(k)}, {"k_min", k_min}, {"mass", mass}};
  r.value = double(k) - k_min;
  if (!applicable) r.flags.push_back("mass_below_half");
  if (!ok) r.flags.push_back("violation");
  return r;
}

CoveringCheckResult covering_count_check(const std::vector<Ball>& balls, int d,
                                         const CoveringCheckOptions& opts) {
  if (balls.empty()) throw ConfigError("covering_count_check: no balls");
  if (opts.density_bound < 1.0) {
    throw ConfigError("covering_count_check: density bound must be >= 1");
  }
  double eps_max = 0.0;
  for (const auto& ball : balls) {
    if (!(ball.radius > 0.0)) {
      throw ConfigError("covering_count_check: radius must be > 0");
    }
    if (ball.center.size() != d) {
      throw ConfigError("covering_count_check: center dimension mismatch");
    }
    eps_max = std::max(eps_max, ball.radius);
  }

  CoveringCheckResult res;
  res.k = static_cast<int>(balls.size());
  res.k_min = std::pow(eps_max, -double(d)) /
              (2.0 * opts.density_bound * unit_ball_volume(d));

  Rng rng(opts.seed);
  long hits = 0;
  VectorXd u(d);
  for (int s = 0; s < opts.mc_samples; ++s) {
    for (int i = 0; i < d; ++i) u[i] = rng.uniform01();
    for (const auto& ball : balls) {
      if ((u - ball.center).norm() <= ball.radius) {
        ++hits;
        break;
      }
    }
  }
  res.mass = double(hits) / double(opts.mc_samples);
  res.applicable = res.mass >= 0.5;
  res.ok = !res.applicable || double(res.k) >= res.k_min;
  return res;
}

}  // namespace liperm::bounds
