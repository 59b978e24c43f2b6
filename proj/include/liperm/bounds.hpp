#pragma once

#include <map>
#include <string>
#include <vector>

#include "liperm/measure.hpp"
#include "liperm/ot.hpp"

namespace liperm::bounds {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class BoundKind {
  kHardLb,
  kSoftLb,
  kLambdaThreshold,
  kUbDecomposition,
  kGaLb,
  kCoveringLb,
};

// Evaluated closed-form bound with its inputs; the value is recomputable
// from the inputs alone, bit-exactly.
struct BoundReport {
  BoundKind kind = BoundKind::kHardLb;
  std::map<std::string, double> inputs;
  std::map<std::string, double> terms;  // itemized addends where applicable
  double value = 0.0;
  std::vector<std::string> flags;
  std::string notes;

  std::string to_json_string() const;
  static BoundReport from_json_string(const std::string& text);
};

std::string bound_kind_name(BoundKind k);
BoundKind bound_kind_from_name(const std::string& s);

// Re-evaluates the report's formula from its stored inputs.
double recompute_value(const BoundReport& report);

// Volume of the d-dimensional Euclidean unit ball, pi^{d/2}/Gamma(1+d/2),
// evaluated through log-gamma.
double unit_ball_volume(int d);

// 1 / (2 L_H (1 + (2 V_d n)^{1/d}))
double hard_lower_bound(double L_H, double n, int d);

// hard - inf^{1/q} / (L_H lambda^{1/q}); may be negative (vacuous).
double soft_lower_bound(double L_H, double n, int d, double lambda, double q,
                        double inf_g0_ipm);
BoundReport soft_lower_bound_report(double L_H, double n, int d, double lambda,
                                    double q, double inf_g0_ipm);

// 4^q (1 + (2 V_d n)^{1/d})^q * inf; a lambda at or above this guarantees
// an expected diversity gap of at least hard_lower_bound / 2.
double lambda_threshold(double n, int d, double q, double inf_g0_ipm);

// c_hat L* sqrt(d) n^{-1/d} + sigma*; upper proxy for the infimum over the
// zero-penalty class, valid when the oracle generator has zero penalty.
double inf_g0_proxy(double L_star, double sigma_star, int d, double n,
                    double c_hat);

BoundReport ub_decomposition(double oracle_ipm, double penalty_of_oracle,
                             double lambda, double sigma_star, double L_star,
                             int d, double n, double c_hat);

// min(1, min_{a in A} ||x - a||); 1-Lipschitz by construction. An empty A
// yields 1.
double ga_function(const VectorXd& x, const MatrixXd& atoms);

struct GaCheckOptions {
  int mc_samples = 100'000;
  std::uint64_t seed = 1;
  long grid_atom_budget = 20'000;
  ot::ExactW1Options w1;
};

struct GaCheckResult {
  double mc_integral = 0.0;    // MC estimate of the g_A integral under U_d
  double exact_cost = 0.0;     // exact W1(grid U_d, sum w_i delta_{a_i})
  double grid_error = 0.0;     // sqrt(d)/(2m)
  double rhs_bound = 0.0;      // 1/(2 + 2(2 V_d n)^{1/d})
  double margin = 0.0;         // exact + grid_error - rhs
  int grid_m = 0;
  bool ok = false;
  BoundReport report() const;
};

GaCheckResult ga_lower_bound_check(const MatrixXd& atoms,
                                   const VectorXd& weights,
                                   const GaCheckOptions& opts = {});

struct Ball {
  VectorXd center;
  double radius = 0.0;
};

struct CoveringCheckOptions {
  int mc_samples = 100'000;
  std::uint64_t seed = 1;
  double density_bound = 1.0;  // b, the density's sup (1 for uniform)
};

struct CoveringCheckResult {
  double mass = 0.0;     // MC union mass under U_d
  int k = 0;             // number of balls
  double k_min = 0.0;    // eps^{-d} / (2 b V_d)
  bool applicable = false;  // mass >= 1/2
  bool ok = false;          // !applicable || k >= k_min
  BoundReport report() const;
};

CoveringCheckResult covering_count_check(const std::vector<Ball>& balls, int d,
                                         const CoveringCheckOptions& opts = {});

// Decisive grid resolution for a semi-discrete comparison against a bound:
// ceil(4 sqrt(d) / bound) capped by the atom budget (and at least 2).
int decisive_grid_m(int d, double bound, long atom_budget);

}  // namespace liperm::bounds
