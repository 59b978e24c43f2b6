#pragma once

#include <optional>
#include <string>
#include <vector>

#include "liperm/bounds.hpp"
#include "liperm/config.hpp"
#include "liperm/rate_study.hpp"
#include "liperm/train.hpp"

namespace liperm::cli {

// bins x bins cell masses normalized by total weight; atoms outside
// [lo, hi]^2 are dropped. Row-major: cell (row, col) = (bin of x1, bin of x2).
std::vector<double> heatmap_grid(const ot::DiscreteMeasure& mu, int bins,
                                 double lo, double hi);

// CSV with header `row,col,freq`, exactly bins^2 data rows.
void write_heatmap_csv(const std::string& path,
                       const std::vector<double>& grid, int bins);

struct RunArtifacts {
  double lambda = 0.0;
  std::uint64_t seed = 0;
  std::string tag;
  bool degenerate = false;
  bool failed = false;
  std::string message;
  train::EvalResult eval;
  double encoder_cert = 0.0;  // trained encoder's certified constant
  double hard_lb = 0.0;
  double soft_lb = 0.0;  // NaN when lambda == 0 (theorem needs lambda > 0)
  double lambda_threshold = 0.0;
};

struct SweepResult {
  std::vector<RunArtifacts> runs;
  int succeeded = 0;
};

// Appendix-B lambda sweep on the rescaled 3-component GMM.
SweepResult run_gmm_sweep(const ExperimentConfig& cfg);

// 1D-latent spiral runs at the configured lambdas plus a degenerate
// constant-generator run (the infinite-penalty panel).
SweepResult run_spiral(const ExperimentConfig& cfg);

struct RateArtifacts {
  ot::RateStudyResult study;
  double c_hat = 0.0;
};

RateArtifacts run_rate_study(const ExperimentConfig& cfg);

struct VerifyResult {
  bool passed = false;
  int num_checks = 0;
  int num_failed = 0;
};

VerifyResult run_bounds_verify(const ExperimentConfig& cfg);

RunArtifacts run_train_single(const ExperimentConfig& cfg);

// Dispatch + exit-code mapping: 0 ok, 1 config error, 2 verification
// failure, 3 training divergence.
int run_experiment(const ExperimentConfig& cfg);

}  // namespace liperm::cli
