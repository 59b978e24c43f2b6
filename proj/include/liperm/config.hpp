#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "liperm/common.hpp"
#include "liperm/nets.hpp"
#include "liperm/train.hpp"

namespace liperm::cli {

enum class ExperimentKind {
  kSpiral,
  kGmmSweep,
  kRateStudy,
  kBoundsVerify,
  kTrainSingle,
};

std::string experiment_name(ExperimentKind k);
ExperimentKind experiment_from_name(const std::string& s);

// Parses the TOML subset used by the shipped configs (tables, dotted
// sections, strings, numbers, booleans, possibly-nested arrays, comments)
// into the same JSON document shape the JSON configs use.
nlohmann::json toml_to_json(const std::string& text);

// Dispatches on the file extension: .toml uses the TOML reader, everything
// else is parsed as JSON.
nlohmann::json load_config_file(const std::string& path);

struct GmmSpec {
  Eigen::MatrixXd means;  // D x K, data frame
  double covariance_scale = 2.0;
  Eigen::VectorXd mixture_weights;
  double box_lo = -4.0;  // data-frame box mapped onto [0,1]^D
  double box_hi = 12.0;

  double scale() const { return box_hi - box_lo; }
  void validate() const;
  // Truncated mixture sample, rescaled into the unit box; counts rejected
  // draws if asked.
  ot::DiscreteMeasure sample(int n, std::uint64_t seed,
                             long* rejected = nullptr) const;
};

struct SpiralSpec {
  double r0 = 0.05;
  double r_growth = 0.4;
  double theta_rate = 3.0 * M_PI;
  double jitter = 0.0;  // sigma of ambient Gaussian noise (sigma* > 0 runs)
  int n_arrows = 64;
  std::vector<double> lambdas{0.0, 4.0, 16.0};

  // Point on the curve for latent value t in [0,1].
  Eigen::Vector2d curve(double t) const;
  ot::DiscreteMeasure sample(int n, std::uint64_t seed) const;
};

struct RateStudySpec {
  int d = 3;
  std::vector<int> n_grid{32, 64, 128, 256};
  int trials = 20;
  int grid_m = 22;
};

struct BoundsVerifySpec {
  int num_point_sets = 50;
  std::vector<int> dims{2, 3};
  int n_min = 8;
  int n_max = 256;
  int covering_trials = 100;
  int covering_mc = 100'000;
  int ga_trials = 20;
  long grid_atom_budget = 20'000;
  // Negative-control hook: multiplies every right-hand side by 10 so the
  // suite must fail.
  bool inject_violation = false;
};

struct EvalSpec {
  int m_eval = 2048;
  int heatmap_points = 65'536;
  int probe_steps = 400;
  int probe_mc_samples = 256;
  double probe_lr = 2e-3;
  int grid_m = 32;
  long max_ot_atoms = 2048;
};

struct BoundInputsSpec {
  double c_hat = 0.6;      // from a rate study run
  double L_star = 3.0;     // assumed; not derivable from data
  double sigma_star = 0.0;
  bool g_star_in_g0 = true;  // proxy applies only if the oracle has zero penalty
};

struct HeatmapSpec {
  int bins = 64;
  double lo = 0.0;
  double hi = 1.0;
};

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::kGmmSweep;
  std::string output_dir = "out";
  std::vector<std::uint64_t> seeds{1};
  int d = 2;
  int D = 2;
  bool allow_d_eq_D = false;
  int n_train = 256;
  std::vector<double> lambda_grid{0, 1, 2, 4, 8, 16};
  double q = 2.0;
  double lambda_single = 1.0;  // train_single
  std::string data_source = "gmm";  // gmm | spiral | csv
  std::string data_csv;

  train::LipermObjectiveConfig train_cfg;
  train::ArchSpec arch;
  EvalSpec eval;
  GmmSpec gmm;
  SpiralSpec spiral;
  RateStudySpec rate;
  BoundsVerifySpec verify;
  BoundInputsSpec bound_inputs;
  HeatmapSpec heatmap;

  // Optional run filters (sweep isolation / reruns).
  std::vector<double> only_lambdas;
  std::vector<std::uint64_t> only_seeds;

  void validate() const;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::string& path);

}  // namespace liperm::cli
