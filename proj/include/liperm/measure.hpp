#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "liperm/common.hpp"
#include "liperm/rng.hpp"

namespace liperm::ot {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Weighted point cloud in [0,1]^D; columns of `points` are atoms. Weights
// are nonnegative and sum to 1 within 1e-12; coordinates stay in the unit
// box — clamping is an explicit caller decision, never silent.
class DiscreteMeasure {
 public:
  DiscreteMeasure() = default;
  DiscreteMeasure(MatrixXd points, VectorXd weights);

  static DiscreteMeasure dirac(const VectorXd& point);
  // Equal weights 1/N over the given columns.
  static DiscreteMeasure uniform_atoms(MatrixXd points);

  int dim() const { return static_cast<int>(points_.rows()); }
  int size() const { return static_cast<int>(points_.cols()); }
  const MatrixXd& points() const { return points_; }
  const VectorXd& weights() const { return weights_; }

  // Merges atoms closer than `tol` (Euclidean) and sums their weights.
  DiscreteMeasure deduplicated(double tol = 1e-12) const;

  // k atoms drawn with replacement proportionally to weight, each 1/k.
  DiscreteMeasure subsample(int k, Rng& rng) const;

  // CSV with header `w,x1,...,xD`, one atom per row, 17 significant digits.
  void save_csv(const std::string& path) const;
  static DiscreteMeasure load_csv(const std::string& path);
  void write_csv(std::ostream& os) const;
  static DiscreteMeasure read_csv(std::istream& is);

 private:
  MatrixXd points_;
  VectorXd weights_;
};

inline constexpr long kDefaultGridAtomCap = 1L << 20;

// m^d cell-center atoms with equal weights; W1(grid, U_d) <= sqrt(d)/(2m).
DiscreteMeasure grid_uniform(int d, int m, long atom_cap = kDefaultGridAtomCap);

// n i.i.d. uniform atoms with weight 1/n, deterministic per seed.
DiscreteMeasure sample_uniform(int d, int n, std::uint64_t seed);

// Clamps every coordinate into [0,1]; explicit by design.
DiscreteMeasure clamp_to_unit_box(const DiscreteMeasure& mu);

}  // namespace liperm::ot
