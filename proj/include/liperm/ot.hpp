#pragma once

#include <vector>

#include "liperm/measure.hpp"

namespace liperm::ot {

// Sparse optimal coupling between two measures. Row marginals equal the
// source weights and column marginals the target weights within 1e-9;
// cost is the mass-weighted sum of Euclidean ground distances.
struct TransportPlan {
  struct Flow {
    int source = 0;
    int target = 0;
    double mass = 0.0;
  };
  std::vector<Flow> flows;
  double cost = 0.0;
};

struct ExactW1Options {
  // Resource cap on |support(mu)| * |support(nu)|.
  long max_support_product = 32'000'000;
  // Entering-arc eligibility threshold for the simplex pivot.
  double pivot_tolerance = 1e-12;
  // Post-solve dual feasibility sweep; certifies optimality to ~1e-9.
  bool verify_optimality = true;
};

struct W1Result {
  double cost = 0.0;
  TransportPlan plan;
};

// Exact Wasserstein-1 distance under the Euclidean ground metric, solved by
// network simplex on the full bipartite transportation graph.
W1Result exact_w1(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                  const ExactW1Options& opts = {});

}  // namespace liperm::ot
