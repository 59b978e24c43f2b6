#include "liperm/ot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace liperm::ot {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Network simplex for the uncapacitated transportation problem on a full
// bipartite graph plus an artificial root. The spanning tree is kept
// strongly feasible (Cunningham's rule: among blocking arcs, the last one
// met when traversing the cycle from the join in the entering direction
// leaves), which prevents cycling under the heavy degeneracy of
// equal-weight supports.
class TransportSimplex {
 public:
  TransportSimplex(const MatrixXd& xs, const VectorXd& a, const MatrixXd& ys,
                   const VectorXd& b, double tol)
      : m_(static_cast<int>(xs.cols())),
        n_(static_cast<int>(ys.cols())),
        root_(m_ + n_),
        tol_(tol) {
    const long arcs = static_cast<long>(m_) * n_;
    cost_.resize(arcs);
    double max_cost = 0.0;
    for (int i = 0; i < m_; ++i) {
      for (int j = 0; j < n_; ++j) {
        const double c = (xs.col(i) - ys.col(j)).norm();
        cost_[static_cast<size_t>(i) * n_ + j] = c;
        max_cost = std::max(max_cost, c);
      }
    }
    art_cost_ = 1.0 + 2.0 * max_cost;

    flow_.assign(static_cast<size_t>(arcs) + m_ + n_, 0.0);
    in_tree_.assign(static_cast<size_t>(arcs) + m_ + n_, false);

    const int nodes = m_ + n_ + 1;
    pi_.resize(nodes);
    parent_.assign(nodes, -1);
    pred_arc_.assign(nodes, -1);
    pred_up_.assign(nodes, false);
    first_child_.assign(nodes, -1);
    next_sib_.assign(nodes, -1);
    prev_sib_.assign(nodes, -1);
    stamp_.assign(nodes, -1);

    // Initial strongly feasible tree: every node hangs off the root via its
    // artificial arc; sources point up, sinks point down.
    for (int k = 0; k < m_ + n_; ++k) {
      const long a_id = arcs + k;
      const bool is_source = k < m_;
      flow_[static_cast<size_t>(a_id)] = is_source ? a[k] : b[k - m_];
      in_tree_[static_cast<size_t>(a_id)] = true;
      parent_[k] = root_;
      pred_arc_[k] = a_id;
      pred_up_[k] = is_source;
      pi_[k] = is_source ? -art_cost_ : art_cost_;
      attach_child(root_, k);
    }
    pi_[root_] = 0.0;
  }

  void solve() {
    const long arcs = static_cast<long>(m_) * n_;
    const long total_arcs = arcs + m_ + n_;
    const long block =
        std::max<long>(64, static_cast<long>(std::sqrt(double(total_arcs))));
    long next_arc = 0;
    const long pivot_cap = 20'000'000;
    long pivots = 0;

    long best_arc = -1;
    double best_red = 0.0;

    // Scans [lo, lo+len) without wrapping; bipartite arcs are walked with
    // incremental row/column indices to avoid per-arc div/mod.
    const auto scan_chunk = [&](long lo, long len) {
      long a = lo;
      const long end = lo + len;
      if (a < arcs) {
        int i = static_cast<int>(a / n_);
        int j = static_cast<int>(a % n_);
        const long bip_end = std::min(end, arcs);
        const double* pi_sink = pi_.data() + m_;
        while (a < bip_end) {
          const double pt = pi_[i];
          const double* cost_row = cost_.data() + static_cast<size_t>(i) * n_;
          const long row_end = std::min(bip_end, a + (n_ - j));
          for (; a < row_end; ++a, ++j) {
            if (!in_tree_[static_cast<size_t>(a)]) {
              const double r = cost_row[j] + pt - pi_sink[j];
              if (r < best_red) {
                best_red = r;
                best_arc = a;
              }
            }
          }
          if (j == n_) {
            j = 0;
            ++i;
          }
        }
      }
      for (; a < end; ++a) {
        if (!in_tree_[static_cast<size_t>(a)]) {
          const double r = reduced_cost(a);
          if (r < best_red) {
            best_red = r;
            best_arc = a;
          }
        }
      }
    };

    while (true) {
      // Block search: take the most negative arc from the first block (of
      // size ~sqrt(#arcs)) that contains an eligible one.
      best_arc = -1;
      best_red = -tol_;
      long pos = next_arc;
      long remaining = total_arcs;
      while (remaining > 0) {
        const long len = std::min(block, remaining);
        const long first = std::min(len, total_arcs - pos);
        scan_chunk(pos, first);
        if (first < len) scan_chunk(0, len - first);
        remaining -= len;
        pos += len;
        if (pos >= total_arcs) pos -= total_arcs;
        if (best_arc >= 0) break;
      }
      if (best_arc < 0) break;
      next_arc = (best_arc + 1) % total_arcs;
      pivot(best_arc);
      if (++pivots > pivot_cap) {
        throw std::runtime_error("exact_w1: pivot cap exceeded");
      }
    }
  }

  double arc_cost(long a) const {
    return a < static_cast<long>(m_) * n_ ? cost_[static_cast<size_t>(a)]
                                          : art_cost_;
  }

  int arc_tail(long a) const {
    const long arcs = static_cast<long>(m_) * n_;
    if (a < arcs) return static_cast<int>(a / n_);
    const int k = static_cast<int>(a - arcs);
    return k < m_ ? k : root_;
  }

  int arc_head(long a) const {
    const long arcs = static_cast<long>(m_) * n_;
    if (a < arcs) return m_ + static_cast<int>(a % n_);
    const int k = static_cast<int>(a - arcs);
    return k < m_ ? root_ : k;
  }

  double reduced_cost(long a) const {
    return arc_cost(a) + pi_[arc_tail(a)] - pi_[arc_head(a)];
  }

  double total_cost() const {
    const long arcs = static_cast<long>(m_) * n_;
    double c = 0.0;
    for (long a = 0; a < arcs; ++a) {
      if (flow_[static_cast<size_t>(a)] != 0.0) {
        c += flow_[static_cast<size_t>(a)] * cost_[static_cast<size_t>(a)];
      }
    }
    return c;
  }

  double max_artificial_flow() const {
    const long arcs = static_cast<long>(m_) * n_;
    double mx = 0.0;
    for (long a = arcs; a < arcs + m_ + n_; ++a) {
      mx = std::max(mx, flow_[static_cast<size_t>(a)]);
    }
    return mx;
  }

  // Largest violation of dual feasibility / complementary slackness.
  double dual_violation() const {
    const long total = static_cast<long>(m_) * n_ + m_ + n_;
    double worst = 0.0;
    for (long a = 0; a < total; ++a) {
      const double r = reduced_cost(a);
      if (in_tree_[static_cast<size_t>(a)]) {
        worst = std::max(worst, std::abs(r));
      } else {
        worst = std::max(worst, -r);
      }
    }
    return worst;
  }

  TransportPlan extract_plan() const {
    const long arcs = static_cast<long>(m_) * n_;
    TransportPlan plan;
    for (long a = 0; a < arcs; ++a) {
      const double f = flow_[static_cast<size_t>(a)];
      if (f > 0.0) {
        plan.flows.push_back({static_cast<int>(a / n_),
                              static_cast<int>(a % n_), f});
        plan.cost += f * cost_[static_cast<size_t>(a)];
      }
    }
    return plan;
  }

 private:
  void attach_child(int p, int v) {
    next_sib_[v] = first_child_[p];
    prev_sib_[v] = -1;
    if (first_child_[p] >= 0) prev_sib_[first_child_[p]] = v;
    first_child_[p] = v;
  }

  void detach_child(int p, int v) {
    if (prev_sib_[v] >= 0) {
      next_sib_[prev_sib_[v]] = next_sib_[v];
    } else {
      first_child_[p] = next_sib_[v];
    }
    if (next_sib_[v] >= 0) prev_sib_[next_sib_[v]] = prev_sib_[v];
  }

  int find_join(int u, int v) {
    ++stamp_counter_;
    for (int w = u; w != -1; w = parent_[w]) stamp_[w] = stamp_counter_;
    for (int w = v; w != -1; w = parent_[w]) {
      if (stamp_[w] == stamp_counter_) return w;
    }
    throw std::runtime_error("exact_w1: disconnected tree");
  }

  void pivot(long e) {
    const int u = arc_tail(e);
    const int v = arc_head(e);
    const double red = reduced_cost(e);
    const int join = find_join(u, v);

    // Leaving arc: blocking arcs on the tail side are those pointing up,
    // on the head side those pointing down. Strict `<` on the tail walk
    // and `<=` on the head walk give Cunningham's last-blocking rule.
    double delta = kInf;
    int out_node = -1;
    bool out_on_tail_side = true;
    for (int w = u; w != join; w = parent_[w]) {
      if (pred_up_[w] && flow_[static_cast<size_t>(pred_arc_[w])] < delta) {
        delta = flow_[static_cast<size_t>(pred_arc_[w])];
        out_node = w;
        out_on_tail_side = true;
      }
    }
    for (int w = v; w != join; w = parent_[w]) {
      if (!pred_up_[w] && flow_[static_cast<size_t>(pred_arc_[w])] <= delta) {
        delta = flow_[static_cast<size_t>(pred_arc_[w])];
        out_node = w;
        out_on_tail_side = false;
      }
    }
    if (out_node < 0) {
      throw std::runtime_error("exact_w1: unbounded pivot");
    }

    // Push delta around the cycle.
    if (delta != 0.0) {
      flow_[static_cast<size_t>(e)] += delta;
      for (int w = u; w != join; w = parent_[w]) {
        flow_[static_cast<size_t>(pred_arc_[w])] +=
            pred_up_[w] ? -delta : delta;
      }
      for (int w = v; w != join; w = parent_[w]) {
        flow_[static_cast<size_t>(pred_arc_[w])] +=
            pred_up_[w] ? delta : -delta;
      }
    }
    const long leaving = pred_arc_[out_node];
    flow_[static_cast<size_t>(leaving)] = 0.0;  // exact, avoids drift
    in_tree_[static_cast<size_t>(leaving)] = false;
    in_tree_[static_cast<size_t>(e)] = true;

    // Re-root the detached subtree at the entering arc's endpoint inside it
    // and hang it under the other endpoint.
    const int q = out_on_tail_side ? u : v;
    const int attach_to = out_on_tail_side ? v : u;

    path_.clear();
    for (int w = q; w != out_node; w = parent_[w]) path_.push_back(w);
    path_.push_back(out_node);

    detach_child(parent_[out_node], out_node);
    for (size_t i = path_.size(); i-- > 1;) {
      detach_child(path_[i], path_[i - 1]);
    }

    int prev = attach_to;
    long prev_arc = e;
    bool prev_up = (q == arc_tail(e));
    for (int w : path_) {
      const long old_arc = pred_arc_[w];
      const bool old_up = pred_up_[w];
      parent_[w] = prev;
      pred_arc_[w] = prev_arc;
      pred_up_[w] = prev_up;
      attach_child(prev, w);
      prev = w;
      prev_arc = old_arc;
      prev_up = !old_up;
    }

    // The detached subtree's potentials shift so the entering arc's reduced
    // cost becomes zero.
    const double shift = out_on_tail_side ? -red : red;
    dfs_stack_.clear();
    dfs_stack_.push_back(q);
    while (!dfs_stack_.empty()) {
      const int w = dfs_stack_.back();
      dfs_stack_.pop_back();
      pi_[w] += shift;
      for (int c = first_child_[w]; c >= 0; c = next_sib_[c]) {
        dfs_stack_.push_back(c);
      }
    }
  }

  int m_;
  int n_;
  int root_;
  double tol_;
  double art_cost_ = 0.0;

  std::vector<double> cost_;
  std::vector<double> flow_;
  std::vector<char> in_tree_;

  std::vector<double> pi_;
  std::vector<int> parent_;
  std::vector<long> pred_arc_;
  std::vector<bool> pred_up_;
  std::vector<int> first_child_;
  std::vector<int> next_sib_;
  std::vector<int> prev_sib_;
  std::vector<int> stamp_;
  long stamp_counter_ = 0;

  std::vector<int> path_;
  std::vector<int> dfs_stack_;
};

// Drops zero-weight atoms (they cannot carry flow and would break the
// strong feasibility of the initial tree).
void compact_support(const DiscreteMeasure& mu, MatrixXd& pts, VectorXd& w,
                     std::vector<int>& original_index) {
  int kept = 0;
  for (int i = 0; i < mu.size(); ++i) {
    if (mu.weights()[i] > 0.0) ++kept;
  }
  if (kept == 0) throw ConfigError("exact_w1: measure has no mass");
  pts.resize(mu.dim(), kept);
  w.resize(kept);
  original_index.clear();
  original_index.reserve(static_cast<size_t>(kept));
  int j = 0;
  for (int i = 0; i < mu.size(); ++i) {
    if (mu.weights()[i] > 0.0) {
      pts.col(j) = mu.points().col(i);
      w[j] = mu.weights()[i];
      original_index.push_back(i);
      ++j;
    }
  }
}

double kahan_sum(const VectorXd& v) {
  double s = 0.0, c = 0.0;
  for (long i = 0; i < v.size(); ++i) {
    const double y = v[i] - c;
    const double t = s + y;
    c = (t - s) - y;
    s = t;
  }
  return s;
}

}  // namespace

W1Result exact_w1(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                  const ExactW1Options& opts) {
  if (mu.dim() != nu.dim()) {
    throw ConfigError("exact_w1: dimension mismatch");
  }
  const long product = static_cast<long>(mu.size()) * nu.size();
  if (product > opts.max_support_product) {
    throw ResourceError("exact_w1: support product " + std::to_string(product) +
                        " exceeds cap " +
                        std::to_string(opts.max_support_product) +
                        "; subsample first");
  }

  MatrixXd xs, ys;
  VectorXd a, b;
  std::vector<int> idx_a, idx_b;
  compact_support(mu, xs, a, idx_a);
  compact_support(nu, ys, b, idx_b);

  // Balance the two sides exactly enough that artificial leftovers stay far
  // below the 1e-9 certification level.
  const double sa = kahan_sum(a);
  const double sb = kahan_sum(b);
  b *= sa / sb;
  long arg_max = 0;
  b.maxCoeff(&arg_max);
  b[arg_max] += sa - kahan_sum(b);

  TransportSimplex simplex(xs, a, ys, b, opts.pivot_tolerance);
  simplex.solve();

  if (simplex.max_artificial_flow() > 1e-9) {
    throw std::runtime_error("exact_w1: residual imbalance " +
                             std::to_string(simplex.max_artificial_flow()));
  }
  if (opts.verify_optimality) {
    const double viol = simplex.dual_violation();
    if (viol > 1e-9) {
      throw std::runtime_error("exact_w1: optimality certificate failed (" +
                               std::to_string(viol) + ")");
    }
  }

  W1Result result;
  result.plan = simplex.extract_plan();
  for (auto& f : result.plan.flows) {
    f.source = idx_a[static_cast<size_t>(f.source)];
    f.target = idx_b[static_cast<size_t>(f.target)];
  }
  result.cost = result.plan.cost;
  return result;
}

}  // namespace liperm::ot
