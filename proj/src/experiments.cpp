#include "liperm/experiments.hpp"

#include <atomic>
#include <cmath>
#include <filesystem>
#include <limits>
#include <nlohmann/json.hpp>
#include <sstream>
#include <thread>

#include "liperm/io_util.hpp"
#include "liperm/ot.hpp"

namespace liperm::cli {

using nlohmann::json;
using ot::DiscreteMeasure;

namespace {

constexpr std::uint64_t kDataStream = 201;
constexpr std::uint64_t kEvalStream = 202;
constexpr std::uint64_t kHeatmapStream = 203;

std::string run_tag(double lambda, std::uint64_t seed, bool degenerate) {
  if (degenerate) return "degenerate_seed" + std::to_string(seed);
  return "lam" + format_g17(lambda) + "_seed" + std::to_string(seed);
}

std::filesystem::path out_path(const ExperimentConfig& cfg,
                               const std::string& name) {
  return std::filesystem::path(cfg.output_dir) / name;
}

void parallel_for_tasks(int count, const std::function<void(int)>& fn) {
  const int workers = std::max(
      1, std::min<int>(static_cast<int>(std::thread::hardware_concurrency()),
                       std::min(count, 4)));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (true) {
        const int i = next.fetch_add(1);
        if (i >= count) break;
        fn(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

train::EvalOptions eval_options(const ExperimentConfig& cfg,
                                std::uint64_t seed) {
  train::EvalOptions opts;
  opts.m_eval = cfg.eval.m_eval;
  opts.grid_m = cfg.eval.grid_m;
  opts.probe_widths = cfg.arch.enc_widths;
  opts.hidden = cfg.arch.hidden;
  opts.L_H = cfg.arch.L_H;
  opts.q = cfg.q;
  opts.probe_steps = cfg.eval.probe_steps;
  opts.probe_mc_samples = cfg.eval.probe_mc_samples;
  opts.probe_lr = cfg.eval.probe_lr;
  opts.seed = derive_seed(seed, kEvalStream);
  return opts;
}

struct RunContext {
  const ExperimentConfig& cfg;
  DiscreteMeasure data;
  train::PStarSampler sampler;  // may be empty
};

// Train one (lambda, seed) point, evaluate it, and write its artifacts.
RunArtifacts execute_run(const RunContext& ctx, double lambda,
                         std::uint64_t seed, bool degenerate) {
  const ExperimentConfig& cfg = ctx.cfg;
  RunArtifacts art;
  art.lambda = lambda;
  art.seed = seed;
  art.degenerate = degenerate;
  art.tag = run_tag(lambda, seed, degenerate);

  train::LipermObjectiveConfig tcfg = cfg.train_cfg;
  tcfg.lambda = lambda;
  tcfg.q = cfg.q;
  tcfg.seed = seed;

  nets::MlpNetwork g, h, f;
  train::TrainingTrace trace;
  if (degenerate) {
    // Forced constant generator, zero iterations: the infinite-penalty
    // panel of the latent-collapse trichotomy.
    g = nets::make_generator(cfg.d, cfg.D, cfg.arch.gen_widths,
                             cfg.arch.gen_mode, derive_seed(seed, 101),
                             cfg.arch.hidden);
    g.params().values.setZero();
    h = nets::make_encoder(cfg.D, cfg.d, cfg.arch.enc_widths, cfg.arch.L_H,
                           derive_seed(seed, 102), cfg.arch.hidden);
    f = nets::make_critic(cfg.D, cfg.arch.critic_widths,
                          derive_seed(seed, 103), cfg.arch.hidden);
  } else {
    auto result = train::train(ctx.data, tcfg, cfg.arch);
    g = std::move(result.g);
    h = std::move(result.h);
    f = std::move(result.f);
    trace = std::move(result.trace);
  }

  trace.save_csv(out_path(cfg, "trace_" + art.tag + ".csv").string());
  if (trace.diverged) {
    art.failed = true;
    art.message = trace.message;
    art.hard_lb = art.soft_lb = art.lambda_threshold =
        std::numeric_limits<double>::quiet_NaN();
    art.eval.diversity_gap = std::numeric_limits<double>::quiet_NaN();
    art.eval.penalty_value = std::numeric_limits<double>::quiet_NaN();
    return art;
  }

  g.save(out_path(cfg, "checkpoint_" + art.tag + "_g.json").string());
  h.save(out_path(cfg, "checkpoint_" + art.tag + "_h.json").string());
  f.save(out_path(cfg, "checkpoint_" + art.tag + "_f.json").string());

  auto opts = eval_options(cfg, seed);
  opts.w1.max_support_product =
      static_cast<long>(cfg.eval.max_ot_atoms) * cfg.eval.max_ot_atoms * 4;
  art.eval = train::evaluate_generator(
      g, ctx.data, ctx.sampler ? &ctx.sampler : nullptr, opts);
  art.encoder_cert = nets::certify_lipschitz(h).product_bound;

  if (cfg.D == 2) {
    const auto big_latents = ot::sample_uniform(
        cfg.d, cfg.eval.heatmap_points, derive_seed(seed, kHeatmapStream));
    const auto push = nets::pushforward(g, big_latents);
    const auto grid =
        heatmap_grid(push, cfg.heatmap.bins, cfg.heatmap.lo, cfg.heatmap.hi);
    write_heatmap_csv(out_path(cfg, "heatmap_" + art.tag + ".csv").string(),
                      grid, cfg.heatmap.bins);
  }

  const double n = cfg.n_train;
  const double inf_proxy = bounds::inf_g0_proxy(
      cfg.bound_inputs.L_star, cfg.bound_inputs.sigma_star, cfg.d, n,
      cfg.bound_inputs.c_hat);
  art.hard_lb = bounds::hard_lower_bound(art.encoder_cert, n, cfg.d);
  art.soft_lb = lambda > 0.0
                    ? bounds::soft_lower_bound(art.encoder_cert, n, cfg.d,
                                               lambda, cfg.q, inf_proxy)
                    : std::numeric_limits<double>::quiet_NaN();
  art.lambda_threshold =
      bounds::lambda_threshold(n, cfg.d, cfg.q, inf_proxy);
  return art;
}

std::string nan_safe(double v) { return format_g17(v); }

void write_summary_csv(const ExperimentConfig& cfg,
                       const std::vector<RunArtifacts>& runs) {
  std::ostringstream os;
  os << "lambda,seed,diversity_gap,accuracy,penalty,hard_lb,soft_lb,"
        "lambda_threshold\n";
  for (const auto& r : runs) {
    const double acc = r.eval.accuracy.value_or(
        std::numeric_limits<double>::quiet_NaN());
    os << format_g17(r.lambda) << "," << r.seed << ","
       << nan_safe(r.eval.diversity_gap) << "," << nan_safe(acc) << ","
       << nan_safe(r.eval.penalty_value) << "," << nan_safe(r.hard_lb) << ","
       << nan_safe(r.soft_lb) << "," << nan_safe(r.lambda_threshold) << "\n";
  }
  atomic_write_file(out_path(cfg, "summary.csv").string(), os.str());
}

void write_bounds_json(const ExperimentConfig& cfg,
                       const std::vector<RunArtifacts>& runs) {
  json j;
  j["c_hat"] = cfg.bound_inputs.c_hat;
  j["L_star"] = cfg.bound_inputs.L_star;
  j["sigma_star"] = cfg.bound_inputs.sigma_star;
  j["data_frame_scale"] =
      cfg.experiment == ExperimentKind::kGmmSweep ? cfg.gmm.scale() : 1.0;
  j["inf_g0_proxy"] = bounds::inf_g0_proxy(
      cfg.bound_inputs.L_star, cfg.bound_inputs.sigma_star, cfg.d,
      cfg.n_train, cfg.bound_inputs.c_hat);
  if (!cfg.bound_inputs.g_star_in_g0) j["flags"] = {"unproxied"};

  j["runs"] = json::array();
  for (const auto& r : runs) {
    json run;
    run["lambda"] = r.lambda;
    run["seed"] = r.seed;
    run["tag"] = r.tag;
    run["failed"] = r.failed;
    if (r.failed) {
      run["message"] = r.message;
      j["runs"].push_back(run);
      continue;
    }
    run["encoder_cert"] = r.encoder_cert;
    run["probe_encoder_cert"] = r.eval.encoder_cert;
    run["diversity_gap"] = r.eval.diversity_gap;
    if (r.eval.accuracy) run["accuracy"] = *r.eval.accuracy;
    run["penalty_value"] = r.eval.penalty_value;

    bounds::BoundReport hard;
    hard.kind = bounds::BoundKind::kHardLb;
    hard.inputs = {{"L_H", r.encoder_cert},
                   {"n", double(cfg.n_train)},
                   {"d", double(cfg.d)}};
    hard.value = r.hard_lb;
    run["hard_lb"] = json::parse(hard.to_json_string());

    if (r.lambda > 0.0) {
      auto soft = bounds::soft_lower_bound_report(
          r.encoder_cert, cfg.n_train, cfg.d, r.lambda, cfg.q,
          json(j["inf_g0_proxy"]).get<double>());
      if (!cfg.bound_inputs.g_star_in_g0) soft.flags.push_back("unproxied");
      run["soft_lb"] = json::parse(soft.to_json_string());
    }
    run["lambda_threshold"] = r.lambda_threshold;
    j["runs"].push_back(run);
  }
  atomic_write_file(out_path(cfg, "bounds.json").string(), j.dump(2));
}

bool run_selected(const ExperimentConfig& cfg, double lambda,
                  std::uint64_t seed) {
  if (!cfg.only_lambdas.empty()) {
    bool hit = false;
    for (double l : cfg.only_lambdas) hit = hit || l == lambda;
    if (!hit) return false;
  }
  if (!cfg.only_seeds.empty()) {
    bool hit = false;
    for (auto s : cfg.only_seeds) hit = hit || s == seed;
    if (!hit) return false;
  }
  return true;
}

}  // namespace

std::vector<double> heatmap_grid(const DiscreteMeasure& mu, int bins,
                                 double lo, double hi) {
  if (mu.dim() != 2) throw ConfigError("heatmap: measure must be 2D");
  if (bins < 1) throw ConfigError("heatmap: bins must be >= 1");
  std::vector<double> grid(static_cast<size_t>(bins) * bins, 0.0);
  const double span = hi - lo;
  for (int i = 0; i < mu.size(); ++i) {
    const double x = mu.points()(0, i);
    const double y = mu.points()(1, i);
    if (x < lo || x > hi || y < lo || y > hi) continue;
    int r = static_cast<int>((x - lo) / span * bins);
    int c = static_cast<int>((y - lo) / span * bins);
    if (r == bins) r = bins - 1;  // atoms exactly at the upper edge
    if (c == bins) c = bins - 1;
    grid[static_cast<size_t>(r) * bins + c] += mu.weights()[i];
  }
  return grid;
}

void write_heatmap_csv(const std::string& path,
                       const std::vector<double>& grid, int bins) {
  std::ostringstream os;
  os << "row,col,freq\n";
  for (int r = 0; r < bins; ++r) {
    for (int c = 0; c < bins; ++c) {
      os << r << "," << c << ","
         << format_g17(grid[static_cast<size_t>(r) * bins + c]) << "\n";
    }
  }
  atomic_write_file(path, os.str());
}

SweepResult run_gmm_sweep(const ExperimentConfig& cfg) {
  struct Task {
    double lambda;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (double lambda : cfg.lambda_grid) {
    for (auto seed : cfg.seeds) {
      if (run_selected(cfg, lambda, seed)) tasks.push_back({lambda, seed});
    }
  }

  // Data and the P* sampler are shared per seed so lambda is the only
  // difference inside a seed's column of the sweep.
  std::vector<RunArtifacts> runs(tasks.size());
  parallel_for_tasks(static_cast<int>(tasks.size()), [&](int i) {
    const auto& t = tasks[static_cast<size_t>(i)];
    RunContext ctx{cfg,
                   cfg.gmm.sample(cfg.n_train, derive_seed(t.seed, kDataStream)),
                   [&cfg](int n, std::uint64_t s) {
                     return cfg.gmm.sample(n, s);
                   }};
    runs[static_cast<size_t>(i)] = execute_run(ctx, t.lambda, t.seed, false);
  });

  write_summary_csv(cfg, runs);
  write_bounds_json(cfg, runs);

  SweepResult result;
  result.runs = std::move(runs);
  for (const auto& r : result.runs) {
    if (!r.failed) ++result.succeeded;
  }
  return result;
}

namespace {

void write_arrow_table(const ExperimentConfig& cfg,
                       const nets::MlpNetwork& g, const std::string& tag) {
  const int n = cfg.spiral.n_arrows;
  Eigen::MatrixXd u(1, n);
  for (int i = 0; i < n; ++i) {
    u(0, i) = n == 1 ? 0.0 : double(i) / double(n - 1);
  }
  const Eigen::MatrixXd out = g.eval(u);
  std::ostringstream os;
  os << "u,gx,gy\n";
  for (int i = 0; i < n; ++i) {
    os << format_g17(u(0, i)) << "," << format_g17(out(0, i)) << ","
       << format_g17(out(1, i)) << "\n";
  }
  atomic_write_file(out_path(cfg, "arrows_" + tag + ".csv").string(), os.str());
}

}  // namespace

SweepResult run_spiral(const ExperimentConfig& cfg) {
  if (cfg.d != 1 || cfg.D != 2) {
    throw ConfigError("spiral: requires d = 1, D = 2");
  }
  struct Task {
    double lambda;
    std::uint64_t seed;
    bool degenerate;
  };
  std::vector<Task> tasks;
  for (double lambda : cfg.spiral.lambdas) {
    for (auto seed : cfg.seeds) {
      if (run_selected(cfg, lambda, seed)) tasks.push_back({lambda, seed, false});
    }
  }
  for (auto seed : cfg.seeds) {
    if (cfg.only_lambdas.empty() &&
        (cfg.only_seeds.empty() || run_selected(cfg, 0.0, seed))) {
      tasks.push_back({0.0, seed, true});
    }
  }

  std::vector<RunArtifacts> runs(tasks.size());
  parallel_for_tasks(static_cast<int>(tasks.size()), [&](int i) {
    const auto& t = tasks[static_cast<size_t>(i)];
    RunContext ctx{cfg,
                   cfg.spiral.sample(cfg.n_train, derive_seed(t.seed, kDataStream)),
                   [&cfg](int n, std::uint64_t s) {
                     return cfg.spiral.sample(n, s);
                   }};
    runs[static_cast<size_t>(i)] =
        execute_run(ctx, t.lambda, t.seed, t.degenerate);
    // arrow table for every run, degenerate included
    const auto& art = runs[static_cast<size_t>(i)];
    if (!art.failed) {
      const auto g = nets::MlpNetwork::load(
          out_path(cfg, "checkpoint_" + art.tag + "_g.json").string());
      write_arrow_table(cfg, g, art.tag);
    }
  });

  write_summary_csv(cfg, runs);
  write_bounds_json(cfg, runs);

  SweepResult result;
  result.runs = std::move(runs);
  for (const auto& r : result.runs) {
    if (!r.failed) ++result.succeeded;
  }
  return result;
}

RateArtifacts run_rate_study(const ExperimentConfig& cfg) {
  RateArtifacts art;
  art.study = ot::empirical_rate_study(cfg.rate.d, cfg.rate.n_grid,
                                       cfg.rate.trials, cfg.rate.grid_m,
                                       cfg.seeds.front());
  art.c_hat = ot::fit_c_hat(art.study);

  std::ostringstream os;
  os << "n,mean_w1,std_w1\n";
  for (const auto& row : art.study.rows) {
    os << row.n << "," << format_g17(row.mean_w1) << ","
       << format_g17(row.std_w1) << "\n";
  }
  atomic_write_file(out_path(cfg, "rate_study.csv").string(), os.str());

  json meta;
  meta["d"] = art.study.d;
  meta["grid_m"] = art.study.grid_m;
  meta["trials"] = art.study.trials;
  meta["seed"] = cfg.seeds.front();
  meta["slope"] = art.study.slope;
  meta["c_hat"] = art.c_hat;
  meta["low_dim_flagged"] = art.study.low_dim_flagged;
  atomic_write_file(out_path(cfg, "rate_meta.json").string(), meta.dump(2));
  return art;
}

VerifyResult run_bounds_verify(const ExperimentConfig& cfg) {
  const auto& v = cfg.verify;
  const double rhs_factor = v.inject_violation ? 10.0 : 1.0;
  json checks = json::array();
  int failed = 0;

  const auto push_check = [&](const std::string& name, bool pass, json extra) {
    extra["name"] = name;
    extra["pass"] = pass;
    checks.push_back(extra);
    if (!pass) ++failed;
  };

  Rng rng(cfg.seeds.front());

  // Empirical point sets vs the hard lower bound (the assertable core of
  // the appendix proposition).
  for (int rep = 0; rep < v.num_point_sets; ++rep) {
    const int d =
        v.dims[static_cast<size_t>(rng.below(v.dims.size()))];
    const double log_n = rng.uniform(std::log(double(v.n_min)),
                                     std::log(double(v.n_max)));
    const int n = std::max(1, static_cast<int>(std::lround(std::exp(log_n))));
    const auto sample = ot::sample_uniform(d, n, rng.next_u64());
    const double hard = bounds::hard_lower_bound(1.0, n, d);
    const int m = bounds::decisive_grid_m(d, hard, v.grid_atom_budget);
    const auto grid = ot::grid_uniform(d, m);
    const double w1 = ot::exact_w1(grid, sample).cost;
    const double grid_err = std::sqrt(double(d)) / (2.0 * m);
    const double margin = w1 + grid_err - hard * rhs_factor;
    push_check("hard_lb_point_set", margin >= 0.0,
               {{"d", d},
                {"n", n},
                {"grid_m", m},
                {"exact_w1", w1},
                {"grid_error", grid_err},
                {"rhs", hard * rhs_factor},
                {"margin", margin}});
  }

  // Random weighted atom sets through the g_A machinery.
  for (int rep = 0; rep < v.ga_trials; ++rep) {
    const int d = v.dims[static_cast<size_t>(rng.below(v.dims.size()))];
    const int n = 1 + static_cast<int>(rng.below(32));
    Eigen::MatrixXd atoms(d, n);
    for (long i = 0; i < atoms.size(); ++i) atoms.data()[i] = rng.uniform01();
    Eigen::VectorXd w(n);
    for (int i = 0; i < n; ++i) w[i] = rng.uniform(0.01, 1.0);
    w /= w.sum();
    bounds::GaCheckOptions opts;
    opts.mc_samples = 20'000;
    opts.seed = rng.next_u64();
    opts.grid_atom_budget = v.grid_atom_budget;
    auto res = bounds::ga_lower_bound_check(atoms, w, opts);
    const double margin =
        res.exact_cost + res.grid_error - res.rhs_bound * rhs_factor;
    push_check("ga_lower_bound", margin >= 0.0 && res.mc_integral >= 0.0,
               {{"d", d},
                {"n", n},
                {"mc_integral", res.mc_integral},
                {"exact_w1", res.exact_cost},
                {"grid_error", res.grid_error},
                {"rhs", res.rhs_bound * rhs_factor},
                {"margin", margin}});
  }

  // Covering families at mass >= 1/2.
  for (int rep = 0; rep < v.covering_trials; ++rep) {
    const double eps = rng.uniform(0.08, 0.25);
    std::vector<bounds::Ball> balls;
    bounds::CoveringCheckOptions opts;
    opts.mc_samples = v.covering_mc;
    opts.seed = rng.next_u64();
    bounds::CoveringCheckResult res;
    for (int k = 0; k < 400; ++k) {
      bounds::Ball b;
      b.center = Eigen::VectorXd(2);
      b.center << rng.uniform01(), rng.uniform01();
      b.radius = eps;
      balls.push_back(std::move(b));
      res = bounds::covering_count_check(balls, 2, opts);
      if (res.applicable) break;
    }
    const bool pass =
        res.applicable && double(res.k) >= res.k_min * rhs_factor;
    push_check("covering_count", pass,
               {{"eps", eps},
                {"k", res.k},
                {"k_min", res.k_min * rhs_factor},
                {"mass", res.mass}});
  }

  // Formula cross-checks (identities; the injection hook does not apply).
  for (int d = 3; d <= 10; ++d) {
    const double direct = bounds::unit_ball_volume(d);
    const double recur = 2.0 * M_PI / d * bounds::unit_ball_volume(d - 2);
    push_check("v_d_recurrence", std::abs(direct - recur) <= 1e-12 * recur,
               {{"d", d}, {"direct", direct}, {"recurrence", recur}});
  }
  {
    const double hard = bounds::hard_lower_bound(1.0, 256, 2);
    double prev = -1e300;
    bool monotone = true;
    for (double lam : {0.5, 1.0, 2.0, 8.0, 64.0, 1e4, 1e8}) {
      const double s = bounds::soft_lower_bound(1.0, 256, 2, lam, 2.0, 0.02);
      monotone = monotone && s >= prev && s <= hard;
      prev = s;
    }
    push_check("soft_to_hard_monotone", monotone, {{"hard", hard}});
  }

  json report;
  report["checks"] = checks;
  report["num_checks"] = static_cast<int>(checks.size());
  report["num_failed"] = failed;
  report["passed"] = failed == 0;
  report["inject_violation"] = v.inject_violation;
  atomic_write_file(out_path(cfg, "bounds.json").string(), report.dump(2));

  VerifyResult res;
  res.passed = failed == 0;
  res.num_checks = static_cast<int>(checks.size());
  res.num_failed = failed;
  return res;
}

RunArtifacts run_train_single(const ExperimentConfig& cfg) {
  const auto seed = cfg.seeds.front();
  RunContext ctx{cfg, DiscreteMeasure(), {}};
  if (cfg.data_source == "gmm") {
    ctx.data = cfg.gmm.sample(cfg.n_train, derive_seed(seed, kDataStream));
    ctx.sampler = [&cfg](int n, std::uint64_t s) { return cfg.gmm.sample(n, s); };
  } else if (cfg.data_source == "spiral") {
    ctx.data = cfg.spiral.sample(cfg.n_train, derive_seed(seed, kDataStream));
    ctx.sampler = [&cfg](int n, std::uint64_t s) {
      return cfg.spiral.sample(n, s);
    };
  } else if (cfg.data_source == "csv") {
    ctx.data = DiscreteMeasure::load_csv(cfg.data_csv);
  } else {
    throw ConfigError("train_single: unknown data source " + cfg.data_source);
  }

  auto art = execute_run(ctx, cfg.lambda_single, seed, false);
  write_summary_csv(cfg, {art});
  write_bounds_json(cfg, {art});
  return art;
}

int run_experiment(const ExperimentConfig& cfg) {
  std::filesystem::create_directories(cfg.output_dir);
  switch (cfg.experiment) {
    case ExperimentKind::kGmmSweep: {
      const auto res = run_gmm_sweep(cfg);
      return res.succeeded > 0 ? 0 : 3;
    }
    case ExperimentKind::kSpiral: {
      const auto res = run_spiral(cfg);
      return res.succeeded > 0 ? 0 : 3;
    }
    case ExperimentKind::kRateStudy:
      run_rate_study(cfg);
      return 0;
    case ExperimentKind::kBoundsVerify:
      return run_bounds_verify(cfg).passed ? 0 : 2;
    case ExperimentKind::kTrainSingle: {
      const auto art = run_train_single(cfg);
      return art.failed ? 3 : 0;
    }
  }
  return 1;
}

}  // namespace liperm::cli
