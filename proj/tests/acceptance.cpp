// Acceptance suite: every release criterion as one pass/fail line, run at the
// stated tolerances. Exit code is the number of failed criteria.
//
//  1  safety guarantee of the guarded modes on the maze benchmark
//  2  baseline failure ordering (off / truncate / guidance)
//  3  forward invariance per (k, spec) on every robust episode
//  4  exponential stabilization bound on deterministic chains
//  5  time-varying invariance (margin tracking) on every episode
//  6  relaxed-mode terminal safety after the settling phase
//  7  projection QP against closed form and independent oracles
//  8  analytic gradients against central finite differences
//  9  mode-reduction identities under a fixed seed
// 10  diffusion sanity: toy moments and decreasing training loss
// 11  per-step overhead of the guarded modes
// 12  local-trap comparison between the guarded modes

#include <chrono>
#include <cstdio>
#include <iostream>

#include "cbfdiff/cbfdiff.hpp"
#include "test_util.hpp"

using namespace cbfdiff;
using namespace cbfdiff::harness;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void report(int id, const std::string& name, bool ok, const std::string& detail) {
  std::printf("[%s] criterion %2d: %s (%s)\n", ok ? "PASS" : "FAIL", id,
              name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

// Statistics gathered while the shared 7-method benchmark runs.
struct BenchScan {
  // per-episode overall satisfaction minima / mean violations
  struct PerMethod {
    int episodes = 0;
    int episodes_min_negative = 0;
    double viol_mean_sum = 0.0;
    double worst_min = std::numeric_limits<double>::infinity();
  };
  std::map<Method, PerMethod> overall;

  long fwd_inv_counterexamples = 0;  // criterion 3 (RoS)
  long fwd_inv_entered = 0;
  double tvs_worst_margin = std::numeric_limits<double>::infinity();  // crit. 5
  double tvs_worst_final_b = std::numeric_limits<double>::infinity();
  double res_worst_final_b = std::numeric_limits<double>::infinity();  // crit. 6
  bool res_all_steps_converged = true;
  int off_in_bounds = 0;  // unguarded samples fully inside the world box

  std::vector<specs::BarrierSpec> norm_specs;
  const MazeDefinition* maze = nullptr;
  const specs::NormalizationStats* stats = nullptr;

  void observe(const EpisodeObservation& obs) {
    auto& pm = overall[obs.method];
    ++pm.episodes;
    auto sat = spec_satisfaction(*obs.traj, norm_specs);
    if (sat.min < 0.0) ++pm.episodes_min_negative;
    pm.viol_mean_sum += sat.viol_mean;
    pm.worst_min = std::min(pm.worst_min, sat.min);

    if (obs.method == Method::Off && maze && stats) {
      const auto world = to_world(*obs.traj, *stats);
      bool inside = true;
      for (int k = 0; k <= world.horizon(); ++k)
        if (world.states(k, 0) < 0.0 || world.states(k, 0) > maze->width ||
            world.states(k, 1) < 0.0 || world.states(k, 1) > maze->height)
          inside = false;
      if (inside) ++off_in_bounds;
    }

    if (obs.method == Method::RoS && obs.safe) {
      const auto& logs = obs.safe->diag.barriers;
      if (!logs.empty()) {
        const Eigen::Index K = logs[0].rows(), S = logs[0].cols();
        for (Eigen::Index s = 0; s < S; ++s)
          for (Eigen::Index k = 0; k < K; ++k) {
            bool entered = false;
            for (const auto& values : logs) {
              const double b = values(k, s);
              if (entered && b < -1e-5) ++fwd_inv_counterexamples;
              if (!entered && b >= 0.0) {
                entered = true;
                ++fwd_inv_entered;
              }
            }
          }
      }
    }
    if (obs.method == Method::TVS && obs.safe) {
      for (const auto& step : obs.safe->diag.steps)
        if (step.min_margin.size() > 0)
          tvs_worst_margin = std::min(tvs_worst_margin, step.min_margin.minCoeff());
      const auto& last = obs.safe->diag.steps.back();
      if (last.min_barrier.size() > 0)
        tvs_worst_final_b = std::min(tvs_worst_final_b, last.min_barrier.minCoeff());
    }
    if (obs.method == Method::ReS && obs.safe) {
      const auto& last = obs.safe->diag.steps.back();
      if (last.min_barrier.size() > 0)
        res_worst_final_b = std::min(res_worst_final_b, last.min_barrier.minCoeff());
      for (const auto& step : obs.safe->diag.steps)
        if (!step.qp_converged) res_all_steps_converged = false;
    }
  }
};

}  // namespace

int main() {
  const auto t_start = Clock::now();
  std::printf("acceptance suite, version %s\n", kVersion);

  // ---- shared environment: config, dataset, trained model -----------------
  nlohmann::json user{
      {"seed", 20240817},
      {"training", {{"epochs", 60}, {"batch", 64}, {"learning_rate", 1e-3}, {"adam", true}}},
  };
  auto cfg = parse_config(user);
  Rng rng(cfg.seed);
  std::printf("-- generating dataset (%d trajectories, H=%d)\n", cfg.n_traj,
              cfg.horizon);
  auto ds = generate_dataset(cfg.maze, cfg.n_traj, cfg.horizon, rng, cfg.jitter);
  auto sched = diffusion::make_schedule(cfg.steps, cfg.beta_min, cfg.beta_max);
  Rng train_rng = Rng(cfg.seed).split(0x7e41);
  auto model = diffusion::make_denoiser((cfg.horizon + 1) * 2, train_rng,
                                        cfg.hidden, cfg.time_dim, cfg.layers);
  std::printf("-- training denoiser (%d epochs)\n", cfg.training.epochs);
  const auto t_train = Clock::now();
  auto train_log = diffusion::train(model, ds.flat, sched, cfg.training, train_rng);
  std::printf("-- trained in %.1fs, loss %.4f -> %.4f\n", seconds_since(t_train),
              train_log.epoch_loss.front(), train_log.epoch_loss.back());

  RunContext ctx;
  ctx.model = &model;
  ctx.sched = sched;
  ctx.stats = ds.stats;
  ctx.median_step_model = ds.median_step_model;

  // ---- shared benchmark run over all seven methods -------------------------
  BenchScan scan;
  scan.maze = &cfg.maze;
  scan.stats = &ctx.stats;
  for (const auto& es : cfg.maze.eval_specs)
    scan.norm_specs.push_back(specs::normalize_spec(es.spec, ctx.stats));

  std::printf("-- benchmark: 7 methods x %d episodes\n", cfg.episodes);
  const auto t_bench = Clock::now();
  const std::vector<Method> all_methods = {
      Method::Off, Method::Truncate, Method::Guided, Method::GuidedEps,
      Method::RoS, Method::ReS,      Method::TVS};
  auto bench =
      run_benchmark(cfg, ctx, all_methods, cfg.episodes, cfg.seed,
                    /*log_barriers=*/true,
                    [&](const EpisodeObservation& o) { scan.observe(o); });
  const double bench_seconds = seconds_since(t_bench);
  std::printf("-- benchmark finished in %.1fs\n", bench_seconds);

  auto method_report = [&](Method m) -> const MethodReport& {
    for (const auto& r : bench.methods)
      if (r.name == method_name(m)) return r;
    throw std::logic_error("missing method in report");
  };

  // ---- criterion 1: safety guarantee --------------------------------------
  {
    const auto& ros = method_report(Method::RoS);
    const auto& res = method_report(Method::ReS);
    const auto& tvs = method_report(Method::TVS);
    double worst = std::numeric_limits<double>::infinity();
    for (const auto* r : {&ros, &res, &tvs}) {
      worst = std::min(worst, r->s_min);
      worst = std::min(worst, r->c_min);
    }
    const bool ok = worst >= -1e-5 && bench_seconds < 600.0;
    report(1, "guarded modes satisfy every spec on every episode", ok,
           "worst min b = " + fmt(worst) + ", benchmark " + fmt(bench_seconds) +
               "s < 600s");
  }

  // ---- criterion 2: baseline failure ordering ------------------------------
  {
    const auto& off = scan.overall[Method::Off];
    const auto& tr = method_report(Method::Truncate);
    const auto& g = scan.overall[Method::Guided];
    const auto& ge = scan.overall[Method::GuidedEps];
    const auto& offr = scan.overall[Method::Off];

    const double off_violation_rate =
        double(off.episodes_min_negative) / off.episodes;

    // The benchmark set holds the two position obstacles; a speed-dependent
    // pair spec cannot coexist with them under hard constraints (obstacle
    // exits can demand more velocity than the cap allows, making the
    // projection infeasible), so the unsupported-spec logging of truncation
    // is exercised on an augmented single run.
    bool pair_logged = false;
    {
      auto augmented = scan.norm_specs;
      augmented.push_back(specs::normalize_spec(
          specs::make_speed_dependent_roof(7.6, 0.8, 1), ctx.stats));
      Rng trng = Rng(cfg.seed).split(0x75c8);
      Rng scen = Rng(cfg.seed).split(0xa11ce);
      auto ep = sample_episode(cfg.maze, scan.norm_specs, ctx.stats, scen);
      auto tres = baselines::truncate_sample(model, sched, ep.cond, augmented,
                                             cfg.horizon, 2, trng, cfg.clip_x0);
      for (const auto& u : tres.unsupported)
        if (u.find("adjacent-pair") != std::string::npos) pair_logged = true;
    }

    const double off_viol = offr.viol_mean_sum / offr.episodes;
    const double g_viol = g.viol_mean_sum / g.episodes;
    const double ge_viol = ge.viol_mean_sum / ge.episodes;

    const bool ok = off_violation_rate >= 0.5 && tr.s_min >= -1e-6 &&
                    pair_logged && g_viol < off_viol && ge_viol < off_viol &&
                    g.episodes_min_negative > 0 && ge.episodes_min_negative > 0;
    report(2, "baselines fail as expected", ok,
           "off violates " + fmt(100 * off_violation_rate) +
               "% of episodes, truncate s_min = " + fmt(tr.s_min) +
               ", pair spec logged unsupported = " + (pair_logged ? "yes" : "no") +
               ", viol off/guided/guided_eps = " + fmt(off_viol) + "/" +
               fmt(g_viol) + "/" + fmt(ge_viol));
  }

  // ---- criterion 3: forward invariance -------------------------------------
  report(3, "forward invariance per (k, spec) across robust episodes",
         scan.fwd_inv_counterexamples == 0 && scan.fwd_inv_entered > 0,
         std::to_string(scan.fwd_inv_counterexamples) + " counterexamples over " +
             std::to_string(scan.fwd_inv_entered) + " entered terms");

  // ---- criterion 4: exponential stabilization ------------------------------
  {
    long violations = 0, checked = 0;
    double worst_excess = -std::numeric_limits<double>::infinity();
    for (double eps : {1.0, 0.15}) {
      auto icfg = mode_config(cfg.inv, Method::RoS);
      icfg.eps_classk = eps;
      invariance::SafeSampleOptions opts;
      opts.inject_noise = false;
      opts.log_barriers = true;
      opts.clip_x0 = cfg.clip_x0;
      for (int s = 0; s < 10; ++s) {
        Rng chain = Rng(cfg.seed).split(0xdec0 + s);
        Rng scen = Rng(cfg.seed).split(0x5ce0 + s);
        auto ep = sample_episode(cfg.maze, scan.norm_specs, ctx.stats, scen);
        auto res = invariance::safe_sample(model, sched, ep.cond, scan.norm_specs,
                                           icfg, cfg.horizon, 2, chain, opts);
        const auto& logs = res.diag.barriers;
        const int N = sched.steps;
        for (Eigen::Index spec = 0; spec < logs[0].cols(); ++spec)
          for (Eigen::Index k = 0; k < logs[0].rows(); ++k) {
            const double v_n = -logs[0](k, spec);
            if (v_n <= 0.0) continue;  // criterion covers initially violated terms
            for (std::size_t i = 1; i < logs.size(); ++i) {
              const int j = res.diag.steps[i].j;
              const double bound =
                  v_n * std::pow(1.0 - eps * icfg.delta_tau, N - j) + 1e-5;
              const double v = -logs[i](k, spec);
              ++checked;
              worst_excess = std::max(worst_excess, v - bound);
              if (v > bound) ++violations;
            }
          }
      }
    }
    report(4, "exponential stabilization bound on deterministic chains",
           violations == 0 && checked > 0,
           std::to_string(checked) + " term-steps, worst slack " +
               fmt(worst_excess));
  }

  // ---- criterion 5: time-varying invariance --------------------------------
  report(5, "time-varying margin b - gamma stays nonnegative",
         scan.tvs_worst_margin >= -1e-5 && scan.tvs_worst_final_b >= -1e-5,
         "worst margin " + fmt(scan.tvs_worst_margin) + ", worst final b " +
             fmt(scan.tvs_worst_final_b));

  // ---- criterion 6: relaxed-mode terminal safety ----------------------------
  report(6, "relaxed mode is safe after the settling phase",
         scan.res_worst_final_b >= -1e-5 && scan.res_all_steps_converged,
         "worst final b " + fmt(scan.res_worst_final_b) + ", all QP steps " +
             (scan.res_all_steps_converged ? "converged" : "NOT converged"));

  // ---- criterion 7: QP correctness ------------------------------------------
  {
    Rng qrng(0x97);
    bool ok = true;
    double worst_single = 0.0;
    for (int t = 0; t < 1000; ++t) {
      const int dim = 1 + static_cast<int>(qrng.uniform_index(8));
      Vec u_nom = qrng.normal_vec(dim);
      qp::ConstraintRow row;
      row.block0 = 0;
      row.a0 = qrng.normal_vec(dim);
      row.rhs = qrng.normal();
      qp::ProjectionProblem p;
      p.block_size = dim;
      p.u_nom = u_nom;
      p.rows = {row};
      auto sol = qp::solve_projection(p, 1e-12);
      Vec ref = qp::closed_form_single(u_nom, row, dim);
      const double err = (sol.u - ref).lpNorm<Eigen::Infinity>();
      worst_single = std::max(worst_single, err);
      if (err >= 1e-9) ok = false;
    }

    double worst_kkt = 0.0, worst_gap = 0.0;
    for (int t = 0; t < 1000; ++t) {
      const int dim = 2 + static_cast<int>(qrng.uniform_index(7));   // 2..8
      const int m = 2 + static_cast<int>(qrng.uniform_index(11));    // 2..12
      const Vec witness = qrng.normal_vec(dim);
      qp::ProjectionProblem p;
      p.block_size = dim;
      p.u_nom = qrng.normal_vec(dim);
      for (int i = 0; i < m; ++i) {
        qp::ConstraintRow row;
        row.block0 = 0;
        row.a0 = qrng.normal_vec(dim);
        const double slack = qrng.uniform() < 0.4 ? 0.0 : std::abs(qrng.normal());
        row.rhs = row.a0.dot(witness) - slack;
        p.rows.push_back(std::move(row));
      }
      auto sol = qp::solve_projection(p, 1e-9, 200000);
      const double kkt = qp::kkt_residual(p, sol);
      worst_kkt = std::max(worst_kkt, kkt);
      if (!sol.converged || kkt >= 1e-8) ok = false;
      auto d = testutil::densify(p);
      Vec oracle = testutil::oracle_projected_gradient(d, 1e-10);
      const double gap = std::abs(testutil::qp_objective(d, sol.u) -
                                  testutil::qp_objective(d, oracle));
      worst_gap = std::max(worst_gap, gap);
      if (gap >= 1e-6) ok = false;
    }
    report(7, "projection QP matches closed form and oracle", ok,
           "worst single-row err " + fmt(worst_single) + ", worst KKT " +
               fmt(worst_kkt) + ", worst objective gap " + fmt(worst_gap));
  }

  // ---- criterion 8: gradient exactness ---------------------------------------
  {
    Rng grng(88);
    bool ok = true;
    double worst = 0.0;
    auto probe_spec = [&](const specs::BarrierSpec& s) {
      for (int t = 0; t < 100; ++t) {
        if (s.arity == specs::SpecArity::SingleState) {
          Vec x = grng.normal_vec(2) * 1.5;
          Vec g = specs::eval_gradient(s, x);
          Vec fd = testutil::fd_gradient(
              [&](const Vec& p) { return specs::eval_barrier(s, p); }, x);
          for (int i = 0; i < 2; ++i) {
            const double e = testutil::rel_err(g[i], fd[i]);
            worst = std::max(worst, e);
            if (e >= 1e-5) ok = false;
          }
        } else {
          Vec xk = grng.normal_vec(2), xk1 = grng.normal_vec(2);
          auto [gk, gk1] = specs::eval_gradient(s, xk, xk1);
          Vec fdk = testutil::fd_gradient(
              [&](const Vec& p) { return specs::eval_barrier(s, p, xk1); }, xk);
          Vec fdk1 = testutil::fd_gradient(
              [&](const Vec& p) { return specs::eval_barrier(s, xk, p); }, xk1);
          for (int i = 0; i < 2; ++i) {
            worst = std::max({worst, testutil::rel_err(gk[i], fdk[i]),
                              testutil::rel_err(gk1[i], fdk1[i])});
            if (testutil::rel_err(gk[i], fdk[i]) >= 1e-5 ||
                testutil::rel_err(gk1[i], fdk1[i]) >= 1e-5)
              ok = false;
          }
        }
      }
    };
    Vec c2 = grng.normal_vec(2), a2(2);
    a2 << 0.8, 1.3;
    probe_spec(specs::make_ellipse(c2, a2));
    probe_spec(specs::make_quartic_superellipse(c2, a2));
    probe_spec(specs::make_roof(0.7, 1));
    probe_spec(specs::make_speed_dependent_roof(0.7, 0.6, 1));
    for (const auto& r : specs::make_joint_box(Vec::Constant(2, -0.7),
                                               Vec::Constant(2, 0.9)))
      probe_spec(r);
    for (const auto& r : specs::make_speed_dependent_box(
             Vec::Constant(2, -0.7), Vec::Constant(2, 0.9), 0.4))
      probe_spec(r);

    // Denoiser parameter gradients on the production architecture (scaled
    // width to keep finite differences fast).
    Rng mrng(89);
    auto small = diffusion::make_denoiser(10, mrng, 24, 8, 3);
    Vec x = mrng.normal_vec(10), target = mrng.normal_vec(10);
    diffusion::DenoiserCache cache;
    Vec out = diffusion::denoiser_forward(small, x, 3, &cache);
    auto grads = diffusion::make_gradients(small);
    diffusion::denoiser_backward(small, cache, 2.0 * (out - target), grads);
    auto loss_at = [&](const diffusion::DenoiserModel& mm) {
      Vec o = diffusion::denoiser_forward(mm, x, 3);
      return (o - target).squaredNorm();
    };
    for (int t = 0; t < 120; ++t) {
      const std::size_t l = mrng.uniform_index(small.W.size());
      const double h = 1e-6;
      diffusion::DenoiserModel mp = small, mm2 = small;
      double analytic;
      if (mrng.uniform() < 0.8) {
        const Eigen::Index r = mrng.uniform_index(small.W[l].rows());
        const Eigen::Index c = mrng.uniform_index(small.W[l].cols());
        mp.W[l](r, c) += h;
        mm2.W[l](r, c) -= h;
        analytic = grads.dW[l](r, c);
      } else {
        const Eigen::Index r = mrng.uniform_index(small.b[l].size());
        mp.b[l][r] += h;
        mm2.b[l][r] -= h;
        analytic = grads.db[l][r];
      }
      const double fd = (loss_at(mp) - loss_at(mm2)) / (2.0 * h);
      const double e = testutil::rel_err(analytic, fd);
      worst = std::max(worst, e);
      if (e >= 1e-5) ok = false;
    }
    report(8, "analytic gradients match finite differences", ok,
           "worst relative error " + fmt(worst));
  }

  // ---- criterion 9: mode-reduction identities ---------------------------------
  {
    Rng scen = Rng(cfg.seed).split(0x91de);
    auto ep = sample_episode(cfg.maze, scan.norm_specs, ctx.stats, scen);
    const int H = cfg.horizon;

    // Manual chain driver with an optional externally supplied gamma.
    auto drive = [&](invariance::Mode mode, const invariance::GammaSchedule* gm,
                     const std::vector<specs::BarrierSpec>& sp,
                     invariance::InvarianceConfig icfg, std::uint64_t seed) {
      icfg.mode = mode;
      Rng chain(seed);
      diffusion::Trajectory tau = diffusion::unflatten(
          chain.normal_vec(static_cast<Eigen::Index>(H + 1) * 2), H, 2);
      std::optional<diffusion::Conditioning> cond = ep.cond;
      diffusion::apply_pins(tau, cond);
      for (int j = sched.steps - 1; j >= 0; --j)
        tau = invariance::safe_denoise_step(model, tau, j, sched, icfg, sp, gm,
                                            cond, chain, nullptr, true,
                                            cfg.clip_x0);
      return tau;
    };

    invariance::GammaSchedule zero;
    zero.steps = sched.steps;
    zero.gamma_n = Mat::Zero(H + 1, static_cast<Eigen::Index>(scan.norm_specs.size()));

    auto base = cfg.inv;
    auto ros = drive(invariance::Mode::RoS, nullptr, scan.norm_specs, base, 424242);
    auto tvs0 = drive(invariance::Mode::TVS, &zero, scan.norm_specs, base, 424242);
    const double d_tvs = (ros.states - tvs0.states).lpNorm<Eigen::Infinity>();

    auto res_cfg = base;
    res_cfg.w_max = 0.0;
    auto res0 = drive(invariance::Mode::ReS, nullptr, scan.norm_specs, res_cfg, 424242);
    const double d_res = (ros.states - res0.states).lpNorm<Eigen::Infinity>();

    // Empty spec sets reduce to Off for every mode.
    double d_empty = 0.0;
    Rng off_rng(777);
    invariance::InvarianceConfig off_cfg = base;
    off_cfg.mode = invariance::Mode::Off;
    auto off_res = invariance::safe_sample(model, sched, ep.cond, {}, off_cfg, H,
                                           2, off_rng);
    for (auto mode : {invariance::Mode::RoS, invariance::Mode::ReS,
                      invariance::Mode::TVS}) {
      auto icfg = base;
      icfg.mode = mode;
      Rng r(777);
      auto out = invariance::safe_sample(model, sched, ep.cond, {}, icfg, H, 2, r);
      d_empty = std::max(
          d_empty, (out.traj.states - off_res.traj.states).lpNorm<Eigen::Infinity>());
    }
    const bool ok = d_tvs < 1e-12 && d_res < 1e-12 && d_empty < 1e-12;
    report(9, "mode-reduction identities hold under a fixed seed", ok,
           "tvs(gamma=0) diff " + fmt(d_tvs) + ", res(w=0) diff " + fmt(d_res) +
               ", empty-spec diff " + fmt(d_empty));
  }

  // ---- criterion 10: diffusion sanity ------------------------------------------
  {
    // Toy 2D Gaussian with correlated components.
    Rng toy_rng(4242);
    const int n = 4000;
    Mat toy(n, 2);
    for (int i = 0; i < n; ++i) {
      const double z1 = toy_rng.normal(), z2 = toy_rng.normal();
      toy(i, 0) = 0.15 + 0.40 * z1;
      toy(i, 1) = -0.10 + 0.20 * z1 + 0.28 * z2;
    }
    Vec dmean = toy.colwise().mean().transpose();
    Mat centered = toy.rowwise() - dmean.transpose();
    Mat dcov = centered.transpose() * centered / double(n);

    auto toy_sched = diffusion::make_schedule(64, 1e-4 * 1000 / 64.0,
                                              std::min(0.2, 2e-2 * 1000 / 64.0));
    auto toy_model = diffusion::make_denoiser(2, toy_rng, 64, 16, 3);
    diffusion::TrainOptions topts;
    topts.epochs = 400;
    topts.batch_size = 64;
    topts.learning_rate = 2e-3;
    topts.adam = true;
    diffusion::train(toy_model, toy, toy_sched, topts, toy_rng);

    const int ns = 10000;
    Mat samples(ns, 2);
    for (int i = 0; i < ns; ++i) {
      auto t = diffusion::sample(toy_model, toy_sched, std::nullopt, 0, 2, toy_rng);
      samples.row(i) = t.states.row(0);
    }
    Vec smean = samples.colwise().mean().transpose();
    Mat scentered = samples.rowwise() - smean.transpose();
    Mat scov = scentered.transpose() * scentered / double(ns);

    bool ok = true;
    double worst_mean = 0.0, worst_cov_rel = 0.0;
    for (int i = 0; i < 2; ++i) {
      worst_mean = std::max(worst_mean, std::abs(smean[i] - dmean[i]));
      if (std::abs(smean[i] - dmean[i]) >= 0.1) ok = false;
      for (int jj = 0; jj < 2; ++jj) {
        const double rel = std::abs(scov(i, jj) - dcov(i, jj)) /
                           std::abs(dcov(i, jj));
        worst_cov_rel = std::max(worst_cov_rel, rel);
        if (rel >= 0.10) ok = false;
      }
    }

    // Training loss strictly decreases over the first 10 epochs of the maze run.
    bool decreasing = train_log.epoch_loss.size() >= 10;
    for (int e = 1; e < 10 && decreasing; ++e)
      if (!(train_log.epoch_loss[e] < train_log.epoch_loss[e - 1]))
        decreasing = false;
    if (!decreasing) ok = false;
    // And the trained maze model keeps its samples inside the world box.
    const double in_bounds_frac =
        double(scan.off_in_bounds) / scan.overall[Method::Off].episodes;
    if (in_bounds_frac < 0.9) ok = false;
    report(10, "diffusion sanity: toy moments and decreasing loss", ok,
           "worst |mean err| " + fmt(worst_mean) + ", worst cov rel err " +
               fmt(worst_cov_rel) + ", first-10-epoch loss " +
               (decreasing ? "strictly decreasing" : "NOT decreasing") +
               ", samples in bounds " + fmt(100 * in_bounds_frac) + "%");
  }

  // ---- criterion 11: overhead ----------------------------------------------------
  {
    const double off_t = method_report(Method::Off).step_seconds;
    double worst_ratio = 0.0;
    for (Method m : {Method::RoS, Method::ReS, Method::TVS})
      worst_ratio = std::max(worst_ratio, method_report(m).step_seconds / off_t);
    report(11, "guarded-step overhead below the soft ceiling", worst_ratio < 50.0,
           "worst overhead factor " + fmt(worst_ratio) + "x (off " +
               fmt(off_t * 1e3) + " ms/step)");
  }

  // ---- criterion 12: local trap ---------------------------------------------------
  {
    auto trap = local_trap_scenario(cfg, ctx, cfg.seed);
    int ros_n = -1, res_n = -1, tvs_n = -1;
    double ros_min = 0;
    for (const auto& m : trap.methods) {
      if (m.name == "ros") {
        ros_n = m.trapped_points;
        ros_min = m.min_barrier;
      }
      if (m.name == "res") res_n = m.trapped_points;
      if (m.name == "tvs") tvs_n = m.trapped_points;
    }
    const bool ok = res_n <= ros_n && tvs_n <= ros_n && ros_min >= -1e-5;
    report(12, "relaxed and time-varying modes escape local traps", ok,
           "trapped ros/res/tvs = " + std::to_string(ros_n) + "/" +
               std::to_string(res_n) + "/" + std::to_string(tvs_n) +
               ", ros min b " + fmt(ros_min));
  }

  std::printf("acceptance finished in %.1fs: %d criteria failed\n",
              seconds_since(t_start), g_failures);
  return g_failures;
}
