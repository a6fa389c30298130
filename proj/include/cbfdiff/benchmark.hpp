// Benchmark protocol: for each requested method, n episodes of endpoint-
// conditioned planning through the evaluation specs, with spec satisfaction,
// score and per-step wall time aggregated into a report. Also hosts the
// local-trap scenario (a concave pocket of two overlapping ellipses across
// the start-goal line).
#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "cbfdiff/baselines.hpp"
#include "cbfdiff/config.hpp"
#include "cbfdiff/invariance.hpp"
#include "cbfdiff/io.hpp"
#include "cbfdiff/metrics.hpp"

namespace cbfdiff::harness {

enum class Method { Off, Truncate, Guided, GuidedEps, RoS, ReS, TVS };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::Off: return "off";
    case Method::Truncate: return "truncate";
    case Method::Guided: return "guided";
    case Method::GuidedEps: return "guided_eps";
    case Method::RoS: return "ros";
    case Method::ReS: return "res";
    case Method::TVS: return "tvs";
  }
  return "?";
}

inline Method method_from_name(const std::string& s) {
  for (Method m : {Method::Off, Method::Truncate, Method::Guided,
                   Method::GuidedEps, Method::RoS, Method::ReS, Method::TVS})
    if (s == method_name(m)) return m;
  throw std::invalid_argument("unknown method: " + s);
}

inline bool is_safe_method(Method m) {
  return m == Method::RoS || m == Method::ReS || m == Method::TVS;
}

struct MethodReport {
  std::string name;
  int episodes = 0;
  double s_min = 0, s_mean = 0, c_min = 0, c_mean = 0;
  double s_viol_mean = 0, c_viol_mean = 0;
  int episodes_s_violated = 0, episodes_c_violated = 0;
  double score_mean = 0, score_std = 0;
  double step_seconds = 0;  // mean wall time per reverse transition
  std::vector<std::string> truncation_unsupported;

  nlohmann::json to_json() const {
    return {{"method", name},
            {"episodes", episodes},
            {"s_spec_min", s_min},
            {"s_spec_mean", s_mean},
            {"c_spec_min", c_min},
            {"c_spec_mean", c_mean},
            {"s_viol_mean", s_viol_mean},
            {"c_viol_mean", c_viol_mean},
            {"episodes_s_violated", episodes_s_violated},
            {"episodes_c_violated", episodes_c_violated},
            {"score_mean", score_mean},
            {"score_std", score_std},
            {"time_per_step", step_seconds},
            {"truncation_unsupported", truncation_unsupported}};
  }
};

struct BenchmarkReport {
  std::vector<MethodReport> methods;
  std::uint64_t seed = 0;
  int episodes = 0;

  nlohmann::json to_json(const FileHeader& h) const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& m : methods) rows.push_back(m.to_json());
    return {{"header", header_json(h)},
            {"seed", seed},
            {"episodes", episodes},
            {"methods", rows}};
  }
};

// Everything a single bench/trap run needs besides the config.
struct RunContext {
  const diffusion::DenoiserModel* model = nullptr;
  diffusion::DiffusionSchedule sched;
  specs::NormalizationStats stats;
  double median_step_model = 0.0;
};

struct Episode {
  diffusion::Conditioning cond;  // model space
  Vec start_world, goal_world;
};

// Start/goal at jittered free-cell centers, rejected until both pins satisfy
// every evaluation spec (pair specs at zero velocity).
inline Episode sample_episode(const MazeDefinition& maze,
                              const std::vector<specs::BarrierSpec>& norm_specs,
                              const specs::NormalizationStats& stats, Rng& rng) {
  const auto cells = maze.free_cells();
  auto draw_point = [&]() {
    const Cell c = cells[rng.uniform_index(cells.size())];
    Vec p(2);
    p << c.x + 0.5 + rng.uniform(-0.3, 0.3), c.y + 0.5 + rng.uniform(-0.3, 0.3);
    return p;
  };
  auto pin_ok = [&](const Vec& world) {
    const Vec m = stats.to_model(world);
    for (const auto& s : norm_specs) {
      const auto single = s.arity == specs::SpecArity::AdjacentPair
                              ? specs::plain_variant(s)
                              : s;
      if (specs::eval_barrier(single, m) < 1e-3) return false;
    }
    return true;
  };
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Episode ep;
    ep.start_world = draw_point();
    ep.goal_world = draw_point();
    if (!pin_ok(ep.start_world) || !pin_ok(ep.goal_world)) continue;
    ep.cond.start = stats.to_model(ep.start_world);
    ep.cond.goal = stats.to_model(ep.goal_world);
    return ep;
  }
  throw std::runtime_error("could not sample spec-satisfying start/goal");
}

struct EpisodeObservation {
  Method method = Method::Off;
  int episode = 0;
  const invariance::SampleResult* safe = nullptr;  // null for baselines
  const diffusion::Trajectory* traj = nullptr;     // model space
  const Episode* scenario = nullptr;
};

using BenchmarkObserver = std::function<void(const EpisodeObservation&)>;

inline invariance::InvarianceConfig mode_config(
    const invariance::InvarianceConfig& base, Method m) {
  auto cfg = base;
  switch (m) {
    case Method::RoS: cfg.mode = invariance::Mode::RoS; break;
    case Method::ReS: cfg.mode = invariance::Mode::ReS; break;
    case Method::TVS: cfg.mode = invariance::Mode::TVS; break;
    default: cfg.mode = invariance::Mode::Off; break;
  }
  return cfg;
}

inline BenchmarkReport run_benchmark(const Config& cfg, const RunContext& ctx,
                                     const std::vector<Method>& methods,
                                     int episodes, std::uint64_t seed,
                                     bool log_barriers = false,
                                     const BenchmarkObserver& observer = {}) {
  const int H = cfg.horizon, d = 2;
  std::vector<specs::BarrierSpec> norm_specs;
  std::vector<EvalSpec> norm_eval;
  for (const auto& es : cfg.maze.eval_specs) {
    EvalSpec n = es;
    n.spec = specs::normalize_spec(es.spec, ctx.stats);
    norm_specs.push_back(n.spec);
    norm_eval.push_back(std::move(n));
  }

  // Scenarios are drawn once and shared by every method.
  Rng scenario_rng = Rng(seed).split(0xa11ce);
  std::vector<Episode> scenarios;
  for (int e = 0; e < episodes; ++e)
    scenarios.push_back(
        sample_episode(cfg.maze, norm_specs, ctx.stats, scenario_rng));

  BenchmarkReport report;
  report.seed = seed;
  report.episodes = episodes;

  for (std::size_t mi = 0; mi < methods.size(); ++mi) {
    const Method method = methods[mi];
    MethodReport mr;
    mr.name = method_name(method);
    mr.episodes = episodes;
    mr.s_min = mr.c_min = std::numeric_limits<double>::infinity();
    double score_sum = 0, score_sq = 0, time_sum = 0;
    long transitions = 0;

    for (int e = 0; e < episodes; ++e) {
      const Episode& ep = scenarios[e];
      Rng chain = Rng(seed).split((static_cast<std::uint64_t>(e) << 8) ^
                                  (0xbe9c0 + mi));
      diffusion::Trajectory traj;
      invariance::SampleResult safe_res;
      int chain_steps = ctx.sched.steps;
      const auto t0 = std::chrono::steady_clock::now();
      switch (method) {
        case Method::Off: {
          diffusion::SampleOptions opts;
          opts.clip_x0 = cfg.clip_x0;
          traj = diffusion::sample(*ctx.model, ctx.sched, ep.cond, H, d, chain,
                                   opts);
          break;
        }
        case Method::Truncate: {
          auto res = baselines::truncate_sample(*ctx.model, ctx.sched, ep.cond,
                                                norm_specs, H, d, chain,
                                                cfg.clip_x0);
          traj = std::move(res.traj);
          if (mr.truncation_unsupported.empty())
            mr.truncation_unsupported = std::move(res.unsupported);
          break;
        }
        case Method::Guided:
        case Method::GuidedEps: {
          auto g = cfg.guidance;
          if (method == Method::Guided) g.epsilon_band = 0.0;
          traj = baselines::guided_sample(*ctx.model, ctx.sched, ep.cond,
                                          norm_specs, g, H, d, chain,
                                          cfg.clip_x0);
          break;
        }
        case Method::RoS:
        case Method::ReS:
        case Method::TVS: {
          auto icfg = mode_config(cfg.inv, method);
          invariance::SafeSampleOptions opts;
          opts.log_barriers = log_barriers;
          opts.clip_x0 = cfg.clip_x0;
          safe_res = invariance::safe_sample(*ctx.model, ctx.sched, ep.cond,
                                             norm_specs, icfg, H, d, chain, opts);
          traj = safe_res.traj;
          if (method == Method::ReS) chain_steps += icfg.extra_steps;
          break;
        }
      }
      time_sum +=
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
              .count();
      transitions += chain_steps;

      auto s_sat = spec_satisfaction_class(traj, norm_eval, SpecClass::Simple);
      auto c_sat = spec_satisfaction_class(traj, norm_eval, SpecClass::Complex);
      mr.s_min = std::min(mr.s_min, s_sat.min);
      mr.c_min = std::min(mr.c_min, c_sat.min);
      mr.s_mean += s_sat.mean / episodes;
      mr.c_mean += c_sat.mean / episodes;
      mr.s_viol_mean += s_sat.viol_mean / episodes;
      mr.c_viol_mean += c_sat.viol_mean / episodes;
      if (s_sat.min < 0) ++mr.episodes_s_violated;
      if (c_sat.min < 0) ++mr.episodes_c_violated;

      const auto world = to_world(traj, ctx.stats);
      const double sc = score(world, cfg.maze, ep.goal_world, cfg.r_goal);
      score_sum += sc;
      score_sq += sc * sc;

      if (observer) {
        EpisodeObservation obs;
        obs.method = method;
        obs.episode = e;
        obs.safe = is_safe_method(method) ? &safe_res : nullptr;
        obs.traj = &traj;
        obs.scenario = &ep;
        observer(obs);
      }
    }
    mr.score_mean = score_sum / episodes;
    const double var =
        std::max(0.0, score_sq / episodes - mr.score_mean * mr.score_mean);
    mr.score_std = std::sqrt(var);
    mr.step_seconds = time_sum / double(transitions);
    report.methods.push_back(std::move(mr));
  }
  return report;
}

// ---- local trap scenario -------------------------------------------------------

struct TrapMethodReport {
  std::string name;
  int trapped_points = 0;
  int passthrough_steps = 0;
  double min_barrier = std::numeric_limits<double>::infinity();

  nlohmann::json to_json() const {
    return {{"method", name},
            {"trapped_points", trapped_points},
            {"passthrough_steps", passthrough_steps},
            {"min_barrier", min_barrier}};
  }
};

struct TrapReport {
  std::vector<TrapMethodReport> methods;
  int seeds = 0;
  double median_step_model = 0.0;

  nlohmann::json to_json(const FileHeader& h) const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& m : methods) rows.push_back(m.to_json());
    return {{"header", header_json(h)},
            {"seeds", seeds},
            {"median_step_model", median_step_model},
            {"methods", rows}};
  }
};

// A state is trapped when it hugs a spec boundary and is discontinuous with
// BOTH neighbours (gap above gap_factor times the dataset's median
// consecutive-state gap on each side). Boundary-hugging path segments and
// single hop-overs keep one small gap and are not traps; a stranded point
// pinned against the pocket while the path detours elsewhere loses both.
inline int count_trapped(const diffusion::Trajectory& traj,
                         const std::vector<specs::BarrierSpec>& norm_specs,
                         double median_step, double gap_factor,
                         double boundary_band) {
  if (norm_specs.empty()) return 0;
  const int H = traj.horizon();
  int trapped = 0;
  for (int k = 1; k < H; ++k) {
    const double gap_prev = (traj.state(k) - traj.state(k - 1)).norm();
    const double gap_next = (traj.state(k + 1) - traj.state(k)).norm();
    if (std::min(gap_prev, gap_next) <= gap_factor * median_step) continue;
    double min_b = std::numeric_limits<double>::infinity();
    for (const auto& s : norm_specs) {
      const auto single = s.arity == specs::SpecArity::AdjacentPair
                              ? specs::plain_variant(s)
                              : s;
      min_b = std::min(min_b, specs::eval_barrier(single, traj.state(k)));
    }
    if (min_b >= -1e-4 && min_b <= boundary_band) ++trapped;
  }
  return trapped;
}

inline TrapReport local_trap_scenario(const Config& cfg, const RunContext& ctx,
                                      std::uint64_t seed,
                                      const std::string& plot_dir = "") {
  const int H = cfg.horizon, d = 2;
  std::vector<specs::BarrierSpec> norm_specs;
  for (const auto& es : cfg.trap.specs)
    norm_specs.push_back(specs::normalize_spec(es.spec, ctx.stats));

  diffusion::Conditioning cond;
  cond.start = ctx.stats.to_model(cfg.trap.start);
  cond.goal = ctx.stats.to_model(cfg.trap.goal);

  TrapReport report;
  report.seeds = cfg.trap.seeds;
  report.median_step_model = ctx.median_step_model;

  // The overlapping pockets intentionally create near-anti-parallel row
  // wedges whose exact projection exceeds 64-bit certification; those steps
  // continue with the best iterate and are counted.
  auto trap_inv = cfg.inv;
  trap_inv.on_qp_failure = invariance::InvarianceConfig::OnQpFailure::PassThrough;
  trap_inv.extra_steps = cfg.trap.extra_steps;

  const Method methods[] = {Method::RoS, Method::ReS, Method::TVS};
  for (std::size_t mi = 0; mi < 3; ++mi) {
    TrapMethodReport mr;
    mr.name = method_name(methods[mi]);
    std::vector<diffusion::Trajectory> plot_trajs;
    for (int s = 0; s < cfg.trap.seeds; ++s) {
      Rng chain = Rng(seed).split((static_cast<std::uint64_t>(s) << 6) ^
                                  (0x7a9 + mi));
      auto icfg = mode_config(trap_inv, methods[mi]);
      invariance::SafeSampleOptions opts;
      opts.clip_x0 = cfg.clip_x0;
      auto res = invariance::safe_sample(*ctx.model, ctx.sched, cond, norm_specs,
                                         icfg, H, d, chain, opts);
      mr.trapped_points +=
          count_trapped(res.traj, norm_specs, ctx.median_step_model,
                        cfg.trap.gap_factor, cfg.trap.boundary_band);
      for (const auto& step : res.diag.steps)
        if (!step.qp_converged) ++mr.passthrough_steps;
      auto sat = spec_satisfaction(res.traj, norm_specs);
      mr.min_barrier = std::min(mr.min_barrier, sat.min);
      if (!plot_dir.empty() && s < 3)
        plot_trajs.push_back(to_world(res.traj, ctx.stats));
    }
    if (!plot_dir.empty()) {
      MazeDefinition overlay = cfg.maze;
      overlay.eval_specs = cfg.trap.specs;
      FileHeader h{kVersion, cfg.hash, seed};
      emit_plot(plot_dir + "/trap_" + mr.name + ".svg", overlay, plot_trajs, h);
    }
    report.methods.push_back(std::move(mr));
  }
  return report;
}

// Per-step diagnostics as one JSON record per line.
inline void save_step_log(const std::string& path,
                          const invariance::SampleDiagnostics& diag,
                          const FileHeader& h) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write step log " + path);
  out << nlohmann::json({{"header", header_json(h)}}).dump() << "\n";
  for (const auto& s : diag.steps) {
    nlohmann::json rec{{"j", s.j},
                       {"rows", s.rows},
                       {"qp_iterations", s.qp_iterations},
                       {"qp_residual", s.qp_residual},
                       {"qp_converged", s.qp_converged},
                       {"autorelaxed", s.autorelaxed},
                       {"wall_seconds", s.wall_seconds}};
    if (s.min_barrier.size() > 0) {
      rec["min_barrier"] = std::vector<double>(
          s.min_barrier.data(), s.min_barrier.data() + s.min_barrier.size());
      rec["min_margin"] = std::vector<double>(
          s.min_margin.data(), s.min_margin.data() + s.min_margin.size());
    }
    out << rec.dump() << "\n";
  }
}

}  // namespace cbfdiff::harness
