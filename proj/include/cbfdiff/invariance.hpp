// Barrier-certified denoising: the reverse-process transition is treated as
// controllable dynamics tau^{j} = tau^{j+1} + dtau * u^j, the nominal velocity
// u_nom = (tau^j_prop - tau^{j+1}) / dtau is projected onto the barrier
// constraint set by a minimum-deviation QP, and the corrected update is
// applied. Three constraint families are supported:
//
//   RobustSafe      grad_b . u >= -alpha(b)            hard at every step
//   RelaxedSafe     grad_b . u + alpha(b) >= w(j) r    soft early, hard by
//                                                      j <= 0, plus extra
//                                                      settling steps
//   TimeVaryingSafe grad_b . u >= gdot + alpha(gamma - b) tracks a tightening
//                                                      level gamma(j) -> 0
//
// Rows are linearized at the pre-update trajectory. Every implemented barrier
// is convex, so b(new) >= b(prev) + dtau * grad_b(prev) . u and the discrete
// chain inherits the invariance and decay bounds exactly (up to QP tolerance):
// once a state satisfies b >= 0 it stays there, and violated states contract
// at factor (1 - eps * dtau) per step.
#pragma once

#include <chrono>
#include <optional>
#include <stdexcept>
#include <vector>

#include "cbfdiff/diffusion.hpp"
#include "cbfdiff/qp.hpp"
#include "cbfdiff/specs.hpp"

namespace cbfdiff::invariance {

using diffusion::Conditioning;
using diffusion::DenoiserModel;
using diffusion::DiffusionSchedule;
using diffusion::Trajectory;
using specs::BarrierSpec;

enum class Mode { Off, RoS, ReS, TVS };

inline const char* mode_name(Mode m) {
  switch (m) {
    case Mode::Off: return "off";
    case Mode::RoS: return "ros";
    case Mode::ReS: return "res";
    case Mode::TVS: return "tvs";
  }
  return "?";
}

struct InvarianceConfig {
  Mode mode = Mode::Off;
  double eps_classk = 1.0;   // linear class-K gain, alpha(b) = eps * b
  double delta_tau = 1.0;    // diffusion time step length
  int extra_steps = 50;      // settling steps for RelaxedSafe
  double w_max = 1.0;        // relaxation weight scale
  double gamma_margin = 0.0;
  double qp_tol = 1e-9;
  int qp_max_iter = 10000;
  bool cubic_classk = false;  // alpha(b) = eps * b^3, experimental
  enum class OnQpFailure { Abort, PassThrough } on_qp_failure = OnQpFailure::Abort;

  void validate() const {
    if (!(eps_classk > 0.0)) throw std::invalid_argument("eps_classk must be > 0");
    if (!(delta_tau > 0.0)) throw std::invalid_argument("delta_tau must be > 0");
    if (extra_steps < 0) throw std::invalid_argument("extra_steps must be >= 0");
    if (w_max < 0.0) throw std::invalid_argument("w_max must be >= 0");
  }

  double alpha(double b) const {
    return cubic_classk ? eps_classk * b * b * b : eps_classk * b;
  }
};

// ---- per-planning-step barrier terms ----------------------------------------

// One (k, spec) evaluation on a trajectory. Pair specs contribute pair terms
// for k < H and their zero-velocity reduction at k = H, so every spec yields
// exactly H+1 terms.
struct BarrierTerm {
  int k = 0;
  int k1 = -1;  // second planning-state block for pair terms
  double b = 0.0;
  Vec g0;
  Vec g1;
};

inline double term_value(const BarrierSpec& s, const Trajectory& tau, int k) {
  if (s.arity == specs::SpecArity::SingleState)
    return specs::eval_barrier(s, tau.state(k));
  if (k < tau.horizon())
    return specs::eval_barrier(s, tau.state(k), tau.state(k + 1));
  return specs::eval_barrier(specs::plain_variant(s), tau.state(k));
}

inline std::vector<BarrierTerm> collect_terms(const BarrierSpec& s,
                                              const Trajectory& tau) {
  const int H = tau.horizon();
  std::vector<BarrierTerm> terms;
  terms.reserve(H + 1);
  for (int k = 0; k <= H; ++k) {
    BarrierTerm t;
    t.k = k;
    if (s.arity == specs::SpecArity::SingleState) {
      t.b = specs::eval_barrier(s, tau.state(k));
      t.g0 = specs::eval_gradient(s, tau.state(k));
    } else if (k < H) {
      t.k1 = k + 1;
      t.b = specs::eval_barrier(s, tau.state(k), tau.state(k + 1));
      auto [g0, g1] = specs::eval_gradient(s, tau.state(k), tau.state(k + 1));
      t.g0 = std::move(g0);
      t.g1 = std::move(g1);
    } else {
      const auto plain = specs::plain_variant(s);
      t.b = specs::eval_barrier(plain, tau.state(k));
      t.g0 = specs::eval_gradient(plain, tau.state(k));
    }
    terms.push_back(std::move(t));
  }
  return terms;
}

// (H+1) x n_specs matrix of barrier values.
inline Mat barrier_values(const std::vector<BarrierSpec>& sp,
                          const Trajectory& tau) {
  Mat out(tau.horizon() + 1, static_cast<Eigen::Index>(sp.size()));
  for (std::size_t s = 0; s < sp.size(); ++s)
    for (int k = 0; k <= tau.horizon(); ++k)
      out(k, static_cast<Eigen::Index>(s)) = term_value(sp[s], tau, k);
  return out;
}

// ---- diffusion dynamics ------------------------------------------------------

inline Vec diffusion_velocity(const Trajectory& tau_j,
                              const Trajectory& tau_jplus1, double delta_tau) {
  if (tau_j.states.rows() != tau_jplus1.states.rows() ||
      tau_j.states.cols() != tau_jplus1.states.cols())
    throw std::invalid_argument("trajectory shape mismatch");
  if (!(delta_tau > 0.0)) throw std::invalid_argument("delta_tau must be > 0");
  return (diffusion::flatten(tau_j) - diffusion::flatten(tau_jplus1)) / delta_tau;
}

// ---- gamma schedule (TimeVaryingSafe) ----------------------------------------

// Linear tightening level per (k, spec): gamma(N) = min(0, b at the prior
// sample) - margin, gamma(0) = 0, interpolated linearly in j.
struct GammaSchedule {
  Mat gamma_n;  // (H+1) x n_specs, values at j = N
  int steps = 0;

  double at(int k, int s, int j) const {
    const int jc = j > 0 ? j : 0;
    return gamma_n(k, s) * (double(jc) / double(steps));
  }
  bool zero() const { return gamma_n.size() == 0 || gamma_n.isZero(0.0); }
};

inline GammaSchedule init_gamma(const Trajectory& tau_n,
                                const std::vector<BarrierSpec>& sp,
                                double margin, int steps) {
  if (margin < 0.0) throw std::invalid_argument("gamma margin must be >= 0");
  GammaSchedule g;
  g.steps = steps;
  g.gamma_n.resize(tau_n.horizon() + 1, static_cast<Eigen::Index>(sp.size()));
  for (std::size_t s = 0; s < sp.size(); ++s)
    for (int k = 0; k <= tau_n.horizon(); ++k) {
      const double b = term_value(sp[s], tau_n, k);
      g.gamma_n(k, static_cast<Eigen::Index>(s)) = std::min(0.0, b) - margin;
    }
  return g;
}

// ---- constraint row builders -------------------------------------------------

struct RowBatch {
  std::vector<qp::ConstraintRow> rows;
  int relax_dim = 0;
  int autorelaxed = 0;  // vanishing-gradient rows force-relaxed (RelaxedSafe)
};

namespace detail {

struct PinMask {
  int start = -1, goal = -1;
  bool pinned(int k) const { return k == start || k == goal; }
};

inline PinMask pin_mask(const std::optional<Conditioning>& cond, int horizon) {
  PinMask m;
  if (cond) {
    m.start = 0;
    m.goal = horizon;
  }
  return m;
}

// Shared assembly: zero gradient blocks of pinned states (their velocity is
// forced by inpainting, not by the QP), drop rows that became trivially
// satisfied, keep infeasible zero-gradient rows so the solver reports them.
template <typename RhsFn>
void append_rows(RowBatch& out, const BarrierSpec& sp, const Trajectory& tau,
                 const PinMask& pins, double w, double w_forced, RhsFn rhs_of) {
  auto terms = collect_terms(sp, tau);
  for (auto& t : terms) {
    if (pins.pinned(t.k)) t.g0.setZero();
    if (t.k1 >= 0 && pins.pinned(t.k1)) t.g1.setZero();
    double nn = t.g0.squaredNorm();
    if (t.k1 >= 0) nn += t.g1.squaredNorm();
    const double rhs = rhs_of(t);
    double w_eff = w;
    if (nn == 0.0) {
      if (rhs <= 0.0) continue;  // satisfied regardless of u
      if (w_forced > 0.0 && w_eff == 0.0) {
        w_eff = w_forced;
        ++out.autorelaxed;
      }
      // hard zero-gradient rows fall through; the solver raises the error
    }
    qp::ConstraintRow row;
    row.block0 = t.k;
    row.a0 = std::move(t.g0);
    if (t.k1 >= 0) {
      row.block1 = t.k1;
      row.a1 = std::move(t.g1);
    }
    row.rhs = rhs;
    if (w_eff > 0.0) {
      row.relax_weight = w_eff;
      row.relax_index = t.k;
    }
    out.rows.push_back(std::move(row));
  }
}

}  // namespace detail

inline RowBatch build_rows_ros(const Trajectory& tau,
                               const std::vector<BarrierSpec>& sp,
                               const InvarianceConfig& cfg,
                               const detail::PinMask& pins = {}) {
  RowBatch out;
  for (const auto& s : sp)
    detail::append_rows(out, s, tau, pins, 0.0, 0.0,
                        [&](const BarrierTerm& t) { return -cfg.alpha(t.b); });
  return out;
}

// Relaxation weight w(j) = w_max * max(0, j) / N vanishes by j = 0; the
// relaxation variable is shared per planning step across specs.
inline RowBatch build_rows_res(const Trajectory& tau,
                               const std::vector<BarrierSpec>& sp,
                               const InvarianceConfig& cfg, int j, int steps,
                               const detail::PinMask& pins = {}) {
  const double w = cfg.w_max * (j > 0 ? double(j) / double(steps) : 0.0);
  const double w_forced = std::max(cfg.w_max, 1.0);
  RowBatch out;
  out.relax_dim = tau.horizon() + 1;
  for (const auto& s : sp)
    detail::append_rows(out, s, tau, pins, w, w_forced,
                        [&](const BarrierTerm& t) { return -cfg.alpha(t.b); });
  return out;
}

// Tracks b >= gamma(j): grad_b . u >= (gamma(j) - gamma(j+1))/dtau
//                                     + alpha(gamma(j+1) - b).
// gamma and b are both taken at the pre-update index j+1; the finite
// difference of gamma runs in the direction of the flow (j decreasing).
inline RowBatch build_rows_tvs(const Trajectory& tau,
                               const std::vector<BarrierSpec>& sp,
                               const InvarianceConfig& cfg,
                               const GammaSchedule& gamma, int j,
                               const detail::PinMask& pins = {}) {
  RowBatch out;
  for (std::size_t s = 0; s < sp.size(); ++s)
    detail::append_rows(out, sp[s], tau, pins, 0.0, 0.0,
                        [&](const BarrierTerm& t) {
                          const double g_cur = gamma.at(t.k, static_cast<int>(s), j + 1);
                          const double g_next = gamma.at(t.k, static_cast<int>(s), j);
                          const double gdot = (g_next - g_cur) / cfg.delta_tau;
                          return gdot - cfg.alpha(t.b - g_cur);
                        });
  return out;
}

// ---- safe reverse steps ------------------------------------------------------

struct StepDiagnostics {
  int j = 0;  // diffusion index of the produced trajectory
  Vec min_barrier;   // per spec, at the post-update states
  Vec min_margin;    // per spec, min of b - gamma(j); equals min_barrier unless TVS
  int rows = 0;
  int qp_iterations = 0;
  double qp_residual = 0.0;
  bool qp_converged = true;
  bool qp_active = false;
  int autorelaxed = 0;
  double wall_seconds = 0.0;
};

struct SampleDiagnostics {
  std::vector<StepDiagnostics> steps;  // leading entry logs the prior at j = N
  std::vector<Mat> barriers;           // filled when log_barriers is on
};

struct SafeSampleOptions {
  bool inject_noise = true;
  bool log_barriers = false;
  double clip_x0 = 0.0;  // passed through to the underlying reverse step
};

struct SampleResult {
  Trajectory traj;
  SampleDiagnostics diag;
};

struct QpFailure : std::runtime_error {
  explicit QpFailure(const std::string& msg) : std::runtime_error(msg) {}
};

// One guarded reverse transition producing the trajectory at diffusion index
// `j_target`. For settling steps (j_target < 0) the denoiser runs at index 1,
// which also injects no noise.
inline Trajectory safe_denoise_step(const DenoiserModel& model,
                                    const Trajectory& tau, int j_target,
                                    const DiffusionSchedule& sched,
                                    const InvarianceConfig& cfg,
                                    const std::vector<BarrierSpec>& sp,
                                    const GammaSchedule* gamma,
                                    const std::optional<Conditioning>& cond,
                                    Rng& rng, StepDiagnostics* diag = nullptr,
                                    bool inject_noise = true,
                                    double clip_x0 = 0.0) {
  cfg.validate();
  const int j_src = std::max(j_target + 1, 1);
  Trajectory prop =
      diffusion::denoise_step(model, tau, j_src, sched, rng,
                              inject_noise && j_target + 1 >= 1, clip_x0);
  diffusion::apply_pins(prop, cond);
  if (cfg.mode == Mode::Off || sp.empty()) return prop;

  const auto pins = detail::pin_mask(cond, tau.horizon());
  RowBatch batch;
  switch (cfg.mode) {
    case Mode::RoS:
      batch = build_rows_ros(tau, sp, cfg, pins);
      break;
    case Mode::ReS:
      batch = build_rows_res(tau, sp, cfg, j_target, sched.steps, pins);
      break;
    case Mode::TVS:
      if (!gamma) throw std::invalid_argument("TVS step needs a gamma schedule");
      batch = build_rows_tvs(tau, sp, cfg, *gamma, j_target, pins);
      break;
    case Mode::Off:
      break;
  }
  if (diag) {
    diag->rows = static_cast<int>(batch.rows.size());
    diag->autorelaxed = batch.autorelaxed;
  }
  if (batch.rows.empty()) return prop;

  qp::ProjectionProblem problem;
  problem.block_size = tau.dim();
  problem.u_nom = diffusion_velocity(prop, tau, cfg.delta_tau);
  problem.rows = std::move(batch.rows);
  problem.relax_dim = batch.relax_dim;

  auto sol = qp::solve_projection(problem, cfg.qp_tol, cfg.qp_max_iter);
  if (diag) {
    diag->qp_iterations = sol.iterations;
    diag->qp_residual = sol.kkt_residual;
    diag->qp_converged = sol.converged;
  }
  if (!sol.converged &&
      cfg.on_qp_failure == InvarianceConfig::OnQpFailure::Abort)
    throw QpFailure("projection QP did not converge at diffusion step " +
                    std::to_string(j_target) + " (residual " +
                    std::to_string(sol.kkt_residual) + ")");

  if ((sol.duals.array() == 0.0).all()) return prop;  // no active rows
  if (diag) diag->qp_active = true;

  Vec corrected = diffusion::flatten(tau) + cfg.delta_tau * sol.u;
  Trajectory out = diffusion::unflatten(corrected, tau.horizon(), tau.dim());
  diffusion::apply_pins(out, cond);
  return out;
}

// Rejects conditioning pins that violate any spec; pair specs are checked at
// zero velocity.
inline void check_pins(const std::optional<Conditioning>& cond,
                       const std::vector<BarrierSpec>& sp) {
  if (!cond) return;
  for (const auto& s : sp) {
    const auto single =
        s.arity == specs::SpecArity::AdjacentPair ? specs::plain_variant(s) : s;
    if (specs::eval_barrier(single, cond->start) < 0.0 ||
        specs::eval_barrier(single, cond->goal) < 0.0)
      throw std::invalid_argument(
          std::string("conditioning pins violate spec ") +
          specs::kind_name(s.kind));
  }
}

inline SampleResult safe_sample(const DenoiserModel& model,
                                const DiffusionSchedule& sched,
                                const std::optional<Conditioning>& cond,
                                const std::vector<BarrierSpec>& sp,
                                const InvarianceConfig& cfg, int horizon,
                                int dim, Rng& rng,
                                const SafeSampleOptions& opts = {}) {
  cfg.validate();
  check_pins(cond, sp);

  SampleResult res;
  Trajectory tau = diffusion::unflatten(
      rng.normal_vec(static_cast<Eigen::Index>(horizon + 1) * dim), horizon, dim);
  diffusion::apply_pins(tau, cond);

  GammaSchedule gamma;
  if (cfg.mode == Mode::TVS)
    gamma = init_gamma(tau, sp, cfg.gamma_margin, sched.steps);

  auto log_state = [&](int j, const StepDiagnostics& base) {
    StepDiagnostics d = base;
    d.j = j;
    if (!sp.empty()) {
      const Mat values = barrier_values(sp, tau);
      d.min_barrier = values.colwise().minCoeff().transpose();
      d.min_margin = d.min_barrier;
      if (cfg.mode == Mode::TVS) {
        Mat margins = values;
        for (Eigen::Index s = 0; s < margins.cols(); ++s)
          for (Eigen::Index k = 0; k < margins.rows(); ++k)
            margins(k, s) -= gamma.at(static_cast<int>(k), static_cast<int>(s), j);
        d.min_margin = margins.colwise().minCoeff().transpose();
      }
      if (opts.log_barriers) res.diag.barriers.push_back(values);
    }
    res.diag.steps.push_back(std::move(d));
  };

  log_state(sched.steps, {});

  // Settling steps exist to let hard constraints take over from the relaxed
  // ones; with no specs there is nothing to settle and the chain matches Off.
  const int j_last =
      cfg.mode == Mode::ReS && !sp.empty() ? -cfg.extra_steps : 0;
  for (int j = sched.steps - 1; j >= j_last; --j) {
    StepDiagnostics d;
    const auto t0 = std::chrono::steady_clock::now();
    tau = safe_denoise_step(model, tau, j, sched, cfg, sp,
                            cfg.mode == Mode::TVS ? &gamma : nullptr, cond, rng,
                            &d, opts.inject_noise, opts.clip_x0);
    d.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    log_state(j, d);
  }
  res.traj = std::move(tau);
  return res;
}

}  // namespace cbfdiff::invariance
