// Comparison methods sharing the diffusion sampler: per-step truncation onto
// simple specs, and classifier-style gradient guidance (optionally applied
// only inside a band around the spec boundary). Neither method modifies the
// trained model and neither carries guarantees.
#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "cbfdiff/diffusion.hpp"
#include "cbfdiff/specs.hpp"

namespace cbfdiff::baselines {

using diffusion::Conditioning;
using diffusion::DenoiserModel;
using diffusion::DiffusionSchedule;
using diffusion::Trajectory;
using specs::BarrierSpec;

// ---- truncation --------------------------------------------------------------

// Closed-form projections exist for half-space and box rows (clamp) and for
// the quadratic ellipse (radial scaling toward the boundary). Quartic and
// adjacent-pair specs have no closed-form truncation and are skipped with an
// unsupported marker.
inline bool truncation_supported(const BarrierSpec& s) {
  switch (s.kind) {
    case specs::SpecKind::HalfSpace:
    case specs::SpecKind::Box:
    case specs::SpecKind::Ellipse:
      return true;
    default:
      return false;
  }
}

// Projects one state onto the feasible set of one supported spec, in place.
inline void truncate_state(Vec& x, const BarrierSpec& s) {
  switch (s.kind) {
    case specs::SpecKind::HalfSpace:
    case specs::SpecKind::Box: {
      const double b = specs::eval_barrier(s, x);
      if (b >= 0.0) return;
      double nn = 0.0;
      for (std::size_t i = 0; i < s.dims.size(); ++i)
        nn += s.params[1 + i] * s.params[1 + i];
      for (std::size_t i = 0; i < s.dims.size(); ++i)
        x[s.dims[i]] += (-b) / nn * s.params[1 + i];
      return;
    }
    case specs::SpecKind::Ellipse: {
      const double b = specs::eval_barrier(s, x);
      if (b >= 0.0) return;
      const int dx = s.dims[0], dy = s.dims[1];
      const double cx = s.params[0], cy = s.params[1];
      const double ax = s.params[2], ay = s.params[3];
      const double vx = x[dx] - cx, vy = x[dy] - cy;
      const double D = (vx / ax) * (vx / ax) + (vy / ay) * (vy / ay);
      if (D == 0.0) {
        // Degenerate center point: leave along the +x axis by convention.
        x[dx] = cx + ax;
        x[dy] = cy;
        return;
      }
      const double t = 1.0 / std::sqrt(D);
      x[dx] = cx + t * vx;
      x[dy] = cy + t * vy;
      return;
    }
    default:
      return;  // unsupported kinds are handled by the caller
  }
}

struct TruncateResult {
  Trajectory traj;
  std::vector<std::string> unsupported;  // one marker per skipped spec
};

inline TruncateResult truncate_sample(const DenoiserModel& model,
                                      const DiffusionSchedule& sched,
                                      const std::optional<Conditioning>& cond,
                                      const std::vector<BarrierSpec>& sp,
                                      int horizon, int dim, Rng& rng,
                                      double clip_x0 = 0.0) {
  TruncateResult res;
  for (const auto& s : sp)
    if (!truncation_supported(s))
      res.unsupported.push_back(
          std::string(specs::kind_name(s.kind)) +
          (s.arity == specs::SpecArity::AdjacentPair ? " (adjacent-pair)" : ""));

  Trajectory tau = diffusion::unflatten(
      rng.normal_vec(static_cast<Eigen::Index>(horizon + 1) * dim), horizon, dim);
  diffusion::apply_pins(tau, cond);
  auto clamp_all = [&](Trajectory& t) {
    for (int k = 0; k <= horizon; ++k) {
      Vec x = t.state(k);
      for (const auto& s : sp)
        if (truncation_supported(s)) truncate_state(x, s);
      t.states.row(k) = x.transpose();
    }
  };
  clamp_all(tau);
  for (int j = sched.steps; j >= 1; --j) {
    tau = diffusion::denoise_step(model, tau, j, sched, rng, true, clip_x0);
    diffusion::apply_pins(tau, cond);
    clamp_all(tau);
  }
  res.traj = std::move(tau);
  return res;
}

// ---- classifier-style guidance -------------------------------------------------

struct GuidanceConfig {
  double scale = 1.0;        // guidance strength
  double epsilon_band = 0.0; // apply only where b < band; 0 disables banding

  void validate() const {
    if (!(scale >= 0.0) || !std::isfinite(scale))
      throw std::invalid_argument("guidance scale must be finite and >= 0");
    if (epsilon_band < 0.0)
      throw std::invalid_argument("epsilon band must be >= 0");
  }
};

// Descent direction of the violation penalty softplus(-b): the mean shift is
// scale * sigmoid(-b) * grad_b per state, pushing violated and near-boundary
// states toward b >= 0.
inline Vec guidance_shift(const Trajectory& tau,
                          const std::vector<BarrierSpec>& sp,
                          const GuidanceConfig& gcfg) {
  const int H = tau.horizon();
  const int d = tau.dim();
  Vec shift = Vec::Zero(static_cast<Eigen::Index>(H + 1) * d);
  auto add = [&](int k, const Vec& g, double b) {
    if (gcfg.epsilon_band > 0.0 && b >= gcfg.epsilon_band) return;
    const double w = 1.0 / (1.0 + std::exp(b));  // sigmoid(-b)
    shift.segment(static_cast<Eigen::Index>(k) * d, d) += gcfg.scale * w * g;
  };
  for (const auto& s : sp) {
    if (s.arity == specs::SpecArity::SingleState) {
      for (int k = 0; k <= H; ++k) {
        const double b = specs::eval_barrier(s, tau.state(k));
        add(k, specs::eval_gradient(s, tau.state(k)), b);
      }
    } else {
      for (int k = 0; k < H; ++k) {
        const double b = specs::eval_barrier(s, tau.state(k), tau.state(k + 1));
        auto [g0, g1] = specs::eval_gradient(s, tau.state(k), tau.state(k + 1));
        add(k, g0, b);
        add(k + 1, g1, b);
      }
      const auto plain = specs::plain_variant(s);
      const double b = specs::eval_barrier(plain, tau.state(H));
      add(H, specs::eval_gradient(plain, tau.state(H)), b);
    }
  }
  return shift;
}

inline Trajectory guided_sample(const DenoiserModel& model,
                                const DiffusionSchedule& sched,
                                const std::optional<Conditioning>& cond,
                                const std::vector<BarrierSpec>& sp,
                                const GuidanceConfig& gcfg, int horizon, int dim,
                                Rng& rng, double clip_x0 = 0.0) {
  gcfg.validate();
  Trajectory tau = diffusion::unflatten(
      rng.normal_vec(static_cast<Eigen::Index>(horizon + 1) * dim), horizon, dim);
  diffusion::apply_pins(tau, cond);
  for (int j = sched.steps; j >= 1; --j) {
    if (gcfg.scale == 0.0) {
      // Bit-identical to the vanilla sampler under the same seed.
      tau = diffusion::denoise_step(model, tau, j, sched, rng, true, clip_x0);
    } else {
      const Vec flat = diffusion::flatten(tau);
      const Vec eps_hat = diffusion::denoiser_forward(model, flat, j);
      const double ab = sched.alpha_bar[j - 1];
      Vec mean;
      if (clip_x0 > 0.0) {
        const double ab_prev = sched.alpha_bar_at(j - 1);
        Vec x0 = (flat - std::sqrt(1.0 - ab) * eps_hat) / std::sqrt(ab);
        x0 = x0.cwiseMax(-clip_x0).cwiseMin(clip_x0);
        const double c0 = std::sqrt(ab_prev) * sched.beta[j - 1] / (1.0 - ab);
        const double c1 =
            std::sqrt(sched.alpha[j - 1]) * (1.0 - ab_prev) / (1.0 - ab);
        mean = c0 * x0 + c1 * flat;
      } else {
        const double coef = sched.beta[j - 1] / std::sqrt(1.0 - ab);
        mean = (flat - coef * eps_hat) / std::sqrt(sched.alpha[j - 1]);
      }
      mean += guidance_shift(tau, sp, gcfg);
      if (j > 1) {
        const double sigma = std::sqrt(sched.posterior_variance[j - 1]);
        mean += sigma * rng.normal_vec(mean.size());
      }
      tau = diffusion::unflatten(mean, horizon, dim);
    }
    diffusion::apply_pins(tau, cond);
  }
  return tau;
}

}  // namespace cbfdiff::baselines
