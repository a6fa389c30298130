// Minimal denoising diffusion model over planning trajectories.
//
// A trajectory is an (H+1) x d matrix of planning states. The forward process
// corrupts clean data with the closed form x^j = sqrt(ab_j) x^0 +
// sqrt(1 - ab_j) eps; the reverse chain applies the learned eps-prediction
// network step by step. Everything runs in 64-bit floats.
#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "cbfdiff/common.hpp"
#include "cbfdiff/denoiser.hpp"
#include "cbfdiff/rng.hpp"

namespace cbfdiff::diffusion {

struct Trajectory {
  Mat states;  // (H+1) x d

  Trajectory() = default;
  explicit Trajectory(Mat s) : states(std::move(s)) {}
  Trajectory(int horizon, int dim) : states(Mat::Zero(horizon + 1, dim)) {}

  int horizon() const { return static_cast<int>(states.rows()) - 1; }
  int dim() const { return static_cast<int>(states.cols()); }
  Vec state(int k) const { return states.row(k).transpose(); }
};

inline Vec flatten(const Trajectory& t) {
  const int d = t.dim();
  Vec v(static_cast<Eigen::Index>(t.states.rows()) * d);
  for (Eigen::Index k = 0; k < t.states.rows(); ++k)
    v.segment(k * d, d) = t.states.row(k).transpose();
  return v;
}

inline Trajectory unflatten(const Vec& v, int horizon, int dim) {
  if (v.size() != static_cast<Eigen::Index>(horizon + 1) * dim)
    throw std::invalid_argument("flat trajectory has wrong length");
  Trajectory t(horizon, dim);
  for (int k = 0; k <= horizon; ++k)
    t.states.row(k) = v.segment(static_cast<Eigen::Index>(k) * dim, dim).transpose();
  return t;
}

// Start/goal states pinned at k = 0 and k = H by inpainting: the clean values
// are written back after every reverse step.
struct Conditioning {
  Vec start;
  Vec goal;
};

inline void apply_pins(Trajectory& t, const std::optional<Conditioning>& cond) {
  if (!cond) return;
  t.states.row(0) = cond->start.transpose();
  t.states.row(t.horizon()) = cond->goal.transpose();
}

// ---- noise schedule --------------------------------------------------------

struct DiffusionSchedule {
  int steps = 0;  // N
  Vec beta;       // beta[i] is the variance of step j = i + 1
  Vec alpha;
  Vec alpha_bar;
  Vec posterior_variance;

  double alpha_bar_at(int j) const {  // ab_0 := 1
    return j == 0 ? 1.0 : alpha_bar[j - 1];
  }
};

inline DiffusionSchedule make_schedule(int steps, double beta_min,
                                       double beta_max) {
  if (steps < 1) throw std::invalid_argument("schedule needs at least 1 step");
  if (!(beta_min > 0.0) || !(beta_min <= beta_max) || !(beta_max < 1.0))
    throw std::invalid_argument("betas must satisfy 0 < beta_min <= beta_max < 1");
  DiffusionSchedule s;
  s.steps = steps;
  s.beta.resize(steps);
  for (int i = 0; i < steps; ++i)
    s.beta[i] = steps == 1
                    ? beta_min
                    : beta_min + (beta_max - beta_min) * i / double(steps - 1);
  s.alpha = 1.0 - s.beta.array();
  s.alpha_bar.resize(steps);
  double prod = 1.0;
  for (int i = 0; i < steps; ++i) {
    prod *= s.alpha[i];
    s.alpha_bar[i] = prod;
  }
  s.posterior_variance.resize(steps);
  for (int i = 0; i < steps; ++i) {
    const double ab_prev = i == 0 ? 1.0 : s.alpha_bar[i - 1];
    s.posterior_variance[i] = s.beta[i] * (1.0 - ab_prev) / (1.0 - s.alpha_bar[i]);
  }
  return s;
}

inline Trajectory forward_noise(const Trajectory& tau0, int j, const Mat& eps,
                                const DiffusionSchedule& sched) {
  if (j < 1 || j > sched.steps)
    throw std::invalid_argument("diffusion step out of range");
  if (eps.rows() != tau0.states.rows() || eps.cols() != tau0.states.cols())
    throw std::invalid_argument("noise shape mismatch");
  const double ab = sched.alpha_bar[j - 1];
  Trajectory out;
  out.states = std::sqrt(ab) * tau0.states + std::sqrt(1.0 - ab) * eps;
  return out;
}

// ---- reverse process -------------------------------------------------------

// One ancestral step: tau^{j-1} = mu_theta(tau^j, j) + sigma_j z with
// mu = (tau - beta_j / sqrt(1 - ab_j) eps_hat) / sqrt(alpha_j) and z = 0 at
// j = 1. `inject_noise = false` gives the deterministic chain used by the
// stabilization diagnostics.
//
// With clip_x0 > 0 the implied clean estimate is clamped to [-clip, clip]
// before the posterior mean is formed. Data lives in [-1, 1]; without the
// clamp an excursion past the network's trained range saturates the tanh
// layers and the 1/sqrt(alpha) amplification compounds unchecked over the
// chain. Clamping off (the default) evaluates the eps-form mean verbatim.
inline Trajectory denoise_step(const DenoiserModel& model, const Trajectory& tau,
                               int j, const DiffusionSchedule& sched, Rng& rng,
                               bool inject_noise = true, double clip_x0 = 0.0) {
  if (j < 1 || j > sched.steps)
    throw std::invalid_argument("diffusion step out of range");
  const Vec flat = flatten(tau);
  const Vec eps_hat = denoiser_forward(model, flat, j);
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
  if (j > 1 && inject_noise) {
    const double sigma = std::sqrt(sched.posterior_variance[j - 1]);
    mean += sigma * rng.normal_vec(mean.size());
  }
  return unflatten(mean, tau.horizon(), tau.dim());
}

struct SampleOptions {
  bool inject_noise = true;
  double clip_x0 = 0.0;  // 0 disables the clean-estimate clamp
};

inline Trajectory sample(const DenoiserModel& model,
                         const DiffusionSchedule& sched,
                         const std::optional<Conditioning>& cond, int horizon,
                         int dim, Rng& rng, const SampleOptions& opts = {}) {
  Trajectory tau = unflatten(rng.normal_vec(static_cast<Eigen::Index>(horizon + 1) * dim),
                             horizon, dim);
  apply_pins(tau, cond);
  for (int j = sched.steps; j >= 1; --j) {
    tau = denoise_step(model, tau, j, sched, rng, opts.inject_noise, opts.clip_x0);
    apply_pins(tau, cond);
  }
  return tau;
}

// ---- training --------------------------------------------------------------

struct TrainOptions {
  int epochs = 100;
  int batch_size = 32;
  double learning_rate = 1e-3;
  bool adam = false;  // default is plain fixed-rate gradient descent
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
};

struct TrainLog {
  std::vector<double> epoch_loss;  // mean eps-MSE per dimension
};

// Standard simplified objective: E || eps - eps_hat ||^2 over random steps.
inline TrainLog train(DenoiserModel& model, const Mat& dataset,
                      const DiffusionSchedule& sched, const TrainOptions& opts,
                      Rng& rng) {
  if (dataset.rows() == 0) throw std::invalid_argument("empty dataset");
  if (dataset.cols() != model.input_dim)
    throw std::invalid_argument("dataset width does not match model input");
  const int n = static_cast<int>(dataset.rows());
  const Eigen::Index dim = dataset.cols();

  DenoiserGradients accum = make_gradients(model);
  DenoiserGradients m1 = make_gradients(model);
  DenoiserGradients m2 = make_gradients(model);
  int adam_t = 0;

  TrainLog log;
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (int begin = 0; begin < n; begin += opts.batch_size) {
      const int bsz = std::min(opts.batch_size, n - begin);
      zero_gradients(accum);
      for (int bi = 0; bi < bsz; ++bi) {
        const Vec x0 = dataset.row(order[begin + bi]).transpose();
        const int j = static_cast<int>(rng.uniform_index(sched.steps)) + 1;
        const Vec eps = rng.normal_vec(dim);
        const double ab = sched.alpha_bar[j - 1];
        const Vec xj = std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
        DenoiserCache cache;
        const Vec pred = denoiser_forward(model, xj, j, &cache);
        const Vec diff = pred - eps;
        loss_sum += diff.squaredNorm() / double(dim);
        const Vec dout = (2.0 / (double(dim) * bsz)) * diff;
        denoiser_backward(model, cache, dout, accum);
      }
      if (opts.adam) {
        ++adam_t;
        const double c1 = 1.0 - std::pow(opts.adam_beta1, adam_t);
        const double c2 = 1.0 - std::pow(opts.adam_beta2, adam_t);
        for (std::size_t l = 0; l < accum.dW.size(); ++l) {
          m1.dW[l] = opts.adam_beta1 * m1.dW[l] + (1.0 - opts.adam_beta1) * accum.dW[l];
          m2.dW[l].array() = opts.adam_beta2 * m2.dW[l].array() +
                             (1.0 - opts.adam_beta2) * accum.dW[l].array().square();
          model.W[l].array() -= opts.learning_rate * (m1.dW[l].array() / c1) /
                                ((m2.dW[l].array() / c2).sqrt() + opts.adam_eps);
          m1.db[l] = opts.adam_beta1 * m1.db[l] + (1.0 - opts.adam_beta1) * accum.db[l];
          m2.db[l].array() = opts.adam_beta2 * m2.db[l].array() +
                             (1.0 - opts.adam_beta2) * accum.db[l].array().square();
          model.b[l].array() -= opts.learning_rate * (m1.db[l].array() / c1) /
                                ((m2.db[l].array() / c2).sqrt() + opts.adam_eps);
        }
      } else {
        for (std::size_t l = 0; l < accum.dW.size(); ++l) {
          model.W[l] -= opts.learning_rate * accum.dW[l];
          model.b[l] -= opts.learning_rate * accum.db[l];
        }
      }
    }
    const double epoch_loss = loss_sum / n;
    if (!std::isfinite(epoch_loss))
      throw std::runtime_error("training diverged: non-finite loss at epoch " +
                               std::to_string(epoch));
    log.epoch_loss.push_back(epoch_loss);
  }
  return log;
}

}  // namespace cbfdiff::diffusion
