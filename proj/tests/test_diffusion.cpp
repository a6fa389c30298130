#include <doctest.h>

#include <cmath>

#include "cbfdiff/diffusion.hpp"
#include "test_util.hpp"

using namespace cbfdiff;
using namespace cbfdiff::diffusion;

TEST_CASE("schedule examples") {
  auto s1 = make_schedule(1, 0.5, 0.5);
  CHECK(s1.alpha_bar[0] == doctest::Approx(0.5));
  CHECK(s1.posterior_variance[0] == doctest::Approx(0.0));

  auto s2 = make_schedule(2, 0.1, 0.2);
  CHECK(s2.beta[0] == doctest::Approx(0.1));
  CHECK(s2.beta[1] == doctest::Approx(0.2));
  CHECK(s2.alpha_bar[0] == doctest::Approx(0.9));
  CHECK(s2.alpha_bar[1] == doctest::Approx(0.72));

  CHECK_THROWS_AS(make_schedule(0, 0.1, 0.2), std::invalid_argument);
  CHECK_THROWS_AS(make_schedule(4, 0.0, 0.2), std::invalid_argument);
  CHECK_THROWS_AS(make_schedule(4, 0.3, 0.2), std::invalid_argument);
}

TEST_CASE("cumulative product matches an independent exp-sum-log route") {
  auto s = make_schedule(256, 1e-4, 2e-2);
  double logsum = 0.0;
  for (int i = 0; i < 256; ++i) logsum += std::log1p(-s.beta[i]);
  CHECK(s.alpha_bar[255] == doctest::Approx(std::exp(logsum)).epsilon(1e-12));
  // Frozen value of the product for this textbook beta range at N = 256.
  CHECK(s.alpha_bar[255] == doctest::Approx(0.075008049429064971).epsilon(1e-12));
  // Rescaling the betas by 1000/N restores a near-zero terminal alpha_bar,
  // which is what the default configs do.
  auto scaled = make_schedule(256, 1e-4 * 1000.0 / 256.0, 2e-2 * 1000.0 / 256.0);
  CHECK(scaled.alpha_bar[255] < 0.01);
  CHECK(scaled.alpha_bar[0] > 0.99);
}

TEST_CASE("alpha_bar is strictly decreasing") {
  auto s = make_schedule(64, 1e-3, 5e-2);
  for (int i = 1; i < 64; ++i) CHECK(s.alpha_bar[i] < s.alpha_bar[i - 1]);
}

TEST_CASE("forward_noise closed form") {
  Trajectory tau0(2, 2);
  tau0.states.setOnes();
  Mat eps = Mat::Ones(3, 2);

  // alpha_bar = 0.25 at j = 1 when beta = 0.75.
  auto s = make_schedule(1, 0.75, 0.75);
  auto out = forward_noise(tau0, 1, eps, s);
  CHECK(out.states(0, 0) == doctest::Approx(0.5 + std::sqrt(0.75)));

  CHECK_THROWS_AS(forward_noise(tau0, 0, eps, s), std::invalid_argument);
  CHECK_THROWS_AS(forward_noise(tau0, 2, eps, s), std::invalid_argument);
}

TEST_CASE("forward_noise limiting cases") {
  Rng rng(5);
  Trajectory tau0(3, 2);
  tau0.states = rng.normal_mat(4, 2);
  Mat eps = rng.normal_mat(4, 2);

  auto tiny = make_schedule(1, 1e-12, 1e-12);  // alpha_bar ~ 1
  auto out = forward_noise(tau0, 1, eps, tiny);
  CHECK((out.states - tau0.states).norm() < 1e-5);

  auto big = make_schedule(1, 1.0 - 1e-13, 1.0 - 1e-13);  // alpha_bar ~ 0
  out = forward_noise(tau0, 1, eps, big);
  CHECK((out.states - eps).norm() < 1e-5);
}

TEST_CASE("forward noise at the last step is indistinguishable from the prior") {
  Rng rng(97);
  auto s = make_schedule(256, 1e-4 * 1000 / 256.0, 2e-2 * 1000 / 256.0);
  const int n = 10000;
  double sum = 0.0, sum2 = 0.0;
  Trajectory tau0(0, 1);
  for (int i = 0; i < n; ++i) {
    tau0.states(0, 0) = rng.uniform(-1.0, 1.0);  // zero-mean data
    Mat eps = rng.normal_mat(1, 1);
    auto out = forward_noise(tau0, 256, eps, s);
    sum += out.states(0, 0);
    sum2 += out.states(0, 0) * out.states(0, 0);
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  CHECK(std::abs(mean) < 3.0 / std::sqrt(double(n)));  // 3 sigma
  CHECK(std::abs(var - 1.0) < 3.0 * std::sqrt(2.0 / double(n)) + 0.01);
}

TEST_CASE("zero-weight denoiser returns zero") {
  Rng rng(1);
  auto m = make_denoiser(6, rng, 16, 8, 2);
  for (auto& W : m.W) W.setZero();
  for (auto& b : m.b) b.setZero();
  Vec out = denoiser_forward(m, Vec::Ones(6), 3);
  CHECK(out.norm() == doctest::Approx(0.0));
}

TEST_CASE("single linear layer matches hand computation") {
  Rng rng(2);
  auto m = make_denoiser(2, rng, 4, 2, 1);
  m.W[0].setZero();
  m.W[0](0, 0) = 0.5;  // reads x[0]
  m.W[1].setZero();
  m.W[1](0, 0) = 2.0;
  m.b[0].setZero();
  m.b[1].setZero();
  Vec x(2);
  x << 0.3, -0.7;
  Vec out = denoiser_forward(m, x, 1);
  CHECK(out[0] == doctest::Approx(2.0 * std::tanh(0.15)));
  CHECK(out[1] == doctest::Approx(0.0));
}

TEST_CASE("backprop matches central finite differences") {
  Rng rng(7);
  auto m = make_denoiser(5, rng, 12, 6, 3);
  Vec x = rng.normal_vec(5);
  Vec target = rng.normal_vec(5);
  const int j = 4;

  auto loss_at = [&](const DenoiserModel& model) {
    Vec out = denoiser_forward(model, x, j);
    return (out - target).squaredNorm();
  };

  DenoiserCache cache;
  Vec out = denoiser_forward(m, x, j, &cache);
  auto grads = make_gradients(m);
  denoiser_backward(m, cache, 2.0 * (out - target), grads);

  // Probe 150 random parameters across all layers.
  int checked = 0;
  const double h = 1e-6;
  while (checked < 150) {
    const std::size_t l = rng.uniform_index(m.W.size());
    const bool weight = rng.uniform() < 0.8;
    DenoiserModel mp = m, mm = m;
    double analytic;
    if (weight) {
      const Eigen::Index r = rng.uniform_index(m.W[l].rows());
      const Eigen::Index c = rng.uniform_index(m.W[l].cols());
      mp.W[l](r, c) += h;
      mm.W[l](r, c) -= h;
      analytic = grads.dW[l](r, c);
    } else {
      const Eigen::Index r = rng.uniform_index(m.b[l].size());
      mp.b[l][r] += h;
      mm.b[l][r] -= h;
      analytic = grads.db[l][r];
    }
    const double fd = (loss_at(mp) - loss_at(mm)) / (2.0 * h);
    CHECK(testutil::rel_err(analytic, fd) < 1e-5);
    ++checked;
  }
}

TEST_CASE("training on identical trajectories reduces the loss") {
  Rng rng(11);
  const int dim = 4;
  Mat dataset(64, dim);
  Vec proto = rng.normal_vec(dim) * 0.5;
  for (int i = 0; i < 64; ++i) dataset.row(i) = proto.transpose();
  auto sched = make_schedule(16, 1e-3, 0.2);
  auto model = make_denoiser(dim, rng, 32, 8, 2);
  TrainOptions opts;
  opts.epochs = 100;
  opts.learning_rate = 5e-3;
  auto log = train(model, dataset, sched, opts, rng);
  CHECK(log.epoch_loss.back() < log.epoch_loss.front());
}

TEST_CASE("zero-rate pass evaluates the eps-MSE of the zero predictor") {
  // Prediction 0 against target eps gives E||eps||^2/dim = 1 in expectation.
  Rng rng(13);
  const int dim = 3;
  Mat dataset = Mat::Zero(256, dim);
  auto sched = make_schedule(4, 1e-4, 1e-3);
  auto model = make_denoiser(dim, rng, 8, 4, 1);
  for (auto& W : model.W) W.setZero();
  for (auto& b : model.b) b.setZero();
  TrainOptions opts;
  opts.epochs = 1;
  opts.learning_rate = 0.0;  // evaluate only
  auto log = train(model, dataset, sched, opts, rng);
  CHECK(log.epoch_loss[0] == doctest::Approx(1.0).epsilon(0.15));
}

TEST_CASE("denoise_step final step injects no noise") {
  Rng rng(17);
  auto model = make_denoiser(4, rng, 8, 4, 1);
  auto sched = make_schedule(3, 1e-3, 2e-2);
  Trajectory tau(1, 2);
  tau.states = rng.normal_mat(2, 2);
  Rng r1(5), r2(5);
  auto a = denoise_step(model, tau, 1, sched, r1, true);
  auto b = denoise_step(model, tau, 1, sched, r2, false);
  CHECK((a.states - b.states).norm() == doctest::Approx(0.0));
}

TEST_CASE("denoise_step with zero prediction and tiny beta is near identity") {
  Rng rng(19);
  auto model = make_denoiser(4, rng, 8, 4, 1);
  for (auto& W : model.W) W.setZero();
  for (auto& b : model.b) b.setZero();
  auto sched = make_schedule(2, 1e-12, 1e-12);
  Trajectory tau(1, 2);
  tau.states = rng.normal_mat(2, 2);
  auto out = denoise_step(model, tau, 2, sched, rng, false);
  CHECK((out.states - tau.states).norm() < 1e-9);
}

TEST_CASE("golden regression: fixed-seed denoise_step output") {
  Rng init(23);
  auto model = make_denoiser(6, init, 8, 4, 2);
  auto sched = make_schedule(8, 1e-3, 5e-2);
  Trajectory tau(2, 2);
  tau.states << 0.1, -0.2, 0.3, 0.4, -0.5, 0.6;
  Rng rng(99);
  auto out = denoise_step(model, tau, 5, sched, rng);
  // Frozen on the first verified run of this configuration.
  CHECK(out.states(1, 0) == doctest::Approx(0.28856277556399484).epsilon(1e-12));
  CHECK(out.states(1, 1) == doctest::Approx(0.6031561247063113).epsilon(1e-12));
  // And bit-stable across reruns.
  Rng rng2(99);
  auto out2 = denoise_step(model, tau, 5, sched, rng2);
  CHECK(out.states == out2.states);
}

TEST_CASE("clean-estimate clamp keeps the chain in the data range") {
  Rng init(37);
  auto model = make_denoiser(8, init, 16, 8, 2);
  auto sched = make_schedule(32, 1e-4 * 1000 / 32.0, 0.2);
  Rng rng(5);
  SampleOptions clipped;
  clipped.clip_x0 = 1.0;
  auto out = sample(model, sched, std::nullopt, 3, 2, rng, clipped);
  // Posterior means stay convex-ish combinations of clamped estimates; the
  // final state is bounded by the clamp (no noise is added at j = 1).
  CHECK(out.states.cwiseAbs().maxCoeff() < 1.5);

  // When the estimate is already inside the range, the clamped form equals
  // the eps-form mean up to rounding.
  Trajectory tau(3, 2);
  tau.states = Rng(9).normal_mat(4, 2) * 0.1;
  Rng r1(3), r2(3);
  auto a = denoise_step(model, tau, 8, sched, r1, false, 0.0);
  auto b = denoise_step(model, tau, 8, sched, r2, false, 100.0);
  CHECK((a.states - b.states).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("sampling pins endpoints exactly") {
  Rng init(29);
  auto model = make_denoiser(6, init, 8, 4, 1);
  auto sched = make_schedule(4, 1e-3, 5e-2);
  Conditioning cond;
  cond.start = Vec::Constant(2, -0.25);
  cond.goal = Vec::Constant(2, 0.75);
  Rng rng(7);
  auto out = sample(model, sched, cond, 2, 2, rng);
  CHECK(out.states(0, 0) == -0.25);
  CHECK(out.states(0, 1) == -0.25);
  CHECK(out.states(2, 0) == 0.75);
  CHECK(out.states(2, 1) == 0.75);
}

TEST_CASE("untrained model with N = 1 returns prior noise with pins") {
  Rng init(31);
  auto model = make_denoiser(4, init, 8, 4, 1);
  for (auto& W : model.W) W.setZero();
  for (auto& b : model.b) b.setZero();
  auto sched = make_schedule(1, 0.5, 0.5);
  Conditioning cond;
  cond.start = Vec::Zero(2);
  cond.goal = Vec::Zero(2);
  Rng rng(3), rng_ref(3);
  auto out = sample(model, sched, cond, 1, 2, rng);
  // Reproduce by hand: prior draw, pins, one deterministic step, pins.
  Vec prior = rng_ref.normal_vec(4);
  Trajectory ref = unflatten(prior, 1, 2);
  apply_pins(ref, cond);
  ref = denoise_step(model, ref, 1, sched, rng_ref);
  apply_pins(ref, cond);
  CHECK(out.states == ref.states);
}

TEST_CASE("2d gaussian toy data: sample mean tracks data mean") {
  // Small end-to-end sanity run; the acceptance suite runs the full-size one.
  Rng rng(41);
  const int n = 512;
  Mat dataset(n, 2);
  const double mx = 0.2, my = -0.1;
  for (int i = 0; i < n; ++i) {
    const double z1 = rng.normal(), z2 = rng.normal();
    dataset(i, 0) = mx + 0.35 * z1;
    dataset(i, 1) = my + 0.21 * z1 + 0.28 * z2;
  }
  auto sched = make_schedule(32, 1e-3, 0.12);
  auto model = make_denoiser(2, rng, 48, 16, 2);
  TrainOptions opts;
  opts.epochs = 200;
  opts.adam = true;
  opts.learning_rate = 2e-3;
  train(model, dataset, sched, opts, rng);

  const int ns = 2000;
  Mat samples(ns, 2);
  for (int i = 0; i < ns; ++i) {
    auto t = sample(model, sched, std::nullopt, 0, 2, rng);
    samples.row(i) = t.states.row(0);
  }
  Vec sample_mean = samples.colwise().mean().transpose();
  Vec data_mean = dataset.colwise().mean().transpose();
  CHECK(std::abs(sample_mean[0] - data_mean[0]) < 0.1);
  CHECK(std::abs(sample_mean[1] - data_mean[1]) < 0.1);
}
