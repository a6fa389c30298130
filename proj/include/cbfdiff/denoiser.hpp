// Dense eps-prediction network with hand-written backpropagation.
//
// Input is the flattened trajectory concatenated with a sinusoidal embedding
// of the diffusion step; three tanh hidden layers and a linear output predict
// the injected noise. Backward passes are exact for this architecture, which
// the test suite verifies against central finite differences.
#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "cbfdiff/common.hpp"
#include "cbfdiff/rng.hpp"

namespace cbfdiff::diffusion {

struct DenoiserModel {
  int input_dim = 0;   // flattened trajectory length (H+1)*d
  int time_dim = 32;   // sinusoidal embedding width
  int hidden = 256;
  std::vector<Mat> W;  // layer weights, input to output
  std::vector<Vec> b;

  int layer_count() const { return static_cast<int>(W.size()); }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < W.size(); ++l)
      n += static_cast<std::size_t>(W[l].size()) + b[l].size();
    return n;
  }
};

inline Vec time_embedding(int j, int dim) {
  const int half = dim / 2;
  Vec e(dim);
  for (int i = 0; i < half; ++i) {
    const double freq =
        half > 1 ? std::exp(-std::log(10000.0) * i / double(half - 1)) : 1.0;
    e[i] = std::sin(j * freq);
    e[half + i] = std::cos(j * freq);
  }
  if (dim % 2 == 1) e[dim - 1] = 0.0;
  return e;
}

inline DenoiserModel make_denoiser(int input_dim, Rng& rng, int hidden = 256,
                                   int time_dim = 32, int hidden_layers = 3) {
  if (input_dim <= 0 || hidden <= 0 || hidden_layers < 1)
    throw std::invalid_argument("bad denoiser shape");
  DenoiserModel m;
  m.input_dim = input_dim;
  m.time_dim = time_dim;
  m.hidden = hidden;
  std::vector<int> sizes;
  sizes.push_back(input_dim + time_dim);
  for (int l = 0; l < hidden_layers; ++l) sizes.push_back(hidden);
  sizes.push_back(input_dim);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int fan_in = sizes[l], fan_out = sizes[l + 1];
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    Mat W(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r)
      for (int c = 0; c < fan_in; ++c) W(r, c) = rng.uniform(-bound, bound);
    m.W.push_back(std::move(W));
    m.b.push_back(Vec::Zero(fan_out));
  }
  return m;
}

struct DenoiserCache {
  Vec input;                   // trajectory ++ time embedding
  std::vector<Vec> activations;  // post-tanh hidden activations
};

inline Vec denoiser_forward(const DenoiserModel& m, const Vec& flat_traj, int j,
                            DenoiserCache* cache = nullptr) {
  if (flat_traj.size() != m.input_dim)
    throw std::invalid_argument("denoiser input length mismatch");
  Vec x(m.input_dim + m.time_dim);
  x.head(m.input_dim) = flat_traj;
  x.tail(m.time_dim) = time_embedding(j, m.time_dim);
  if (cache) {
    cache->input = x;
    cache->activations.clear();
  }
  const int L = m.layer_count();
  for (int l = 0; l < L - 1; ++l) {
    x = (m.W[l] * x + m.b[l]).array().tanh();
    if (cache) cache->activations.push_back(x);
  }
  return m.W[L - 1] * x + m.b[L - 1];
}

struct DenoiserGradients {
  std::vector<Mat> dW;
  std::vector<Vec> db;
};

inline DenoiserGradients make_gradients(const DenoiserModel& m) {
  DenoiserGradients g;
  for (std::size_t l = 0; l < m.W.size(); ++l) {
    g.dW.push_back(Mat::Zero(m.W[l].rows(), m.W[l].cols()));
    g.db.push_back(Vec::Zero(m.b[l].size()));
  }
  return g;
}

inline void zero_gradients(DenoiserGradients& g) {
  for (auto& m : g.dW) m.setZero();
  for (auto& v : g.db) v.setZero();
}

// Accumulates d loss / d theta into `out` given d loss / d output.
inline void denoiser_backward(const DenoiserModel& m, const DenoiserCache& cache,
                              const Vec& dout, DenoiserGradients& out) {
  const int L = m.layer_count();
  Vec delta = dout;
  for (int l = L - 1; l >= 0; --l) {
    const Vec& in = l == 0 ? cache.input : cache.activations[l - 1];
    out.dW[l] += delta * in.transpose();
    out.db[l] += delta;
    if (l > 0) {
      // back through tanh: act' = 1 - a^2
      delta = (m.W[l].transpose() * delta).array() *
              (1.0 - cache.activations[l - 1].array().square());
    }
  }
}

}  // namespace cbfdiff::diffusion
