// Differentiable safety specifications b(x) >= 0.
//
// Every spec is a smooth scalar field over one planning state or over a pair
// of adjacent planning states, with an analytic gradient. Boxes are kept as
// independent half-space rows so that each row stays linear in the decision
// variable; the non-smooth min over rows is never formed.
//
// Parameter layout by kind:
//   Ellipse, QuarticSuperEllipse : params = {cx, cy, ax, ay}, dims = {dx, dy}
//   HalfSpace, Box               : params = {offset, c_0..c_{m-1}}
//                                  b(x) = offset + sum_i c_i * x[dims[i]]
//   SpeedDependentHalfSpace/Box  : params = {offset, ck_0.., ck1_0..}
//                                  b(xk, xk1) = offset + sum_i ck_i * xk[dims[i]]
//                                             + sum_i ck1_i * xk1[dims[i]]
// Velocity in the speed-dependent kinds is the unit-step finite difference
// v = x_{k+1} - x_k folded into the linear coefficients.
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "cbfdiff/common.hpp"

namespace cbfdiff::specs {

enum class SpecKind {
  Ellipse,
  QuarticSuperEllipse,
  HalfSpace,
  Box,
  SpeedDependentHalfSpace,
  SpeedDependentBox,
};

enum class SpecArity { SingleState, AdjacentPair };

inline const char* kind_name(SpecKind k) {
  switch (k) {
    case SpecKind::Ellipse: return "ellipse";
    case SpecKind::QuarticSuperEllipse: return "quartic_superellipse";
    case SpecKind::HalfSpace: return "halfspace";
    case SpecKind::Box: return "box";
    case SpecKind::SpeedDependentHalfSpace: return "speed_halfspace";
    case SpecKind::SpeedDependentBox: return "speed_box";
  }
  return "?";
}

struct BarrierSpec {
  SpecKind kind = SpecKind::HalfSpace;
  SpecArity arity = SpecArity::SingleState;
  std::vector<int> dims;
  std::vector<double> params;
};

// Per-dimension min/max of the training data; drives the affine map
// x -> 2(x - min)/(max - min) - 1 into model space.
struct NormalizationStats {
  Vec min;
  Vec max;

  void validate() const {
    if (min.size() != max.size())
      throw std::invalid_argument("normalization stats size mismatch");
    for (Eigen::Index i = 0; i < min.size(); ++i)
      if (!(max[i] > min[i]))
        throw std::invalid_argument("degenerate normalization stats");
  }
  double scale(int d) const { return 2.0 / (max[d] - min[d]); }
  double shift(int d) const { return -scale(d) * min[d] - 1.0; }
  double to_model(double x, int d) const { return scale(d) * x + shift(d); }
  double to_world(double x, int d) const { return (x - shift(d)) / scale(d); }
  Vec to_model(const Vec& x) const {
    Vec out(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i)
      out[i] = to_model(x[i], static_cast<int>(i));
    return out;
  }
  Vec to_world(const Vec& x) const {
    Vec out(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i)
      out[i] = to_world(x[i], static_cast<int>(i));
    return out;
  }
};

// ---- constructors ----------------------------------------------------------

inline BarrierSpec make_ellipse(const Vec& center, const Vec& axes,
                                std::vector<int> dims = {0, 1}) {
  if (center.size() != 2 || axes.size() != 2 || dims.size() != 2)
    throw std::invalid_argument("ellipse needs 2-d center/axes/dims");
  if (!(axes[0] > 0.0) || !(axes[1] > 0.0))
    throw std::invalid_argument("ellipse axes must be positive");
  BarrierSpec s;
  s.kind = SpecKind::Ellipse;
  s.arity = SpecArity::SingleState;
  s.dims = std::move(dims);
  s.params = {center[0], center[1], axes[0], axes[1]};
  return s;
}

inline BarrierSpec make_quartic_superellipse(const Vec& center, const Vec& axes,
                                             std::vector<int> dims = {0, 1}) {
  BarrierSpec s = make_ellipse(center, axes, std::move(dims));
  s.kind = SpecKind::QuarticSuperEllipse;
  return s;
}

// Ceiling constraint x[dim] <= h_r, i.e. b = h_r - x[dim].
inline BarrierSpec make_roof(double h_r, int dim) {
  BarrierSpec s;
  s.kind = SpecKind::HalfSpace;
  s.arity = SpecArity::SingleState;
  s.dims = {dim};
  s.params = {h_r, -1.0};
  return s;
}

// x[dim] + phi * v[dim] <= h_r with v = x_{k+1} - x_k:
// b = h_r + (phi - 1) xk[dim] - phi xk1[dim].
inline BarrierSpec make_speed_dependent_roof(double h_r, double phi, int dim) {
  if (!(phi > 0.0)) throw std::invalid_argument("phi must be positive");
  BarrierSpec s;
  s.kind = SpecKind::SpeedDependentHalfSpace;
  s.arity = SpecArity::AdjacentPair;
  s.dims = {dim};
  s.params = {h_r, phi - 1.0, -phi};
  return s;
}

// x_min <= x <= x_max decomposed into 2d half-space rows.
inline std::vector<BarrierSpec> make_joint_box(const Vec& x_min, const Vec& x_max,
                                               std::vector<int> dims = {}) {
  if (x_min.size() != x_max.size())
    throw std::invalid_argument("box limit size mismatch");
  if (dims.empty())
    for (int i = 0; i < static_cast<int>(x_min.size()); ++i) dims.push_back(i);
  if (static_cast<Eigen::Index>(dims.size()) != x_min.size())
    throw std::invalid_argument("box dims size mismatch");
  std::vector<BarrierSpec> rows;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (!(x_max[i] > x_min[i]))
      throw std::invalid_argument("box requires x_max > x_min");
    BarrierSpec upper;  // b = x_max - x
    upper.kind = SpecKind::Box;
    upper.arity = SpecArity::SingleState;
    upper.dims = {dims[i]};
    upper.params = {x_max[i], -1.0};
    rows.push_back(std::move(upper));
    BarrierSpec lower;  // b = x - x_min
    lower.kind = SpecKind::Box;
    lower.arity = SpecArity::SingleState;
    lower.dims = {dims[i]};
    lower.params = {-x_min[i], 1.0};
    rows.push_back(std::move(lower));
  }
  return rows;
}

// x_min <= x + phi v <= x_max with v = x_{k+1} - x_k, one pair row per bound.
inline std::vector<BarrierSpec> make_speed_dependent_box(
    const Vec& x_min, const Vec& x_max, double phi, std::vector<int> dims = {}) {
  if (!(phi > 0.0)) throw std::invalid_argument("phi must be positive");
  if (x_min.size() != x_max.size())
    throw std::invalid_argument("box limit size mismatch");
  if (dims.empty())
    for (int i = 0; i < static_cast<int>(x_min.size()); ++i) dims.push_back(i);
  std::vector<BarrierSpec> rows;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (!(x_max[i] > x_min[i]))
      throw std::invalid_argument("box requires x_max > x_min");
    BarrierSpec upper;  // b = x_max - xk - phi (xk1 - xk)
    upper.kind = SpecKind::SpeedDependentBox;
    upper.arity = SpecArity::AdjacentPair;
    upper.dims = {dims[i]};
    upper.params = {x_max[i], phi - 1.0, -phi};
    rows.push_back(std::move(upper));
    BarrierSpec lower;  // b = xk + phi (xk1 - xk) - x_min
    lower.kind = SpecKind::SpeedDependentBox;
    lower.arity = SpecArity::AdjacentPair;
    lower.dims = {dims[i]};
    lower.params = {-x_min[i], 1.0 - phi, phi};
    rows.push_back(std::move(lower));
  }
  return rows;
}

// ---- evaluation ------------------------------------------------------------

namespace detail {
inline void check_state(const BarrierSpec& s, const Vec& x) {
  for (int d : s.dims)
    if (d < 0 || d >= x.size())
      throw std::invalid_argument("state dimension does not match spec dims");
}
}  // namespace detail

inline double eval_barrier(const BarrierSpec& s, const Vec& x) {
  if (s.arity != SpecArity::SingleState)
    throw std::invalid_argument("adjacent-pair spec needs two states");
  detail::check_state(s, x);
  switch (s.kind) {
    case SpecKind::Ellipse: {
      double u = (x[s.dims[0]] - s.params[0]) / s.params[2];
      double v = (x[s.dims[1]] - s.params[1]) / s.params[3];
      return u * u + v * v - 1.0;
    }
    case SpecKind::QuarticSuperEllipse: {
      double u = (x[s.dims[0]] - s.params[0]) / s.params[2];
      double v = (x[s.dims[1]] - s.params[1]) / s.params[3];
      return u * u * u * u + v * v * v * v - 1.0;
    }
    case SpecKind::HalfSpace:
    case SpecKind::Box: {
      double b = s.params[0];
      for (std::size_t i = 0; i < s.dims.size(); ++i)
        b += s.params[1 + i] * x[s.dims[i]];
      return b;
    }
    default:
      throw std::invalid_argument("adjacent-pair spec needs two states");
  }
}

inline double eval_barrier(const BarrierSpec& s, const Vec& xk, const Vec& xk1) {
  if (s.arity != SpecArity::AdjacentPair)
    throw std::invalid_argument("single-state spec takes one state");
  detail::check_state(s, xk);
  detail::check_state(s, xk1);
  const std::size_t m = s.dims.size();
  double b = s.params[0];
  for (std::size_t i = 0; i < m; ++i) {
    b += s.params[1 + i] * xk[s.dims[i]];
    b += s.params[1 + m + i] * xk1[s.dims[i]];
  }
  return b;
}

inline Vec eval_gradient(const BarrierSpec& s, const Vec& x) {
  if (s.arity != SpecArity::SingleState)
    throw std::invalid_argument("adjacent-pair spec needs two states");
  detail::check_state(s, x);
  Vec g = Vec::Zero(x.size());
  switch (s.kind) {
    case SpecKind::Ellipse: {
      double u = (x[s.dims[0]] - s.params[0]) / s.params[2];
      double v = (x[s.dims[1]] - s.params[1]) / s.params[3];
      g[s.dims[0]] = 2.0 * u / s.params[2];
      g[s.dims[1]] = 2.0 * v / s.params[3];
      break;
    }
    case SpecKind::QuarticSuperEllipse: {
      double u = (x[s.dims[0]] - s.params[0]) / s.params[2];
      double v = (x[s.dims[1]] - s.params[1]) / s.params[3];
      g[s.dims[0]] = 4.0 * u * u * u / s.params[2];
      g[s.dims[1]] = 4.0 * v * v * v / s.params[3];
      break;
    }
    case SpecKind::HalfSpace:
    case SpecKind::Box:
      for (std::size_t i = 0; i < s.dims.size(); ++i)
        g[s.dims[i]] += s.params[1 + i];
      break;
    default:
      throw std::invalid_argument("adjacent-pair spec needs two states");
  }
  return g;
}

// Gradient blocks with respect to (x_k, x_{k+1}).
inline std::pair<Vec, Vec> eval_gradient(const BarrierSpec& s, const Vec& xk,
                                         const Vec& xk1) {
  if (s.arity != SpecArity::AdjacentPair)
    throw std::invalid_argument("single-state spec takes one state");
  detail::check_state(s, xk);
  detail::check_state(s, xk1);
  const std::size_t m = s.dims.size();
  Vec gk = Vec::Zero(xk.size());
  Vec gk1 = Vec::Zero(xk1.size());
  for (std::size_t i = 0; i < m; ++i) {
    gk[s.dims[i]] += s.params[1 + i];
    gk1[s.dims[i]] += s.params[1 + m + i];
  }
  return {gk, gk1};
}

// Zero-velocity reduction of a pair spec; used for the last planning state,
// which has no successor, and for point-wise checks of conditioning pins.
inline BarrierSpec plain_variant(const BarrierSpec& s) {
  if (s.arity != SpecArity::AdjacentPair) return s;
  const std::size_t m = s.dims.size();
  BarrierSpec out;
  out.kind = s.kind == SpecKind::SpeedDependentBox ? SpecKind::Box
                                                   : SpecKind::HalfSpace;
  out.arity = SpecArity::SingleState;
  out.dims = s.dims;
  out.params.resize(1 + m);
  out.params[0] = s.params[0];
  for (std::size_t i = 0; i < m; ++i)
    out.params[1 + i] = s.params[1 + i] + s.params[1 + m + i];
  return out;
}

// ---- normalization ---------------------------------------------------------

// Rewrites spec parameters under the per-dimension affine map into [-1, 1]
// model space. Centers, offsets and limits map through the map; axes and
// linear rows scale by the dimension factor, so the zero level set is mapped
// exactly and the sign of b is preserved.
inline BarrierSpec normalize_spec(const BarrierSpec& s,
                                  const NormalizationStats& stats) {
  stats.validate();
  BarrierSpec out = s;
  switch (s.kind) {
    case SpecKind::Ellipse:
    case SpecKind::QuarticSuperEllipse: {
      int dx = s.dims[0], dy = s.dims[1];
      out.params[0] = stats.to_model(s.params[0], dx);
      out.params[1] = stats.to_model(s.params[1], dy);
      out.params[2] = stats.scale(dx) * s.params[2];
      out.params[3] = stats.scale(dy) * s.params[3];
      return out;
    }
    case SpecKind::HalfSpace:
    case SpecKind::Box: {
      // b'(x') = m_ref * b(x); coefficients keep their scale on dims[0].
      const double m_ref = stats.scale(s.dims[0]);
      double offset = m_ref * s.params[0];
      for (std::size_t i = 0; i < s.dims.size(); ++i) {
        const int d = s.dims[i];
        const double ratio = m_ref / stats.scale(d);
        out.params[1 + i] = s.params[1 + i] * ratio;
        offset -= s.params[1 + i] * ratio * stats.shift(d);
      }
      out.params[0] = offset;
      return out;
    }
    case SpecKind::SpeedDependentHalfSpace:
    case SpecKind::SpeedDependentBox: {
      const std::size_t m = s.dims.size();
      const double m_ref = stats.scale(s.dims[0]);
      double offset = m_ref * s.params[0];
      for (std::size_t i = 0; i < m; ++i) {
        const int d = s.dims[i];
        const double ratio = m_ref / stats.scale(d);
        out.params[1 + i] = s.params[1 + i] * ratio;
        out.params[1 + m + i] = s.params[1 + m + i] * ratio;
        offset -= (s.params[1 + i] + s.params[1 + m + i]) * ratio * stats.shift(d);
      }
      out.params[0] = offset;
      return out;
    }
  }
  return out;
}

}  // namespace cbfdiff::specs
