// Minimum-deviation projection QP.
//
// Solves   min_{u,r}  ||u - u_nom||^2 + ||r||^2
//          s.t.       a_i . u - w_i r_i >= c_i          for every row i
//
// with an identity Hessian, sparse rows (each touches one or two planning
// state blocks of u) and optional relaxation variables. The solver is dual
// coordinate ascent over the row multipliers (Hildreth): with the identity
// Hessian every multiplier update reduces to a scalar clamp
//
//   lambda_i <- max(0, lambda_i + (c_i - a~_i . z) / ||a~_i||^2),
//
// where a~_i is the row extended with -w_i on its relaxation slot and
// z = (u, r) is the current primal iterate, recovered as
// u = u_nom + sum_i lambda_i a_i and r_j = -sum_{i: relax=j} lambda_i w_i.
// The sweep order is insertion order, so results are deterministic.
#pragma once

#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cbfdiff/common.hpp"

namespace cbfdiff::qp {

struct VanishingGradientError : std::runtime_error {
  explicit VanishingGradientError(const std::string& msg)
      : std::runtime_error(msg) {}
};

// One inequality row a . u - w r >= c. Coefficients are sparse over the
// flattened velocity vector: block0 always holds coefficients, block1 is the
// optional second planning-state block of an adjacent-pair constraint.
struct ConstraintRow {
  int block0 = 0;
  Vec a0;
  int block1 = -1;
  Vec a1;
  double rhs = 0.0;           // c_i
  double relax_weight = 0.0;  // w_i; 0 means the row is hard
  int relax_index = -1;

  double dot_u(const Vec& u, int bs) const {
    double v = a0.dot(u.segment(static_cast<Eigen::Index>(block0) * bs, bs));
    if (block1 >= 0)
      v += a1.dot(u.segment(static_cast<Eigen::Index>(block1) * bs, bs));
    return v;
  }
  double norm2() const {
    double n = a0.squaredNorm();
    if (block1 >= 0) n += a1.squaredNorm();
    return n;
  }

  bool touches(int block) const { return block0 == block || block1 == block; }

  // Inner product of the extended rows (a, -w e_relax) of two constraints.
  double cross(const ConstraintRow& o) const {
    double v = 0.0;
    if (o.touches(block0)) v += a0.dot(o.block0 == block0 ? o.a0 : o.a1);
    if (block1 >= 0 && o.touches(block1))
      v += a1.dot(o.block0 == block1 ? o.a0 : o.a1);
    if (relax_weight > 0.0 && o.relax_weight > 0.0 &&
        relax_index == o.relax_index)
      v += relax_weight * o.relax_weight;
    return v;
  }
};

struct ProjectionProblem {
  Vec u_nom;
  int block_size = 1;  // u is partitioned into blocks of this size
  std::vector<ConstraintRow> rows;
  int relax_dim = 0;

  void validate() const {
    if (block_size <= 0 || u_nom.size() % block_size != 0)
      throw std::invalid_argument("u_nom is not a whole number of blocks");
    const int nblocks = static_cast<int>(u_nom.size()) / block_size;
    for (const auto& row : rows) {
      if (row.block0 < 0 || row.block0 >= nblocks ||
          row.a0.size() != block_size)
        throw std::invalid_argument("constraint row block0 out of range");
      if (row.block1 >= 0 &&
          (row.block1 >= nblocks || row.a1.size() != block_size))
        throw std::invalid_argument("constraint row block1 out of range");
      if (row.relax_weight < 0.0)
        throw std::invalid_argument("relaxation weight must be >= 0");
      if (row.relax_weight > 0.0 &&
          (row.relax_index < 0 || row.relax_index >= relax_dim))
        throw std::invalid_argument("relax index out of range");
    }
  }
};

struct ProjectionSolution {
  Vec u;
  Vec r;
  Vec duals;
  double kkt_residual = 0.0;
  int iterations = 0;  // completed sweeps
  bool converged = false;
};

// Max KKT violation of a candidate solution: stationarity in u and r, primal
// feasibility, dual nonnegativity and complementary slackness. Row residuals
// are measured on equilibrated rows (gradient norms capped below at 1), so
// the tolerance means "violation per unit of row gradient": rows with huge
// gradients do not demand absolute precision beyond 64-bit reach, while rows
// with tiny gradients stay absolute. The complementarity term additionally
// carries the usual 1/(1 + lambda) scaling.
inline double kkt_residual(const ProjectionProblem& p,
                           const ProjectionSolution& sol) {
  const int bs = p.block_size;
  Vec stat_u = sol.u - p.u_nom;
  Vec stat_r = sol.r;
  double res = 0.0;
  for (std::size_t i = 0; i < p.rows.size(); ++i) {
    const auto& row = p.rows[i];
    const double lam = sol.duals[static_cast<Eigen::Index>(i)];
    stat_u.segment(static_cast<Eigen::Index>(row.block0) * bs, bs) -=
        lam * row.a0;
    if (row.block1 >= 0)
      stat_u.segment(static_cast<Eigen::Index>(row.block1) * bs, bs) -=
          lam * row.a1;
    double g = row.dot_u(sol.u, bs) - row.rhs;
    if (row.relax_weight > 0.0) {
      g -= row.relax_weight * sol.r[row.relax_index];
      stat_r[row.relax_index] += lam * row.relax_weight;
    }
    const double scale = std::max(
        1.0, std::sqrt(row.norm2() + row.relax_weight * row.relax_weight));
    const double gs = g / scale;
    const double lam_s = lam * scale;
    res = std::max(res, -std::min(gs, 0.0));                   // primal
    res = std::max(res, -std::min(lam, 0.0));                  // dual sign
    res = std::max(res, std::abs(lam_s * gs) / (1.0 + lam_s)); // compl.
  }
  res = std::max(res, stat_u.lpNorm<Eigen::Infinity>());
  if (stat_r.size() > 0) res = std::max(res, stat_r.lpNorm<Eigen::Infinity>());
  return res;
}

inline ProjectionSolution solve_projection(const ProjectionProblem& p,
                                           double tol = 1e-9,
                                           int max_iter = 10000) {
  p.validate();
  const int bs = p.block_size;
  ProjectionSolution sol;
  sol.u = p.u_nom;
  sol.r = Vec::Zero(p.relax_dim);
  sol.duals = Vec::Zero(static_cast<Eigen::Index>(p.rows.size()));

  const std::size_t n = p.rows.size();
  std::vector<double> norm2(n);
  std::vector<bool> active(n, true);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = p.rows[i];
    double nn = row.norm2() + row.relax_weight * row.relax_weight;
    norm2[i] = nn;
    if (nn == 0.0) {
      if (row.rhs > 0.0)
        throw VanishingGradientError(
            "hard constraint row with zero gradient and positive bound");
      active[i] = false;  // trivially satisfied forever
    }
  }

  std::vector<double> scale(n);
  for (std::size_t i = 0; i < n; ++i)
    scale[i] = std::max(1.0, std::sqrt(norm2[i]));

  // Rows that share a planning-state block (or a relaxation slot) get exact
  // two-coordinate dual updates in addition to the scalar sweep. Scalar
  // clamps alone converge at rate cos^2(theta) between coupled rows, which
  // stalls when an obstacle-exit row runs nearly anti-parallel to another
  // spec's approach-rate row; the 2x2 solve closes those in one update.
  struct CoupledPair {
    std::size_t i, j;
    double nij;
  };
  std::vector<CoupledPair> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    if (!active[i]) continue;
    for (std::size_t j = i + 1; j < n; ++j) {
      if (!active[j]) continue;
      const auto& ri = p.rows[i];
      const auto& rj = p.rows[j];
      const bool share_block = rj.touches(ri.block0) ||
                               (ri.block1 >= 0 && rj.touches(ri.block1));
      const bool share_relax = ri.relax_weight > 0.0 && rj.relax_weight > 0.0 &&
                               ri.relax_index == rj.relax_index;
      if (share_block || share_relax) pairs.push_back({i, j, ri.cross(rj)});
    }
  }

  auto row_gap = [&](std::size_t i) {
    const auto& row = p.rows[i];
    double g = row.dot_u(sol.u, bs) - row.rhs;
    if (row.relax_weight > 0.0) g -= row.relax_weight * sol.r[row.relax_index];
    return g;
  };
  auto apply_delta = [&](std::size_t i, double delta) {
    if (delta == 0.0) return;
    const auto& row = p.rows[i];
    sol.duals[static_cast<Eigen::Index>(i)] += delta;
    sol.u.segment(static_cast<Eigen::Index>(row.block0) * bs, bs) +=
        delta * row.a0;
    if (row.block1 >= 0)
      sol.u.segment(static_cast<Eigen::Index>(row.block1) * bs, bs) +=
          delta * row.a1;
    if (row.relax_weight > 0.0)
      sol.r[row.relax_index] -= delta * row.relax_weight;
  };

  for (int sweep = 1; sweep <= max_iter; ++sweep) {
    double residual = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!active[i]) continue;
      const double g = row_gap(i);
      const double lam = sol.duals[static_cast<Eigen::Index>(i)];
      double lam_new = lam - g / norm2[i];
      if (lam_new < 0.0) lam_new = 0.0;
      apply_delta(i, lam_new - lam);
      const double gs = g / scale[i];
      const double lam_s = lam_new * scale[i];
      residual = std::max(residual, std::abs(lam_s * gs) / (1.0 + lam_s));
      residual = std::max(residual, -std::min(gs, 0.0));
    }
    for (const auto& [i, j, nij] : pairs) {
      // Maximize the dual over (lambda_i, lambda_j) with the rest fixed:
      // quadratic with Gram [[nii, nij], [nij, njj]], gradient (gi, gj).
      const double nii = norm2[i], njj = norm2[j];
      const double gi = -row_gap(i), gj = -row_gap(j);
      const double li = sol.duals[static_cast<Eigen::Index>(i)];
      const double lj = sol.duals[static_cast<Eigen::Index>(j)];
      const double det = nii * njj - nij * nij;

      double best_di = 0.0, best_dj = 0.0, best_gain = 0.0;
      auto consider = [&](double di, double dj) {
        if (li + di < 0.0 || lj + dj < 0.0) return;
        const double gain = di * gi + dj * gj -
                            0.5 * (nii * di * di + 2.0 * nij * di * dj +
                                   njj * dj * dj);
        if (gain > best_gain) {
          best_gain = gain;
          best_di = di;
          best_dj = dj;
        }
      };
      if (det > 1e-12 * nii * njj)
        consider((njj * gi - nij * gj) / det, (nii * gj - nij * gi) / det);
      consider(-li, std::max(-lj, (gj + nij * li) / njj));   // lambda_i -> 0
      consider(std::max(-li, (gi + nij * lj) / nii), -lj);   // lambda_j -> 0
      if (best_gain > 0.0) {
        apply_delta(i, best_di);
        apply_delta(j, best_dj);
      }
    }
    sol.iterations = sweep;
    // The in-sweep residual uses pre-update row values; confirm on the final
    // iterate before declaring convergence.
    if (residual <= tol) {
      sol.kkt_residual = kkt_residual(p, sol);
      if (sol.kkt_residual <= tol) {
        sol.converged = true;
        return sol;
      }
    }
  }
  sol.kkt_residual = kkt_residual(p, sol);
  sol.converged = sol.kkt_residual <= tol;
  return sol;
}

// Structured text dump of a problem (and optionally a solution) for failure
// triage.
inline std::string describe(const ProjectionProblem& p,
                            const ProjectionSolution* sol = nullptr) {
  std::ostringstream os;
  os.precision(17);
  os << "projection-problem block_size=" << p.block_size
     << " u_dim=" << p.u_nom.size() << " rows=" << p.rows.size()
     << " relax_dim=" << p.relax_dim << "\n";
  os << "u_nom";
  for (Eigen::Index i = 0; i < p.u_nom.size(); ++i) os << " " << p.u_nom[i];
  os << "\n";
  for (std::size_t i = 0; i < p.rows.size(); ++i) {
    const auto& r = p.rows[i];
    os << "row " << i << " block0=" << r.block0 << " a0=[";
    for (Eigen::Index k = 0; k < r.a0.size(); ++k) os << (k ? " " : "") << r.a0[k];
    os << "]";
    if (r.block1 >= 0) {
      os << " block1=" << r.block1 << " a1=[";
      for (Eigen::Index k = 0; k < r.a1.size(); ++k) os << (k ? " " : "") << r.a1[k];
      os << "]";
    }
    os << " rhs=" << r.rhs;
    if (r.relax_weight > 0.0)
      os << " w=" << r.relax_weight << " r_index=" << r.relax_index;
    if (sol) os << " lambda=" << sol->duals[static_cast<Eigen::Index>(i)];
    os << "\n";
  }
  if (sol) {
    os << "solution converged=" << sol->converged
       << " iterations=" << sol->iterations
       << " kkt_residual=" << sol->kkt_residual << "\nu";
    for (Eigen::Index i = 0; i < sol->u.size(); ++i) os << " " << sol->u[i];
    os << "\n";
    if (sol->r.size() > 0) {
      os << "r";
      for (Eigen::Index i = 0; i < sol->r.size(); ++i) os << " " << sol->r[i];
      os << "\n";
    }
  }
  return os.str();
}

// Exact projection onto a single hard half-space row:
// u = u_nom + max(0, c - a . u_nom) / ||a||^2 * a.
inline Vec closed_form_single(const Vec& u_nom, const ConstraintRow& row,
                              int block_size) {
  if (row.relax_weight != 0.0)
    throw std::invalid_argument("closed form applies to hard rows only");
  const double nn = row.norm2();
  if (nn == 0.0) {
    if (row.rhs > 0.0)
      throw VanishingGradientError(
          "hard constraint row with zero gradient and positive bound");
    return u_nom;
  }
  const double gap = row.rhs - row.dot_u(u_nom, block_size);
  Vec u = u_nom;
  if (gap > 0.0) {
    const double lam = gap / nn;
    u.segment(static_cast<Eigen::Index>(row.block0) * block_size, block_size) +=
        lam * row.a0;
    if (row.block1 >= 0)
      u.segment(static_cast<Eigen::Index>(row.block1) * block_size,
                block_size) += lam * row.a1;
  }
  return u;
}

}  // namespace cbfdiff::qp
