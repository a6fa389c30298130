// Benchmark metrics: spec satisfaction statistics and the planning score.
#pragma once

#include <cmath>
#include <vector>

#include "cbfdiff/invariance.hpp"
#include "cbfdiff/maze.hpp"

namespace cbfdiff::harness {

struct Satisfaction {
  double min = std::numeric_limits<double>::infinity();
  double mean = 0.0;
  double viol_mean = 0.0;  // mean of max(0, -b) over terms
  long terms = 0;

  void accumulate(double b) {
    min = std::min(min, b);
    mean += b;
    viol_mean += std::max(0.0, -b);
    ++terms;
  }
  void finalize() {
    if (terms > 0) {
      mean /= terms;
      viol_mean /= terms;
    } else {
      min = 0.0;
    }
  }
};

// Min and mean of b over all planning steps and specs (both reported; the
// benchmark tables list the min alongside the mean).
inline Satisfaction spec_satisfaction(const Trajectory& traj,
                                      const std::vector<specs::BarrierSpec>& sp) {
  Satisfaction s;
  for (const auto& spec : sp)
    for (int k = 0; k <= traj.horizon(); ++k)
      s.accumulate(invariance::term_value(spec, traj, k));
  s.finalize();
  return s;
}

inline Satisfaction spec_satisfaction_class(const Trajectory& traj,
                                            const std::vector<EvalSpec>& sp,
                                            SpecClass cls) {
  Satisfaction s;
  for (const auto& es : sp) {
    if (es.cls != cls) continue;
    for (int k = 0; k <= traj.horizon(); ++k)
      s.accumulate(invariance::term_value(es.spec, traj, k));
  }
  s.finalize();
  return s;
}

// Planning score in [0, 1]: half for reaching the goal neighbourhood near the
// end of the trajectory, half for the fraction of states in free cells.
// Operates on world coordinates.
inline double score(const Trajectory& traj_world, const MazeDefinition& maze,
                    const Vec& goal_world, double r_goal = 0.5) {
  const int H = traj_world.horizon();
  double best = std::numeric_limits<double>::infinity();
  for (int k = std::max(0, H - 2); k <= H; ++k)
    best = std::min(best, (traj_world.state(k) - goal_world).norm());
  const double reached = best <= r_goal ? 1.0 : 0.0;
  int free_count = 0;
  for (int k = 0; k <= H; ++k)
    if (maze.point_free(traj_world.states(k, 0), traj_world.states(k, 1)))
      ++free_count;
  return 0.5 * reached + 0.5 * (double(free_count) / (H + 1));
}

}  // namespace cbfdiff::harness
