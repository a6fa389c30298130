// Grid maze world: occupancy grid, uniform-cost shortest paths, and the
// synthetic trajectory dataset used to train the planner. World coordinates
// are measured in cells, origin at the bottom-left corner; cell (cx, cy)
// spans [cx, cx+1) x [cy, cy+1).
#pragma once

#include <algorithm>
#include <cmath>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include "cbfdiff/diffusion.hpp"
#include "cbfdiff/rng.hpp"
#include "cbfdiff/specs.hpp"

namespace cbfdiff::harness {

using diffusion::Trajectory;

enum class SpecClass { Simple, Complex };

// A barrier spec with its benchmark bookkeeping: reporting class and a label.
struct EvalSpec {
  specs::BarrierSpec spec;
  SpecClass cls = SpecClass::Simple;
  std::string name;
};

struct Cell {
  int x = 0, y = 0;
  bool operator==(const Cell& o) const { return x == o.x && y == o.y; }
};

struct MazeDefinition {
  int width = 0, height = 0;
  std::vector<std::uint8_t> blocked;  // row-major, index y * width + x
  std::vector<EvalSpec> eval_specs;   // obstacles unseen at training time

  bool is_blocked(int cx, int cy) const {
    if (cx < 0 || cy < 0 || cx >= width || cy >= height) return true;
    return blocked[static_cast<std::size_t>(cy) * width + cx] != 0;
  }
  bool is_free(int cx, int cy) const { return !is_blocked(cx, cy); }
  Cell cell_of(double wx, double wy) const {
    return {static_cast<int>(std::floor(wx)), static_cast<int>(std::floor(wy))};
  }
  bool point_free(double wx, double wy) const {
    const Cell c = cell_of(wx, wy);
    return is_free(c.x, c.y);
  }
  std::vector<Cell> free_cells() const {
    std::vector<Cell> out;
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        if (is_free(x, y)) out.push_back({x, y});
    return out;
  }
};

// Rows are listed top to bottom; '#' marks blocked cells.
inline MazeDefinition maze_from_rows(const std::vector<std::string>& rows) {
  if (rows.empty()) throw std::invalid_argument("empty maze");
  MazeDefinition m;
  m.height = static_cast<int>(rows.size());
  m.width = static_cast<int>(rows[0].size());
  m.blocked.assign(static_cast<std::size_t>(m.width) * m.height, 0);
  for (int r = 0; r < m.height; ++r) {
    if (static_cast<int>(rows[r].size()) != m.width)
      throw std::invalid_argument("ragged maze rows");
    const int y = m.height - 1 - r;
    for (int x = 0; x < m.width; ++x)
      if (rows[r][x] == '#')
        m.blocked[static_cast<std::size_t>(y) * m.width + x] = 1;
  }
  return m;
}

inline bool connected_free_space(const MazeDefinition& m) {
  auto cells = m.free_cells();
  if (cells.empty()) return false;
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(m.width) * m.height, 0);
  std::vector<Cell> stack = {cells[0]};
  seen[static_cast<std::size_t>(cells[0].y) * m.width + cells[0].x] = 1;
  std::size_t count = 0;
  while (!stack.empty()) {
    const Cell c = stack.back();
    stack.pop_back();
    ++count;
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0) continue;
        if (dx != 0 && dy != 0) continue;  // 4-connectivity is enough here
        const int nx = c.x + dx, ny = c.y + dy;
        if (!m.is_free(nx, ny)) continue;
        auto& s = seen[static_cast<std::size_t>(ny) * m.width + nx];
        if (!s) {
          s = 1;
          stack.push_back({nx, ny});
        }
      }
  }
  return count == cells.size();
}

// Uniform-cost search over the 8-connected grid (diagonal step cost sqrt(2),
// no corner cutting). Ties break on insertion index, so paths are
// deterministic. Returns the cell path including both endpoints, or empty if
// unreachable.
inline std::vector<Cell> shortest_path(const MazeDefinition& m, Cell start,
                                       Cell goal) {
  if (!m.is_free(start.x, start.y) || !m.is_free(goal.x, goal.y)) return {};
  const int n = m.width * m.height;
  auto idx = [&](const Cell& c) { return c.y * m.width + c.x; };
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::vector<int> parent(n, -1);
  using Entry = std::tuple<double, long, int>;  // cost, tie, cell index
  std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> open;
  long tie = 0;
  dist[idx(start)] = 0.0;
  open.emplace(0.0, tie++, idx(start));
  while (!open.empty()) {
    auto [cost, t, ci] = open.top();
    open.pop();
    if (cost > dist[ci]) continue;
    if (ci == idx(goal)) break;
    const Cell c{ci % m.width, ci / m.width};
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0) continue;
        const int nx = c.x + dx, ny = c.y + dy;
        if (!m.is_free(nx, ny)) continue;
        if (dx != 0 && dy != 0 &&
            (!m.is_free(c.x + dx, c.y) || !m.is_free(c.x, c.y + dy)))
          continue;  // no corner cutting
        const double step = (dx != 0 && dy != 0) ? std::sqrt(2.0) : 1.0;
        const int ni = ny * m.width + nx;
        if (cost + step < dist[ni] - 1e-12) {
          dist[ni] = cost + step;
          parent[ni] = ci;
          open.emplace(dist[ni], tie++, ni);
        }
      }
  }
  if (!std::isfinite(dist[idx(goal)])) return {};
  std::vector<Cell> path;
  for (int ci = idx(goal); ci != -1; ci = parent[ci])
    path.push_back({ci % m.width, ci / m.width});
  std::reverse(path.begin(), path.end());
  return path;
}

// Resamples a polyline to exactly n points, spaced uniformly in arc length.
// A zero-length polyline yields n copies of its first point.
inline Mat resample_arclength(const Mat& points, int n) {
  if (points.rows() < 1 || n < 1)
    throw std::invalid_argument("resample needs at least one point");
  const Eigen::Index m = points.rows();
  Vec cum(m);
  cum[0] = 0.0;
  for (Eigen::Index i = 1; i < m; ++i)
    cum[i] = cum[i - 1] + (points.row(i) - points.row(i - 1)).norm();
  Mat out(n, points.cols());
  const double total = cum[m - 1];
  if (total == 0.0 || n == 1) {
    for (int i = 0; i < n; ++i) out.row(i) = points.row(0);
    return out;
  }
  Eigen::Index seg = 0;
  for (int i = 0; i < n; ++i) {
    const double target = total * i / double(n - 1);
    while (seg + 1 < m - 1 && cum[seg + 1] < target) ++seg;
    const double len = cum[seg + 1] - cum[seg];
    const double t = len > 0.0 ? (target - cum[seg]) / len : 0.0;
    out.row(i) = (1.0 - t) * points.row(seg) + t * points.row(seg + 1);
  }
  return out;
}

struct TrajectoryDataset {
  Mat flat;  // n_traj x (H+1)*d, normalized to [-1, 1]
  int horizon = 0;
  int dim = 2;
  specs::NormalizationStats stats;
  double median_step_model = 0.0;  // median consecutive-state gap, model space

  Trajectory trajectory(int i) const {
    return diffusion::unflatten(flat.row(i).transpose(), horizon, dim);
  }
};

// Shortest grid paths between random free cells, arc-length resampled to H+1
// states, jittered, then min-max normalized into [-1, 1].
inline TrajectoryDataset generate_dataset(const MazeDefinition& maze, int n_traj,
                                          int horizon, Rng& rng,
                                          double jitter_frac = 0.02) {
  if (!connected_free_space(maze))
    throw std::invalid_argument("maze free space is not connected");
  const auto cells = maze.free_cells();
  if (cells.empty()) throw std::invalid_argument("maze has no free cells");

  TrajectoryDataset ds;
  ds.horizon = horizon;
  ds.dim = 2;
  Mat world(n_traj, (horizon + 1) * 2);
  for (int i = 0; i < n_traj; ++i) {
    std::vector<Cell> path;
    for (int attempt = 0; attempt < 100 && path.empty(); ++attempt) {
      const Cell a = cells[rng.uniform_index(cells.size())];
      const Cell b = cells[rng.uniform_index(cells.size())];
      path = shortest_path(maze, a, b);
    }
    if (path.empty()) throw std::runtime_error("no path found in maze");
    Mat pts(static_cast<Eigen::Index>(path.size()), 2);
    for (std::size_t p = 0; p < path.size(); ++p)
      pts.row(static_cast<Eigen::Index>(p)) << path[p].x + 0.5, path[p].y + 0.5;
    Mat traj = resample_arclength(pts, horizon + 1);
    for (int k = 0; k <= horizon; ++k)
      for (int d = 0; d < 2; ++d)
        traj(k, d) += jitter_frac * rng.normal();
    for (int k = 0; k <= horizon; ++k) {
      world(i, 2 * k) = traj(k, 0);
      world(i, 2 * k + 1) = traj(k, 1);
    }
  }

  // Per-dimension min/max over the whole dataset. A dimension the data never
  // varies in (single-row corridor, zero jitter) is padded by half a cell so
  // the affine map stays invertible.
  Vec lo = Vec::Constant(2, std::numeric_limits<double>::infinity());
  Vec hi = Vec::Constant(2, -std::numeric_limits<double>::infinity());
  for (int i = 0; i < n_traj; ++i)
    for (int k = 0; k <= horizon; ++k)
      for (int d = 0; d < 2; ++d) {
        lo[d] = std::min(lo[d], world(i, 2 * k + d));
        hi[d] = std::max(hi[d], world(i, 2 * k + d));
      }
  for (int d = 0; d < 2; ++d)
    if (!(hi[d] - lo[d] > 1e-9)) {
      lo[d] -= 0.5;
      hi[d] += 0.5;
    }
  ds.stats.min = lo;
  ds.stats.max = hi;
  ds.stats.validate();

  ds.flat.resize(n_traj, (horizon + 1) * 2);
  std::vector<double> gaps;
  for (int i = 0; i < n_traj; ++i) {
    for (int k = 0; k <= horizon; ++k)
      for (int d = 0; d < 2; ++d)
        ds.flat(i, 2 * k + d) = ds.stats.to_model(world(i, 2 * k + d), d);
    for (int k = 1; k <= horizon; ++k) {
      const double gx = ds.flat(i, 2 * k) - ds.flat(i, 2 * (k - 1));
      const double gy = ds.flat(i, 2 * k + 1) - ds.flat(i, 2 * (k - 1) + 1);
      gaps.push_back(std::sqrt(gx * gx + gy * gy));
    }
  }
  std::sort(gaps.begin(), gaps.end());
  ds.median_step_model = gaps.empty() ? 0.0 : gaps[gaps.size() / 2];
  return ds;
}

// World-space <-> model-space trajectory conversion.
inline Trajectory to_world(const Trajectory& model_space,
                           const specs::NormalizationStats& stats) {
  Trajectory out = model_space;
  for (Eigen::Index k = 0; k < out.states.rows(); ++k)
    for (Eigen::Index d = 0; d < out.states.cols(); ++d)
      out.states(k, d) =
          stats.to_world(out.states(k, d), static_cast<int>(d));
  return out;
}

}  // namespace cbfdiff::harness
