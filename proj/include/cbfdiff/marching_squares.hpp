// Marching squares: extracts the zero level set of a scalar field as line
// segments with linear interpolation along cell edges. Ambiguous saddle cells
// are disambiguated with the cell-center value.
#pragma once

#include <functional>
#include <vector>

#include "cbfdiff/common.hpp"

namespace cbfdiff::harness {

struct Segment {
  double ax = 0, ay = 0, bx = 0, by = 0;
};

using ScalarField = std::function<double(double, double)>;

inline std::vector<Segment> marching_squares(const ScalarField& f, double x0,
                                             double x1, double y0, double y1,
                                             int nx, int ny) {
  if (nx < 1 || ny < 1) throw std::invalid_argument("grid too small");
  const double hx = (x1 - x0) / nx, hy = (y1 - y0) / ny;
  Mat values(nx + 1, ny + 1);
  for (int i = 0; i <= nx; ++i)
    for (int j = 0; j <= ny; ++j) values(i, j) = f(x0 + i * hx, y0 + j * hy);

  auto interp = [](double xa, double xb, double va, double vb) {
    const double t = va == vb ? 0.5 : va / (va - vb);
    return xa + t * (xb - xa);
  };

  std::vector<Segment> segs;
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j) {
      const double xa = x0 + i * hx, xb = xa + hx;
      const double ya = y0 + j * hy, yb = ya + hy;
      const double v00 = values(i, j), v10 = values(i + 1, j);
      const double v01 = values(i, j + 1), v11 = values(i + 1, j + 1);
      int mask = 0;
      if (v00 < 0) mask |= 1;
      if (v10 < 0) mask |= 2;
      if (v11 < 0) mask |= 4;
      if (v01 < 0) mask |= 8;
      if (mask == 0 || mask == 15) continue;

      // Edge crossings: bottom, right, top, left.
      const double bx_ = interp(xa, xb, v00, v10), by_ = ya;
      const double rx = xb, ry = interp(ya, yb, v10, v11);
      const double tx = interp(xa, xb, v01, v11), ty = yb;
      const double lx = xa, ly = interp(ya, yb, v00, v01);
      auto add = [&](double p1x, double p1y, double p2x, double p2y) {
        segs.push_back({p1x, p1y, p2x, p2y});
      };
      switch (mask) {
        case 1: case 14: add(lx, ly, bx_, by_); break;
        case 2: case 13: add(bx_, by_, rx, ry); break;
        case 3: case 12: add(lx, ly, rx, ry); break;
        case 4: case 11: add(rx, ry, tx, ty); break;
        case 6: case 9: add(bx_, by_, tx, ty); break;
        case 7: case 8: add(lx, ly, tx, ty); break;
        case 5: case 10: {
          // Saddle: connect so segments hug the corners on the opposite side
          // of the center sample.
          const double center = f(0.5 * (xa + xb), 0.5 * (ya + yb));
          if ((center < 0) == (mask == 10)) {
            add(lx, ly, bx_, by_);
            add(rx, ry, tx, ty);
          } else {
            add(lx, ly, tx, ty);
            add(bx_, by_, rx, ry);
          }
          break;
        }
        default: break;
      }
    }
  return segs;
}

}  // namespace cbfdiff::harness
