// SVG rendering of a maze, spec boundaries (zero level sets traced by
// marching squares) and trajectories with start/goal markers. World
// coordinates; y is flipped into SVG screen space.
#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "cbfdiff/marching_squares.hpp"
#include "cbfdiff/maze.hpp"

namespace cbfdiff::harness {

struct FileHeader {
  std::string version = kVersion;
  std::string config_hash = "0";
  std::uint64_t seed = 0;
};

inline void emit_plot(const std::string& path, const MazeDefinition& maze,
                      const std::vector<Trajectory>& trajs_world,
                      const FileHeader& header) {
  const double scale = 64.0;
  const double Wpx = maze.width * scale, Hpx = maze.height * scale;
  auto X = [&](double wx) { return wx * scale; };
  auto Y = [&](double wy) { return (maze.height - wy) * scale; };

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write plot file " + path);
  out.precision(3);
  out << std::fixed;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<!-- cbfdiff-plot v1 version=" << header.version
      << " config_hash=" << header.config_hash << " seed=" << header.seed
      << " -->\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << Wpx
      << "\" height=\"" << Hpx << "\" viewBox=\"0 0 " << Wpx << " " << Hpx
      << "\">\n";
  out << "<rect width=\"" << Wpx << "\" height=\"" << Hpx
      << "\" fill=\"white\"/>\n";

  for (int y = 0; y < maze.height; ++y)
    for (int x = 0; x < maze.width; ++x)
      if (maze.is_blocked(x, y))
        out << "<rect x=\"" << X(x) << "\" y=\"" << Y(y + 1) << "\" width=\""
            << scale << "\" height=\"" << scale << "\" fill=\"#555\"/>\n";
  for (int x = 0; x <= maze.width; ++x)
    out << "<line x1=\"" << X(x) << "\" y1=\"0\" x2=\"" << X(x) << "\" y2=\""
        << Hpx << "\" stroke=\"#ddd\" stroke-width=\"1\"/>\n";
  for (int y = 0; y <= maze.height; ++y)
    out << "<line x1=\"0\" y1=\"" << Y(y) << "\" x2=\"" << Wpx << "\" y2=\""
        << Y(y) << "\" stroke=\"#ddd\" stroke-width=\"1\"/>\n";

  for (const auto& es : maze.eval_specs) {
    const auto single = es.spec.arity == specs::SpecArity::AdjacentPair
                            ? specs::plain_variant(es.spec)
                            : es.spec;
    auto field = [&](double wx, double wy) {
      Vec p(2);
      p << wx, wy;
      return specs::eval_barrier(single, p);
    };
    auto segs = marching_squares(field, 0.0, maze.width, 0.0, maze.height,
                                 maze.width * 16, maze.height * 16);
    for (const auto& s : segs)
      out << "<line x1=\"" << X(s.ax) << "\" y1=\"" << Y(s.ay) << "\" x2=\""
          << X(s.bx) << "\" y2=\"" << Y(s.by)
          << "\" stroke=\"#d22\" stroke-width=\"2\"/>\n";
  }

  static const char* palette[] = {"#16c", "#2a2", "#c62", "#92b", "#088"};
  int color = 0;
  for (const auto& t : trajs_world) {
    out << "<polyline fill=\"none\" stroke=\"" << palette[color % 5]
        << "\" stroke-width=\"2\" points=\"";
    for (Eigen::Index k = 0; k < t.states.rows(); ++k)
      out << X(t.states(k, 0)) << "," << Y(t.states(k, 1)) << " ";
    out << "\"/>\n";
    if (t.states.rows() > 0) {
      out << "<circle cx=\"" << X(t.states(0, 0)) << "\" cy=\""
          << Y(t.states(0, 1)) << "\" r=\"6\" fill=\"#2a2\"/>\n";
      const auto last = t.states.rows() - 1;
      out << "<circle cx=\"" << X(t.states(last, 0)) << "\" cy=\""
          << Y(t.states(last, 1)) << "\" r=\"6\" fill=\"#d22\"/>\n";
    }
    ++color;
  }
  out << "</svg>\n";
}

}  // namespace cbfdiff::harness
