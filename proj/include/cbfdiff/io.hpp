// File formats: dataset table, model checkpoint, trajectory table and JSON
// reports. Every file starts with a header carrying the artifact version, the
// config fingerprint and the seed. Doubles round-trip exactly: data tables
// use 17 significant digits, checkpoints use hexadecimal floats.
#pragma once

#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>

#include "cbfdiff/denoiser.hpp"
#include "cbfdiff/maze.hpp"
#include "cbfdiff/svg_plot.hpp"

namespace cbfdiff::harness {

inline std::string hexfloat(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

namespace detail {
inline void expect(bool ok, const std::string& what) {
  if (!ok) throw std::runtime_error("parse error: " + what);
}
}  // namespace detail

// ---- dataset ----------------------------------------------------------------

inline void save_dataset(const std::string& path, const TrajectoryDataset& ds,
                         const FileHeader& h) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset file " + path);
  out << "# cbfdiff-dataset v1\n";
  out << "# version " << h.version << "\n";
  out << "# config_hash " << h.config_hash << "\n";
  out << "# seed " << h.seed << "\n";
  out << "# n_traj " << ds.flat.rows() << " horizon " << ds.horizon << " dim "
      << ds.dim << "\n";
  out << "# stats_min";
  for (Eigen::Index d = 0; d < ds.stats.min.size(); ++d)
    out << " " << hexfloat(ds.stats.min[d]);
  out << "\n# stats_max";
  for (Eigen::Index d = 0; d < ds.stats.max.size(); ++d)
    out << " " << hexfloat(ds.stats.max[d]);
  out << "\n# median_step_model " << hexfloat(ds.median_step_model) << "\n";
  out << "# columns: traj k";
  for (int d = 0; d < ds.dim; ++d) out << " x" << d;
  out << "\n";
  for (Eigen::Index i = 0; i < ds.flat.rows(); ++i)
    for (int k = 0; k <= ds.horizon; ++k) {
      out << i << " " << k;
      for (int d = 0; d < ds.dim; ++d)
        out << " " << format_double(ds.flat(i, static_cast<Eigen::Index>(k) * ds.dim + d));
      out << "\n";
    }
}

inline TrajectoryDataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read dataset file " + path);
  std::string line;
  std::getline(in, line);
  detail::expect(line.rfind("# cbfdiff-dataset v1", 0) == 0,
                 "not a dataset file: " + path);
  TrajectoryDataset ds;
  long n_traj = -1;
  while (in.peek() == '#') {
    std::getline(in, line);
    std::istringstream ls(line);
    std::string hash, key;
    ls >> hash >> key;
    if (key == "n_traj") {
      std::string kw;
      ls >> n_traj >> kw >> ds.horizon >> kw >> ds.dim;
    } else if (key == "stats_min" || key == "stats_max") {
      std::vector<double> vals;
      std::string tok;
      while (ls >> tok) vals.push_back(std::strtod(tok.c_str(), nullptr));
      Vec v(static_cast<Eigen::Index>(vals.size()));
      for (std::size_t i = 0; i < vals.size(); ++i) v[static_cast<Eigen::Index>(i)] = vals[i];
      (key == "stats_min" ? ds.stats.min : ds.stats.max) = v;
    } else if (key == "median_step_model") {
      std::string tok;
      ls >> tok;
      ds.median_step_model = std::strtod(tok.c_str(), nullptr);
    }
  }
  detail::expect(n_traj >= 0 && ds.horizon > 0 && ds.dim > 0,
                 "dataset header incomplete");
  ds.flat.resize(n_traj, static_cast<Eigen::Index>(ds.horizon + 1) * ds.dim);
  long i;
  int k;
  while (in >> i >> k) {
    for (int d = 0; d < ds.dim; ++d) {
      double v;
      in >> v;
      ds.flat(i, static_cast<Eigen::Index>(k) * ds.dim + d) = v;
    }
  }
  ds.stats.validate();
  return ds;
}

// ---- model checkpoint ---------------------------------------------------------

inline void save_checkpoint(const std::string& path,
                            const diffusion::DenoiserModel& m,
                            const FileHeader& h) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint file " + path);
  out << "# cbfdiff-checkpoint v1\n";
  out << "# version " << h.version << "\n";
  out << "# config_hash " << h.config_hash << "\n";
  out << "# seed " << h.seed << "\n";
  out << "arch input_dim " << m.input_dim << " time_dim " << m.time_dim
      << " hidden " << m.hidden << " layers " << m.layer_count() << "\n";
  for (int l = 0; l < m.layer_count(); ++l) {
    out << "W " << l << " " << m.W[l].rows() << " " << m.W[l].cols() << "\n";
    for (Eigen::Index r = 0; r < m.W[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < m.W[l].cols(); ++c)
        out << (c ? " " : "") << hexfloat(m.W[l](r, c));
      out << "\n";
    }
    out << "b " << l << " " << m.b[l].size() << "\n";
    for (Eigen::Index r = 0; r < m.b[l].size(); ++r)
      out << (r ? " " : "") << hexfloat(m.b[l][r]);
    out << "\n";
  }
}

inline diffusion::DenoiserModel load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint file " + path);
  std::string line;
  std::getline(in, line);
  detail::expect(line.rfind("# cbfdiff-checkpoint v1", 0) == 0,
                 "not a checkpoint file: " + path);
  while (in.peek() == '#') std::getline(in, line);

  diffusion::DenoiserModel m;
  std::string tok;
  int layers = 0;
  in >> tok;
  detail::expect(tok == "arch", "missing arch line");
  in >> tok >> m.input_dim >> tok >> m.time_dim >> tok >> m.hidden >> tok >>
      layers;
  for (int l = 0; l < layers; ++l) {
    int li;
    Eigen::Index rows, cols, size;
    in >> tok >> li >> rows >> cols;
    detail::expect(tok == "W" && li == l, "checkpoint weight block order");
    Mat W(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) {
        in >> tok;
        W(r, c) = std::strtod(tok.c_str(), nullptr);
      }
    m.W.push_back(std::move(W));
    in >> tok >> li >> size;
    detail::expect(tok == "b" && li == l, "checkpoint bias block order");
    Vec b(size);
    for (Eigen::Index r = 0; r < size; ++r) {
      in >> tok;
      b[r] = std::strtod(tok.c_str(), nullptr);
    }
    m.b.push_back(std::move(b));
  }
  detail::expect(m.layer_count() == layers, "checkpoint truncated");
  return m;
}

// ---- trajectory table ----------------------------------------------------------

inline void save_trajectory(const std::string& path, const Trajectory& t,
                            const FileHeader& h) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trajectory file " + path);
  out << "# cbfdiff-trajectory v1\n";
  out << "# version " << h.version << "\n";
  out << "# config_hash " << h.config_hash << "\n";
  out << "# seed " << h.seed << "\n";
  out << "# columns: k";
  for (int d = 0; d < t.dim(); ++d) out << " x" << d;
  out << "\n";
  for (int k = 0; k <= t.horizon(); ++k) {
    out << k;
    for (int d = 0; d < t.dim(); ++d)
      out << " " << format_double(t.states(k, d));
    out << "\n";
  }
}

inline Trajectory load_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read trajectory file " + path);
  std::string line;
  std::getline(in, line);
  detail::expect(line.rfind("# cbfdiff-trajectory v1", 0) == 0,
                 "not a trajectory file: " + path);
  while (in.peek() == '#') std::getline(in, line);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    int k;
    ls >> k;
    std::vector<double> vals;
    double v;
    while (ls >> v) vals.push_back(v);
    rows.push_back(std::move(vals));
  }
  detail::expect(!rows.empty(), "empty trajectory file");
  Trajectory t(static_cast<int>(rows.size()) - 1, static_cast<int>(rows[0].size()));
  for (std::size_t k = 0; k < rows.size(); ++k)
    for (std::size_t d = 0; d < rows[k].size(); ++d)
      t.states(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d)) = rows[k][d];
  return t;
}

// ---- JSON documents -------------------------------------------------------------

inline nlohmann::json header_json(const FileHeader& h) {
  return {{"format", "cbfdiff-report v1"},
          {"version", h.version},
          {"config_hash", h.config_hash},
          {"seed", h.seed}};
}

inline void save_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file " + path);
  out << j.dump(2) << "\n";
}

inline nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read file " + path);
  return nlohmann::json::parse(in);
}

}  // namespace cbfdiff::harness
