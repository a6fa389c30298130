// Configuration document: one JSON file drives dataset generation, training,
// planning and the benchmark protocol. Missing keys fall back to the built-in
// defaults; the effective document is fingerprinted into every output file.
#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "cbfdiff/baselines.hpp"
#include "cbfdiff/diffusion.hpp"
#include "cbfdiff/invariance.hpp"
#include "cbfdiff/maze.hpp"

namespace cbfdiff::harness {

using nlohmann::json;

inline Vec vec_from(const json& j) {
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

// One config entry -> one or more barrier specs (boxes expand to their rows).
inline std::vector<EvalSpec> parse_spec_entry(const json& e) {
  const std::string kind = e.at("kind").get<std::string>();
  const SpecClass cls =
      e.value("class", kind == "ellipse" || kind == "roof" || kind == "box"
                           ? "simple"
                           : "complex") == "simple"
          ? SpecClass::Simple
          : SpecClass::Complex;
  const std::string name = e.value("name", kind);
  std::vector<EvalSpec> out;
  auto push = [&](specs::BarrierSpec s, const std::string& suffix = "") {
    out.push_back({std::move(s), cls, suffix.empty() ? name : name + suffix});
  };
  if (kind == "ellipse") {
    push(specs::make_ellipse(vec_from(e.at("center")), vec_from(e.at("axes")),
                             e.value("dims", std::vector<int>{0, 1})));
  } else if (kind == "quartic" || kind == "quartic_superellipse") {
    push(specs::make_quartic_superellipse(
        vec_from(e.at("center")), vec_from(e.at("axes")),
        e.value("dims", std::vector<int>{0, 1})));
  } else if (kind == "roof") {
    push(specs::make_roof(e.at("height").get<double>(), e.value("dim", 1)));
  } else if (kind == "speed_roof") {
    push(specs::make_speed_dependent_roof(e.at("height").get<double>(),
                                          e.at("phi").get<double>(),
                                          e.value("dim", 1)));
  } else if (kind == "box") {
    auto rows = specs::make_joint_box(vec_from(e.at("min")), vec_from(e.at("max")),
                                      e.value("dims", std::vector<int>{}));
    for (std::size_t i = 0; i < rows.size(); ++i)
      push(rows[i], "/" + std::to_string(i));
  } else if (kind == "speed_box") {
    auto rows = specs::make_speed_dependent_box(
        vec_from(e.at("min")), vec_from(e.at("max")), e.at("phi").get<double>(),
        e.value("dims", std::vector<int>{}));
    for (std::size_t i = 0; i < rows.size(); ++i)
      push(rows[i], "/" + std::to_string(i));
  } else {
    throw std::invalid_argument("unknown spec kind: " + kind);
  }
  return out;
}

inline std::vector<EvalSpec> parse_specs(const json& arr) {
  std::vector<EvalSpec> out;
  for (const auto& e : arr) {
    auto v = parse_spec_entry(e);
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

inline json default_config() {
  return json{
      {"seed", 1234},
      {"out_dir", "out"},
      // Two wall bars with one gap each funnel cross-maze traffic through two
      // corridors; the evaluation obstacles sit exactly on those corridors,
      // unseen at training time.
      {"maze",
       {{"rows",
         {"........",
          "........",
          "##.#####",
          "........",
          "........",
          "#####.##",
          "........",
          "........"}},
        {"specs",
         json::array(
             {{{"kind", "ellipse"},
               {"center", {2.5, 5.5}},
               {"axes", {0.85, 0.8}},
               {"class", "simple"},
               {"name", "ellipse"}},
              {{"kind", "quartic"},
               {"center", {5.5, 2.5}},
               {"axes", {0.85, 0.8}},
               {"class", "complex"},
               {"name", "quartic"}}})}}},
      {"dataset", {{"n_traj", 1200}, {"horizon", 48}, {"jitter", 0.02}}},
      {"schedule",
       {{"steps", 256}, {"beta_min", 1e-4}, {"beta_max", 2e-2}, {"scale_to_steps", true}}},
      {"model", {{"hidden", 256}, {"time_dim", 32}, {"layers", 3}}},
      {"training",
       {{"epochs", 80}, {"batch", 64}, {"learning_rate", 1e-3}, {"adam", true}}},
      {"invariance",
       {{"eps", 1.0},
        {"delta_tau", 1.0},
        {"extra_steps", 50},
        {"w_max", 1.0},
        {"gamma_margin", 0.0},
        {"qp_tol", 1e-9},
        {"qp_max_iter", 10000},
        {"cubic_classk", false},
        {"on_qp_failure", "abort"}}},
      {"guidance", {{"scale", 0.01}, {"epsilon_band", 0.25}}},
      {"sampling", {{"clip_x0", 1.0}}},
      {"benchmark",
       {{"methods", {"off", "truncate", "guided", "guided_eps", "ros", "res", "tvs"}},
        {"episodes", 100},
        {"r_goal", 0.5}}},
      // The relaxed mode runs without settling steps here: at this scale the
      // model's preferred route goes straight through the pocket, so each
      // near-deterministic settling step tightens the detour back onto the
      // pocket surface and strands states on it.
      {"trap",
       {{"seeds", 20},
        {"boundary_band", 0.1},
        {"gap_factor", 5.0},
        {"extra_steps", 0},
        {"start", {1.0, 4.0}},
        {"goal", {7.0, 4.0}},
        // Two overlapping ellipses form a concave pocket across the straight
        // start-goal line, with free detour lanes above and below.
        {"specs",
         json::array({{{"kind", "ellipse"},
                       {"center", {4.0, 4.25}},
                       {"axes", {0.9, 0.35}},
                       {"name", "pocket-upper"}},
                      {{"kind", "ellipse"},
                       {"center", {4.0, 3.75}},
                       {"axes", {0.9, 0.35}},
                       {"name", "pocket-lower"}}})}}},
  };
}

struct Config {
  json effective;
  std::string hash;

  MazeDefinition maze;
  int n_traj = 0, horizon = 0;
  double jitter = 0.02;

  int steps = 0;
  double beta_min = 0, beta_max = 0;

  int hidden = 256, time_dim = 32, layers = 3;
  diffusion::TrainOptions training;

  invariance::InvarianceConfig inv;
  baselines::GuidanceConfig guidance;
  double clip_x0 = 1.0;

  std::vector<std::string> methods;
  int episodes = 0;
  double r_goal = 0.5;

  struct Trap {
    int seeds = 20;
    double boundary_band = 0.1;
    double gap_factor = 5.0;
    int extra_steps = 0;
    Vec start, goal;
    std::vector<EvalSpec> specs;  // world coordinates
  } trap;

  std::uint64_t seed = 0;
  std::string out_dir;
};

inline Config parse_config(const json& user) {
  json j = default_config();
  j.merge_patch(user);

  Config c;
  c.effective = j;
  c.hash = to_hex(fnv1a64(j.dump()));
  c.seed = j.at("seed").get<std::uint64_t>();
  c.out_dir = j.at("out_dir").get<std::string>();

  c.maze = maze_from_rows(j.at("maze").at("rows").get<std::vector<std::string>>());
  c.maze.eval_specs = parse_specs(j.at("maze").at("specs"));
  if (!connected_free_space(c.maze))
    throw std::invalid_argument("maze free space is not connected");

  const auto& ds = j.at("dataset");
  c.n_traj = ds.at("n_traj").get<int>();
  c.horizon = ds.at("horizon").get<int>();
  c.jitter = ds.at("jitter").get<double>();

  const auto& sc = j.at("schedule");
  c.steps = sc.at("steps").get<int>();
  c.beta_min = sc.at("beta_min").get<double>();
  c.beta_max = sc.at("beta_max").get<double>();
  if (sc.value("scale_to_steps", false)) {
    // Shorter chains get proportionally larger betas to keep the terminal
    // alpha_bar near zero, capped for stability on very short chains.
    const double f = 1000.0 / c.steps;
    c.beta_max = std::min(c.beta_max * f, 0.2);
    c.beta_min = std::min(c.beta_min * f, c.beta_max);
  }

  const auto& mo = j.at("model");
  c.hidden = mo.at("hidden").get<int>();
  c.time_dim = mo.at("time_dim").get<int>();
  c.layers = mo.at("layers").get<int>();

  const auto& tr = j.at("training");
  c.training.epochs = tr.at("epochs").get<int>();
  c.training.batch_size = tr.at("batch").get<int>();
  c.training.learning_rate = tr.at("learning_rate").get<double>();
  c.training.adam = tr.at("adam").get<bool>();

  const auto& iv = j.at("invariance");
  c.inv.eps_classk = iv.at("eps").get<double>();
  c.inv.delta_tau = iv.at("delta_tau").get<double>();
  c.inv.extra_steps = iv.at("extra_steps").get<int>();
  c.inv.w_max = iv.at("w_max").get<double>();
  c.inv.gamma_margin = iv.at("gamma_margin").get<double>();
  c.inv.qp_tol = iv.at("qp_tol").get<double>();
  c.inv.qp_max_iter = iv.at("qp_max_iter").get<int>();
  c.inv.cubic_classk = iv.at("cubic_classk").get<bool>();
  c.inv.on_qp_failure =
      iv.at("on_qp_failure").get<std::string>() == "pass_through"
          ? invariance::InvarianceConfig::OnQpFailure::PassThrough
          : invariance::InvarianceConfig::OnQpFailure::Abort;
  c.inv.validate();

  const auto& gd = j.at("guidance");
  c.guidance.scale = gd.at("scale").get<double>();
  c.guidance.epsilon_band = gd.at("epsilon_band").get<double>();
  c.guidance.validate();
  c.clip_x0 = j.at("sampling").at("clip_x0").get<double>();

  const auto& bm = j.at("benchmark");
  c.methods = bm.at("methods").get<std::vector<std::string>>();
  c.episodes = bm.at("episodes").get<int>();
  c.r_goal = bm.at("r_goal").get<double>();

  const auto& tp = j.at("trap");
  c.trap.seeds = tp.at("seeds").get<int>();
  c.trap.boundary_band = tp.at("boundary_band").get<double>();
  c.trap.gap_factor = tp.at("gap_factor").get<double>();
  c.trap.extra_steps = tp.at("extra_steps").get<int>();
  c.trap.start = vec_from(tp.at("start"));
  c.trap.goal = vec_from(tp.at("goal"));
  c.trap.specs = parse_specs(tp.at("specs"));
  return c;
}

}  // namespace cbfdiff::harness
