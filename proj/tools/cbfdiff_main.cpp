// cbfdiff command line: dataset generation, training, planning, the method
// benchmark and the local-trap scenario. Every subcommand takes --config (a
// JSON document; missing keys fall back to built-in defaults) plus a few
// overrides, writes its outputs under --out and exits nonzero with a JSON
// error record on stderr when something fails.
#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "cbfdiff/cbfdiff.hpp"

namespace fs = std::filesystem;
using namespace cbfdiff;
using namespace cbfdiff::harness;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::string dataset_path;
  std::string checkpoint_path;
  std::string method = "ros";
  long seed = -1;
  int episodes = -1;
};

Config load_config(const CommonArgs& args) {
  nlohmann::json user = nlohmann::json::object();
  if (!args.config_path.empty()) user = load_json(args.config_path);
  if (args.seed >= 0) user["seed"] = args.seed;
  if (!args.out_dir.empty()) user["out_dir"] = args.out_dir;
  if (args.episodes >= 0) user["benchmark"]["episodes"] = args.episodes;
  return parse_config(user);
}

FileHeader header_of(const Config& cfg) {
  return FileHeader{kVersion, cfg.hash, cfg.seed};
}

std::string out_path(const Config& cfg, const std::string& name) {
  fs::create_directories(cfg.out_dir);
  return (fs::path(cfg.out_dir) / name).string();
}

TrajectoryDataset dataset_for(const Config& cfg, const CommonArgs& args) {
  if (!args.dataset_path.empty()) return load_dataset(args.dataset_path);
  const auto path = fs::path(cfg.out_dir) / "dataset.txt";
  if (fs::exists(path)) return load_dataset(path.string());
  throw std::runtime_error(
      "no dataset found; run gen-data first or pass --data");
}

diffusion::DenoiserModel model_for(const Config& cfg, const CommonArgs& args) {
  if (!args.checkpoint_path.empty()) return load_checkpoint(args.checkpoint_path);
  const auto path = fs::path(cfg.out_dir) / "checkpoint.txt";
  if (fs::exists(path)) return load_checkpoint(path.string());
  throw std::runtime_error(
      "no checkpoint found; run train first or pass --checkpoint");
}

RunContext context_for(const Config& cfg, const TrajectoryDataset& ds,
                       const diffusion::DenoiserModel& model) {
  RunContext ctx;
  ctx.model = &model;
  ctx.sched = diffusion::make_schedule(cfg.steps, cfg.beta_min, cfg.beta_max);
  ctx.stats = ds.stats;
  ctx.median_step_model = ds.median_step_model;
  return ctx;
}

int cmd_gen_data(const CommonArgs& args) {
  auto cfg = load_config(args);
  Rng rng(cfg.seed);
  auto ds = generate_dataset(cfg.maze, cfg.n_traj, cfg.horizon, rng, cfg.jitter);
  const auto path = out_path(cfg, "dataset.txt");
  save_dataset(path, ds, header_of(cfg));
  std::cout << "wrote " << path << " (" << ds.flat.rows() << " trajectories, H="
            << ds.horizon << ")\n";
  return 0;
}

int cmd_train(const CommonArgs& args) {
  auto cfg = load_config(args);
  auto ds = dataset_for(cfg, args);
  auto sched = diffusion::make_schedule(cfg.steps, cfg.beta_min, cfg.beta_max);
  Rng rng = Rng(cfg.seed).split(0x7e41);
  auto model = diffusion::make_denoiser((ds.horizon + 1) * ds.dim, rng,
                                        cfg.hidden, cfg.time_dim, cfg.layers);
  auto log = diffusion::train(model, ds.flat, sched, cfg.training, rng);
  const auto path = out_path(cfg, "checkpoint.txt");
  save_checkpoint(path, model, header_of(cfg));
  nlohmann::json jlog{{"header", header_json(header_of(cfg))},
                      {"epoch_loss", log.epoch_loss}};
  save_json(out_path(cfg, "train_log.json"), jlog);
  std::cout << "trained " << cfg.training.epochs << " epochs, loss "
            << log.epoch_loss.front() << " -> " << log.epoch_loss.back()
            << ", wrote " << path << "\n";
  return 0;
}

int cmd_plan(const CommonArgs& args) {
  auto cfg = load_config(args);
  auto ds = dataset_for(cfg, args);
  auto model = model_for(cfg, args);
  auto ctx = context_for(cfg, ds, model);
  const Method method = method_from_name(args.method);

  std::vector<specs::BarrierSpec> norm_specs;
  for (const auto& es : cfg.maze.eval_specs)
    norm_specs.push_back(specs::normalize_spec(es.spec, ctx.stats));

  Rng scenario_rng = Rng(cfg.seed).split(0xa11ce);
  auto ep = sample_episode(cfg.maze, norm_specs, ctx.stats, scenario_rng);
  Rng chain = Rng(cfg.seed).split(0x9a51);

  diffusion::Trajectory traj;
  invariance::SampleDiagnostics diag;
  const int H = cfg.horizon, d = 2;
  switch (method) {
    case Method::Off: {
      diffusion::SampleOptions opts;
      opts.clip_x0 = cfg.clip_x0;
      traj = diffusion::sample(model, ctx.sched, ep.cond, H, d, chain, opts);
      break;
    }
    case Method::Truncate: {
      auto res = baselines::truncate_sample(model, ctx.sched, ep.cond,
                                            norm_specs, H, d, chain, cfg.clip_x0);
      traj = std::move(res.traj);
      for (const auto& u : res.unsupported)
        std::cerr << "truncate: unsupported spec " << u << "\n";
      break;
    }
    case Method::Guided:
    case Method::GuidedEps: {
      auto g = cfg.guidance;
      if (method == Method::Guided) g.epsilon_band = 0.0;
      traj = baselines::guided_sample(model, ctx.sched, ep.cond, norm_specs, g,
                                      H, d, chain, cfg.clip_x0);
      break;
    }
    default: {
      auto icfg = mode_config(cfg.inv, method);
      invariance::SafeSampleOptions opts;
      opts.clip_x0 = cfg.clip_x0;
      auto res = invariance::safe_sample(model, ctx.sched, ep.cond, norm_specs,
                                         icfg, H, d, chain, opts);
      traj = std::move(res.traj);
      diag = std::move(res.diag);
      break;
    }
  }

  const auto h = header_of(cfg);
  const auto world = to_world(traj, ctx.stats);
  save_trajectory(out_path(cfg, "plan_" + args.method + ".txt"), world, h);
  emit_plot(out_path(cfg, "plan_" + args.method + ".svg"), cfg.maze, {world}, h);
  if (!diag.steps.empty())
    save_step_log(out_path(cfg, "plan_" + args.method + "_steps.jsonl"), diag, h);

  auto sat = spec_satisfaction(traj, norm_specs);
  std::cout << "method " << args.method << ": min b = " << sat.min
            << ", mean b = " << sat.mean << ", score = "
            << score(world, cfg.maze, ep.goal_world, cfg.r_goal) << "\n";
  return 0;
}

int cmd_bench(const CommonArgs& args, const std::vector<std::string>& methods) {
  auto cfg = load_config(args);
  auto ds = dataset_for(cfg, args);
  auto model = model_for(cfg, args);
  auto ctx = context_for(cfg, ds, model);

  std::vector<Method> ms;
  for (const auto& name : methods.empty() ? cfg.methods : methods)
    ms.push_back(method_from_name(name));

  auto report = run_benchmark(cfg, ctx, ms, cfg.episodes, cfg.seed);
  const auto path = out_path(cfg, "benchmark.json");
  save_json(path, report.to_json(header_of(cfg)));
  std::cout << "method        s_min      c_min      score      time/step\n";
  for (const auto& m : report.methods)
    std::cout << m.name << std::string(std::max(1, 14 - (int)m.name.size()), ' ')
              << m.s_min << "  " << m.c_min << "  " << m.score_mean << " +- "
              << m.score_std << "  " << m.step_seconds << "\n";
  std::cout << "wrote " << path << "\n";
  return 0;
}

int cmd_trap(const CommonArgs& args) {
  auto cfg = load_config(args);
  auto ds = dataset_for(cfg, args);
  auto model = model_for(cfg, args);
  auto ctx = context_for(cfg, ds, model);
  fs::create_directories(cfg.out_dir);
  auto report = local_trap_scenario(cfg, ctx, cfg.seed, cfg.out_dir);
  const auto path = out_path(cfg, "trap.json");
  save_json(path, report.to_json(header_of(cfg)));
  for (const auto& m : report.methods)
    std::cout << m.name << ": trapped=" << m.trapped_points
              << " min_b=" << m.min_barrier << "\n";
  std::cout << "wrote " << path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"barrier-certified diffusion trajectory planner"};
  app.require_subcommand(1);
  CommonArgs args;
  std::vector<std::string> bench_methods;

  auto add_common = [&](CLI::App* cmd, bool needs_model) {
    cmd->add_option("--config", args.config_path, "JSON config file");
    cmd->add_option("--out", args.out_dir, "output directory override");
    cmd->add_option("--seed", args.seed, "seed override");
    if (needs_model) {
      cmd->add_option("--data", args.dataset_path, "dataset file");
      cmd->add_option("--checkpoint", args.checkpoint_path, "checkpoint file");
    }
  };

  auto* gen = app.add_subcommand("gen-data", "generate the training dataset");
  add_common(gen, false);
  auto* train = app.add_subcommand("train", "train the denoiser");
  add_common(train, false);
  train->add_option("--data", args.dataset_path, "dataset file");
  auto* plan = app.add_subcommand("plan", "sample one plan and plot it");
  add_common(plan, true);
  plan->add_option("--method", args.method,
                   "off|truncate|guided|guided_eps|ros|res|tvs");
  auto* bench = app.add_subcommand("bench", "run the method benchmark");
  add_common(bench, true);
  bench->add_option("--method", bench_methods, "methods to run (repeatable)");
  bench->add_option("--episodes", args.episodes, "episode count override");
  auto* trap = app.add_subcommand("trap", "run the local-trap scenario");
  add_common(trap, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(args);
    if (train->parsed()) return cmd_train(args);
    if (plan->parsed()) return cmd_plan(args);
    if (bench->parsed()) return cmd_bench(args, bench_methods);
    if (trap->parsed()) return cmd_trap(args);
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", e.what()}, {"version", kVersion}}.dump()
              << "\n";
    return 1;
  }
  return 0;
}
