#include "multisoc/cli.hpp"

#include <CLI11.hpp>

int main(int argc, char** argv) {
  CLI::App app{"multisoc: multi-agent social navigation trainer and evaluator"};
  app.require_subcommand(1);

  multisoc::TrainOptions train_opts;
  uint64_t train_seed = 0;
  std::string train_resume;
  auto* train = app.add_subcommand("train", "train a policy on a scenario");
  train->add_option("--config", train_opts.config_path, "key=value config file")->required();
  train->add_option("--out", train_opts.out_dir, "output directory")->required();
  auto* train_seed_opt = train->add_option("--seed", train_seed, "override the config seed");
  auto* train_resume_opt =
      train->add_option("--checkpoint", train_resume, "resume from this checkpoint");

  multisoc::EvalOptions eval_opts;
  uint64_t eval_seed = 0;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on unseen episodes");
  eval->add_option("--config", eval_opts.config_path, "scenario config file")->required();
  eval->add_option("--checkpoint", eval_opts.checkpoint, "checkpoint to evaluate")->required();
  eval->add_option("--out", eval_opts.out_dir, "directory for metrics and episode CSVs");
  eval->add_option("--episodes", eval_opts.episodes, "number of test episodes");
  auto* eval_seed_opt = eval->add_option("--seed", eval_seed, "evaluation seed");
  eval->add_flag("--deterministic", eval_opts.deterministic, "take the mean action");
  eval->add_option("--save-episodes", eval_opts.save_episode_logs,
                   "how many episode trajectory CSVs to write");

  multisoc::ReplayOptions replay_opts;
  auto* replay = app.add_subcommand("replay", "render an episode CSV as an SVG");
  replay->add_option("csv", replay_opts.episode_csv, "episode trajectory CSV")->required();
  replay->add_option("--out", replay_opts.out_svg, "output SVG path")->required();
  replay->add_option("--fov-deg", replay_opts.fov_deg, "robot FoV for the rendering");
  replay->add_option("--sensor-range", replay_opts.sensor_range, "sensor range circle (m)");
  replay->add_option("--dt", replay_opts.dt, "timestep for predicted poses (s)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? multisoc::kExitOk : multisoc::kExitConfig;
  }

  if (*train) {
    if (*train_seed_opt) train_opts.seed = train_seed;
    if (*train_resume_opt) train_opts.resume = train_resume;
    return multisoc::cmd_train(train_opts);
  }
  if (*eval) {
    if (*eval_seed_opt) eval_opts.seed = eval_seed;
    return multisoc::cmd_eval(eval_opts);
  }
  return multisoc::cmd_replay(replay_opts);
}
