#include "multisoc/cli.hpp"

#include "multisoc/io/svg_replay.hpp"
#include "multisoc/mappo/evaluator.hpp"
#include "multisoc/mappo/trainer.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

namespace multisoc {

namespace {

namespace fs = std::filesystem;

KeyValueConfig load_config(const std::string& path) {
  if (!fs::exists(path)) {
    throw ConfigError("config file not found: " + path);
  }
  return KeyValueConfig::parse_file(path);
}

void persist_resolved(const KeyValueConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream out(out_dir + "/config_resolved.txt", std::ios::trunc);
  out << cfg.dump();
}

void warn_unused(const KeyValueConfig& cfg) {
  for (const auto& key : cfg.unused_keys()) {
    std::cerr << "warning: config key '" << key << "' was accepted but is not used\n";
  }
}

template <typename S>
int run_training(const KeyValueConfig& cfg, const TrainOptions& opts) {
  ScenarioSpec scenario = ScenarioSpec::from_config(cfg);
  NetConfig net_cfg = NetConfig::from_config(cfg);
  TrainConfig train_cfg = TrainConfig::from_config(cfg);
  if (opts.seed) {
    train_cfg.seed = *opts.seed;
  }

  MappoTrainer<S> trainer(scenario, net_cfg, train_cfg);
  if (opts.resume) {
    trainer.load_checkpoint(*opts.resume);
    std::cout << "resumed from " << *opts.resume << " at env step " << trainer.env_steps() << "\n";
  }
  warn_unused(cfg);
  trainer.train(opts.out_dir);
  std::cout << "training finished after " << trainer.env_steps() << " env steps, outputs in "
            << opts.out_dir << "\n";
  return kExitOk;
}

}  // namespace

int cmd_train(const TrainOptions& opts) {
  try {
    KeyValueConfig cfg = load_config(opts.config_path);
    if (opts.seed) {
      cfg.set("seed", std::to_string(*opts.seed));
    }
    persist_resolved(cfg, opts.out_dir);
    const std::string precision = cfg.get_str("precision", "float32");
    if (precision == "float64") {
      return run_training<double>(cfg, opts);
    }
    if (precision != "float32") {
      throw ConfigError("config key 'precision' must be float32 or float64");
    }
    return run_training<float>(cfg, opts);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_eval(const EvalOptions& opts) {
  try {
    KeyValueConfig cfg = load_config(opts.config_path);
    ScenarioSpec scenario = ScenarioSpec::from_config(cfg);
    NetConfig net_cfg = NetConfig::from_config(cfg);
    (void)TrainConfig::from_config(cfg);  // a shared config's training keys are fine here
    if (opts.episodes < 1) {
      throw ConfigError("--episodes must be >= 1");
    }
    const uint64_t seed = opts.seed.value_or(static_cast<uint64_t>(cfg.get_int("seed", 1000)));
    const double collision_penalty = cfg.get_num("collision_penalty", -20.0);

    MultiSocNet<float> net(net_cfg);
    MappoTrainer<float>::load_net_params(net, read_checkpoint(opts.checkpoint));

    const double tau = cfg.get_num("temperature_min", 0.03);
    PolicyActionSource<float> policy(net, RngStream(seed).child("policy"), tau,
                                     opts.deterministic);
    EvalResult result = evaluate(policy, scenario, opts.episodes, seed, collision_penalty);

    std::cout << result.metrics.table() << "\n";

    if (!opts.out_dir.empty()) {
      fs::create_directories(opts.out_dir);
      persist_resolved(cfg, opts.out_dir);
      std::ofstream metrics(opts.out_dir + "/metrics.txt", std::ios::trunc);
      metrics << result.metrics.table() << "\n";
      std::ofstream per_ep(opts.out_dir + "/episodes.csv", std::ios::trunc);
      per_ep << "episode,success,collision,intrusion_ratio,travel_time,travel_length,reward\n";
      for (std::size_t e = 0; e < result.logs.size(); ++e) {
        MetricsReport r = compute_metrics({result.logs[e]}, scenario.discomfort_dist);
        char row[200];
        std::snprintf(row, sizeof(row), "%zu,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", e, r.success_rate,
                      r.collision_rate, r.intrusion_ratio, r.travel_time, r.travel_length,
                      r.mean_reward);
        per_ep << row;
      }
      const int save = std::min<int>(opts.save_episode_logs, static_cast<int>(result.logs.size()));
      for (int e = 0; e < save; ++e) {
        char name[64];
        std::snprintf(name, sizeof(name), "/episode_%03d.csv", e);
        write_episode_csv(result.logs[static_cast<std::size_t>(e)], opts.out_dir + name);
      }
    }
    warn_unused(cfg);
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_replay(const ReplayOptions& opts) {
  try {
    EpisodeLog log = read_episode_csv(opts.episode_csv);
    ReplayStyle style;
    style.fov_deg = opts.fov_deg;
    style.sensor_range = opts.sensor_range;
    style.dt = opts.dt;
    write_episode_svg(log, style, opts.out_svg);
    std::cout << "wrote " << opts.out_svg << "\n";
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace multisoc
