#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace multisoc {

// exit codes shared by every subcommand
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

struct TrainOptions {
  std::string config_path;
  std::string out_dir;
  std::optional<uint64_t> seed;        // overrides the config key
  std::optional<std::string> resume;   // checkpoint to continue from
};

struct EvalOptions {
  std::string config_path;
  std::string checkpoint;
  std::string out_dir;
  int episodes = 100;
  std::optional<uint64_t> seed;
  bool deterministic = false;
  int save_episode_logs = 3;  // trajectory CSVs written next to the metrics
};

struct ReplayOptions {
  std::string episode_csv;
  std::string out_svg;
  double fov_deg = 360.0;
  double sensor_range = 5.0;
  double dt = 0.25;
};

int cmd_train(const TrainOptions& opts);
int cmd_eval(const EvalOptions& opts);
int cmd_replay(const ReplayOptions& opts);

}  // namespace multisoc
