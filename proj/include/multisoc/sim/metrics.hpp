#pragma once

#include "multisoc/sim/world.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace multisoc {

// State of one entity at one logged timestep.
struct Snapshot {
  int t = 0;
  int entity_id = 0;
  Kind kind = Kind::human;
  Vec2 pos = Vec2::Zero();
  Vec2 vel = Vec2::Zero();
  Status status = Status::active;
  double reward = 0.0;
  double goal_dist = 0.0;
  double radius = 0.3;
};

// Per-episode trace: the t=0 state plus one frame per step, each frame
// holding every entity. Frame f > 0 carries the rewards earned on step f.
struct EpisodeLog {
  int robot_count = 0;
  double dt = 0.25;
  double entity_radius = 0.3;
  std::vector<std::vector<Snapshot>> frames;

  void record_initial(const World& w);
  void record_step(const World& w, const std::map<int, double>& rewards);
};

struct MetricsReport {
  double success_rate = 0.0;
  double collision_rate = 0.0;
  double timeout_rate = 0.0;
  double intrusion_ratio = 0.0;  // percent
  double travel_time = 0.0;      // seconds
  double travel_length = 0.0;    // meters
  double mean_reward = 0.0;      // cumulative per-agent episode reward
  int episodes = 0;
  int robots = 0;

  // one-line table in the conventional column order:
  // success, collision, intrusion ratio, travel time, travel length, reward
  std::string table() const;
};

// Aggregate navigation and social metrics over a set of episodes.
// discomfort_dist is measured beyond the summed radii.
MetricsReport compute_metrics(const std::vector<EpisodeLog>& logs, double discomfort_dist);

// CSV schema: t,entity_id,kind,x,y,vx,vy,status,reward
void write_episode_csv(const EpisodeLog& log, std::ostream& out);
void write_episode_csv(const EpisodeLog& log, const std::string& path);
EpisodeLog read_episode_csv(const std::string& path);

}  // namespace multisoc
