#pragma once

#include "multisoc/config.hpp"
#include "multisoc/core/random.hpp"
#include "multisoc/percept/prediction.hpp"
#include "multisoc/sim/entity.hpp"
#include "multisoc/sim/human_policy.hpp"

#include <map>
#include <optional>
#include <vector>

namespace multisoc {

struct ScenarioError : std::runtime_error {
  explicit ScenarioError(const std::string& what) : std::runtime_error(what) {}
};

struct FovSpec {
  double fov_rad = 2.0 * M_PI;
  double range = 5.0;
};

// Everything needed to spawn and run one episode. Parsed from the scenario
// config file; all values have the conventional defaults so a minimal config
// only needs entity counts.
struct ScenarioSpec {
  int humans = 0;
  int robots = 1;
  double circle_radius = 6.0;
  double position_noise = 0.5;
  double dt = 0.25;
  double entity_radius = 0.3;
  double pref_speed = 1.0;
  double goal_radius = 0.3;
  double discomfort_dist = 0.25;  // beyond summed radii
  double clearance_margin = 0.1;
  int max_steps = 150;
  FovSpec robot_fov;
  FovSpec human_fov{2.0 * M_PI, 5.0};
  std::string human_policy = "orca";  // orca | sf | orca+sf | orca+fov
  bool humans_react_to_robots = false;
  double human_fov_policy_deg = 120.0;  // neighbor cone for the orca+fov variant
  uint64_t seed = 0;

  static ScenarioSpec from_config(const KeyValueConfig& cfg);
};

struct World {
  std::vector<EntityState> entities;
  int timestep = 0;
  double dt = 0.25;
  double circle_radius = 6.0;
  double goal_radius = 0.3;
  double position_noise = 0.5;
  FovSpec robot_fov;
  FovSpec human_fov;
  int robot_count = 0;  // entities [0, robot_count) are the robots
  RngStream rng;

  int human_count() const { return static_cast<int>(entities.size()) - robot_count; }
  bool is_robot(int id) const { return id < robot_count; }
  bool episode_over(int max_steps) const;
};

// a sees b: within a's sensor range and FoV cone (entities always see
// themselves)
bool sees(const World& w, int a, int b);

// Per-agent visibility mask: entry (i,k) is set when i sees k and both i and
// k are inside agent j's own perception; rows and columns of entities j
// cannot see are all zero, visible entities carry a diagonal set.
MatrixXb visibility_matrix(const World& w, int agent_id);

World generate_scenario(const ScenarioSpec& spec, RngStream rng);

// Build the per-human policy assignment that matches the scenario's
// human_policy string ("orca+sf" draws one of the two per human at seed
// time).
CrowdPolicy make_crowd_policy(const ScenarioSpec& spec, RngStream& rng);

struct RewardParams {
  double collision_penalty = -20.0;
};

struct StepEvents {
  std::vector<int> collided;
  std::vector<int> reached;
};

struct StepResult {
  std::map<int, double> rewards;  // keyed by robot id, only robots active before the step
  StepEvents events;
};

// Penalty for standing in the predicted path of visible entities plus the
// goal-potential shaping term; the collision case overrides everything.
// Predictions must be the ones the agent observed before acting.
double compute_reward(const World& before, const World& after, int agent_id,
                      const std::vector<PredictedPath>& predictions,
                      const std::vector<bool>& visible_to_agent, const RewardParams& params);

// Advance one step: robots move by their (speed-clipped) velocity commands,
// humans by the scripted crowd policy, then statuses, events and rewards are
// resolved. Robots that finished keep heading to their goals as scripted
// moving obstacles and get no actions or rewards.
StepResult step_world(World& w, const std::map<int, Vec2>& robot_actions,
                      const CrowdPolicy& crowd, const RewardParams& reward_params);

}  // namespace multisoc
