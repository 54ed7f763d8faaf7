#include "multisoc/sim/world.hpp"

#include <algorithm>
#include <cmath>

namespace multisoc {

namespace {

constexpr double kTwoPi = 2.0 * M_PI;

double wrap_angle(double a) {
  while (a > M_PI) a -= kTwoPi;
  while (a < -M_PI) a += kTwoPi;
  return a;
}

bool placement_clear(const Vec2& pos, double radius, const std::vector<EntityState>& placed,
                     double margin) {
  for (const auto& e : placed) {
    if ((pos - e.pos).norm() < radius + e.radius + margin) return false;
  }
  return true;
}

}  // namespace

ScenarioSpec ScenarioSpec::from_config(const KeyValueConfig& cfg) {
  ScenarioSpec s;
  s.humans = static_cast<int>(cfg.get_int("humans", s.humans));
  s.robots = static_cast<int>(cfg.get_int("robots", s.robots));
  s.circle_radius = cfg.get_num("circle_radius", s.circle_radius);
  s.position_noise = cfg.get_num("position_noise", s.position_noise);
  s.dt = cfg.get_num("dt", s.dt);
  s.entity_radius = cfg.get_num("entity_radius", s.entity_radius);
  s.pref_speed = cfg.get_num("pref_speed", s.pref_speed);
  s.goal_radius = cfg.get_num("goal_radius", s.entity_radius);
  s.discomfort_dist = cfg.get_num("discomfort_dist", s.discomfort_dist);
  s.clearance_margin = cfg.get_num("clearance_margin", s.clearance_margin);
  s.max_steps = static_cast<int>(cfg.get_int("max_steps", s.max_steps));
  s.robot_fov.fov_rad = cfg.get_num("fov_deg", 360.0) * M_PI / 180.0;
  s.robot_fov.range = cfg.get_num("sensor_range", s.robot_fov.range);
  s.human_fov.fov_rad = cfg.get_num("human_fov_deg", 360.0) * M_PI / 180.0;
  s.human_fov.range = cfg.get_num("human_sensor_range", s.robot_fov.range);
  s.human_policy = cfg.get_str("human_policy", s.human_policy);
  s.humans_react_to_robots = cfg.get_flag("humans_react_to_robots", s.humans_react_to_robots);
  s.human_fov_policy_deg = cfg.get_num("human_fov_policy_deg", s.human_fov_policy_deg);
  s.seed = static_cast<uint64_t>(cfg.get_int("seed", 0));
  if (s.robots < 1) throw ConfigError("scenario needs at least one robot");
  if (s.humans < 0) throw ConfigError("humans must be >= 0");
  if (s.dt <= 0) throw ConfigError("dt must be positive");
  if (s.human_policy != "orca" && s.human_policy != "sf" && s.human_policy != "orca+sf" &&
      s.human_policy != "orca+fov") {
    throw ConfigError("unknown human_policy '" + s.human_policy + "'");
  }
  return s;
}

bool World::episode_over(int max_steps) const {
  if (timestep >= max_steps) return true;
  for (int i = 0; i < robot_count; ++i) {
    if (entities[static_cast<std::size_t>(i)].status == Status::active) return false;
  }
  return true;
}

bool sees(const World& w, int a, int b) {
  if (a == b) return true;
  const EntityState& ea = w.entities[static_cast<std::size_t>(a)];
  const EntityState& eb = w.entities[static_cast<std::size_t>(b)];
  const FovSpec& fov = w.is_robot(a) ? w.robot_fov : w.human_fov;
  const Vec2 d = eb.pos - ea.pos;
  const double dist = d.norm();
  if (dist > fov.range) return false;
  if (fov.fov_rad >= kTwoPi - 1e-9) return true;
  const double bearing = std::atan2(d.y(), d.x());
  return std::abs(wrap_angle(bearing - ea.heading)) <= fov.fov_rad / 2.0 + 1e-12;
}

MatrixXb visibility_matrix(const World& w, int agent_id) {
  const int n = static_cast<int>(w.entities.size());
  std::vector<bool> in_view(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) in_view[static_cast<std::size_t>(i)] = sees(w, agent_id, i);
  MatrixXb m = MatrixXb::Constant(n, n, false);
  for (int i = 0; i < n; ++i) {
    if (!in_view[static_cast<std::size_t>(i)]) continue;
    for (int k = 0; k < n; ++k) {
      if (!in_view[static_cast<std::size_t>(k)]) continue;
      m(i, k) = sees(w, i, k);
    }
  }
  return m;
}

World generate_scenario(const ScenarioSpec& spec, RngStream rng) {
  World w;
  w.dt = spec.dt;
  w.circle_radius = spec.circle_radius;
  w.goal_radius = spec.goal_radius;
  w.position_noise = spec.position_noise;
  w.robot_fov = spec.robot_fov;
  w.human_fov = spec.human_fov;
  w.robot_count = spec.robots;
  w.rng = rng.child("world");

  RngStream place = rng.child("placement");
  const int max_tries = 200;

  // humans first: on the circle with positional noise, goals near-antipodal
  std::vector<EntityState> humans;
  for (int h = 0; h < spec.humans; ++h) {
    bool placed = false;
    for (int attempt = 0; attempt < max_tries && !placed; ++attempt) {
      const double phi = place.uniform(0.0, kTwoPi);
      const Vec2 base(spec.circle_radius * std::cos(phi), spec.circle_radius * std::sin(phi));
      const Vec2 noise(place.uniform(-spec.position_noise, spec.position_noise),
                       place.uniform(-spec.position_noise, spec.position_noise));
      const Vec2 goal_noise(place.uniform(-spec.position_noise, spec.position_noise),
                            place.uniform(-spec.position_noise, spec.position_noise));
      const Vec2 pos = base + noise;
      if (!placement_clear(pos, spec.entity_radius, humans, spec.clearance_margin)) continue;
      EntityState e;
      e.kind = Kind::human;
      e.pos = e.prev_pos = pos;
      e.goal = -base + goal_noise;
      e.radius = spec.entity_radius;
      e.pref_speed = spec.pref_speed;
      e.heading = std::atan2(e.goal.y() - pos.y(), e.goal.x() - pos.x());
      humans.push_back(e);
      placed = true;
    }
    if (!placed) {
      throw ScenarioError("could not place human " + std::to_string(h) + " after " +
                          std::to_string(max_tries) + " tries");
    }
  }

  // robots: positions and goals uniform over the disk, kept clear of
  // everything placed so far
  std::vector<EntityState> robots;
  std::vector<EntityState> robot_goals;  // reuse clearance helper
  auto sample_disk = [&]() {
    const double r = spec.circle_radius * std::sqrt(place.uniform());
    const double phi = place.uniform(0.0, kTwoPi);
    return Vec2(r * std::cos(phi), r * std::sin(phi));
  };
  for (int rix = 0; rix < spec.robots; ++rix) {
    bool placed = false;
    for (int attempt = 0; attempt < max_tries && !placed; ++attempt) {
      const Vec2 pos = sample_disk();
      if (!placement_clear(pos, spec.entity_radius, humans, spec.clearance_margin)) continue;
      if (!placement_clear(pos, spec.entity_radius, robots, spec.clearance_margin)) continue;
      const Vec2 goal = sample_disk();
      if (!placement_clear(goal, spec.entity_radius, robot_goals, spec.clearance_margin)) continue;
      EntityState e;
      e.kind = Kind::robot;
      e.pos = e.prev_pos = pos;
      e.goal = goal;
      e.radius = spec.entity_radius;
      e.pref_speed = spec.pref_speed;
      e.heading = std::atan2(goal.y() - pos.y(), goal.x() - pos.x());
      robots.push_back(e);
      EntityState marker;
      marker.pos = goal;
      marker.radius = spec.entity_radius;
      robot_goals.push_back(marker);
      placed = true;
    }
    if (!placed) {
      throw ScenarioError("could not place robot " + std::to_string(rix) + " after " +
                          std::to_string(max_tries) + " tries");
    }
  }

  w.entities = std::move(robots);
  w.entities.insert(w.entities.end(), humans.begin(), humans.end());
  for (std::size_t i = 0; i < w.entities.size(); ++i) {
    w.entities[i].id = static_cast<int>(i);
  }
  return w;
}

CrowdPolicy make_crowd_policy(const ScenarioSpec& spec, RngStream& rng) {
  CrowdPolicy cp;
  cp.orca.dt = spec.dt;
  cp.social_force.dt = spec.dt;
  cp.react_to_robots = spec.humans_react_to_robots;
  cp.assignment.resize(static_cast<std::size_t>(std::max(spec.humans, 1)));
  if (spec.human_policy == "sf") {
    std::fill(cp.assignment.begin(), cp.assignment.end(), HumanPolicyKind::social_force);
  } else if (spec.human_policy == "orca+sf") {
    for (auto& a : cp.assignment) {
      a = rng.uniform() < 0.5 ? HumanPolicyKind::orca : HumanPolicyKind::social_force;
    }
  } else {
    std::fill(cp.assignment.begin(), cp.assignment.end(), HumanPolicyKind::orca);
    if (spec.human_policy == "orca+fov") {
      cp.limited_fov = true;
      cp.fov_rad = spec.human_fov_policy_deg * M_PI / 180.0;
    }
  }
  return cp;
}

double compute_reward(const World& before, const World& after, int agent_id,
                      const std::vector<PredictedPath>& predictions,
                      const std::vector<bool>& visible_to_agent, const RewardParams& params) {
  const EntityState& post = after.entities[static_cast<std::size_t>(agent_id)];
  const EntityState& pre = before.entities[static_cast<std::size_t>(agent_id)];
  if (pre.status == Status::active && post.status == Status::collided) {
    return params.collision_penalty;
  }
  const double r_pot = pre.goal_dist() - post.goal_dist();

  double r_pred = 0.0;
  const int n = static_cast<int>(before.entities.size());
  for (int i = 0; i < n; ++i) {
    if (i == agent_id || !visible_to_agent[static_cast<std::size_t>(i)]) continue;
    const EntityState& other = before.entities[static_cast<std::size_t>(i)];
    for (int k = 1; k <= kPredictionHorizon; ++k) {
      const double d = (post.pos - predictions[static_cast<std::size_t>(i)].at_horizon(k)).norm();
      if (d < post.radius + other.radius) {
        r_pred = std::min(r_pred, params.collision_penalty / std::pow(2.0, k));
      }
    }
  }
  return r_pot + r_pred;
}

StepResult step_world(World& w, const std::map<int, Vec2>& robot_actions,
                      const CrowdPolicy& crowd, const RewardParams& reward_params) {
  const int n = static_cast<int>(w.entities.size());
  const World before = w;

  for (const auto& [id, action] : robot_actions) {
    if (id < 0 || id >= w.robot_count) {
      throw std::invalid_argument("action for unknown robot id " + std::to_string(id));
    }
    if (w.entities[static_cast<std::size_t>(id)].status != Status::active) {
      throw std::invalid_argument("action for inactive robot id " + std::to_string(id));
    }
  }

  // observation-time predictions per robot, shared with the reward below
  std::vector<std::vector<PredictedPath>> preds(static_cast<std::size_t>(w.robot_count));
  std::vector<std::vector<bool>> vis(static_cast<std::size_t>(w.robot_count));
  for (int r = 0; r < w.robot_count; ++r) {
    if (before.entities[static_cast<std::size_t>(r)].status != Status::active) continue;
    preds[static_cast<std::size_t>(r)].resize(static_cast<std::size_t>(n));
    vis[static_cast<std::size_t>(r)].resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      preds[static_cast<std::size_t>(r)][static_cast<std::size_t>(i)] =
          predict_trajectory(before.entities[static_cast<std::size_t>(i)], w.dt);
      vis[static_cast<std::size_t>(r)][static_cast<std::size_t>(i)] = sees(before, r, i);
    }
  }

  // decide all velocities from the pre-step state
  std::vector<Vec2> new_vel(static_cast<std::size_t>(n), Vec2::Zero());
  for (int i = 0; i < n; ++i) {
    EntityState& e = w.entities[static_cast<std::size_t>(i)];
    if (w.is_robot(i)) {
      if (e.status == Status::active) {
        auto it = robot_actions.find(i);
        if (it == robot_actions.end()) {
          throw std::invalid_argument("missing action for active robot " + std::to_string(i));
        }
        Vec2 v = it->second;
        const double speed = v.norm();
        if (speed > e.pref_speed) v *= e.pref_speed / speed;
        new_vel[static_cast<std::size_t>(i)] = v;
      } else {
        // finished robots stay in the scene as scripted moving obstacles
        new_vel[static_cast<std::size_t>(i)] = preferred_velocity(e, w.dt);
      }
    } else {
      const int human_index = i - w.robot_count;
      std::vector<const EntityState*> neighbors;
      for (int k = 0; k < n; ++k) {
        if (k == i) continue;
        const EntityState& other = before.entities[static_cast<std::size_t>(k)];
        if (other.kind == Kind::robot && !crowd.react_to_robots) continue;
        if (crowd.limited_fov) {
          const Vec2 d = other.pos - before.entities[static_cast<std::size_t>(i)].pos;
          const double bearing = std::atan2(d.y(), d.x());
          if (std::abs(wrap_angle(bearing - before.entities[static_cast<std::size_t>(i)].heading)) >
              crowd.fov_rad / 2.0) {
            continue;
          }
        }
        neighbors.push_back(&before.entities[static_cast<std::size_t>(k)]);
      }
      const EntityState& self = before.entities[static_cast<std::size_t>(i)];
      new_vel[static_cast<std::size_t>(i)] =
          crowd.kind_of(human_index) == HumanPolicyKind::orca
              ? orca_velocity(self, neighbors, crowd.orca)
              : social_force_velocity(self, neighbors, crowd.social_force);
    }
  }

  // integrate
  for (int i = 0; i < n; ++i) {
    EntityState& e = w.entities[static_cast<std::size_t>(i)];
    e.prev_pos = e.pos;
    e.vel = new_vel[static_cast<std::size_t>(i)];
    e.pos += e.vel * w.dt;
    if (e.vel.norm() > 1e-9) {
      e.heading = std::atan2(e.vel.y(), e.vel.x());
    }
  }

  StepResult result;

  // statuses: collision first, then goal
  for (int r = 0; r < w.robot_count; ++r) {
    EntityState& e = w.entities[static_cast<std::size_t>(r)];
    if (before.entities[static_cast<std::size_t>(r)].status != Status::active) continue;
    bool collided = false;
    for (int k = 0; k < n && !collided; ++k) {
      if (k == r) continue;
      const EntityState& other = w.entities[static_cast<std::size_t>(k)];
      if ((e.pos - other.pos).norm() < e.radius + other.radius) collided = true;
    }
    if (collided) {
      e.status = Status::collided;
      result.events.collided.push_back(r);
    } else if (e.goal_dist() < w.goal_radius) {
      e.status = Status::reached;
      result.events.reached.push_back(r);
    }
  }

  // humans that arrive get a fresh crossing goal
  for (int i = w.robot_count; i < n; ++i) {
    EntityState& e = w.entities[static_cast<std::size_t>(i)];
    if (e.goal_dist() < w.goal_radius) {
      const Vec2 dir = e.pos.norm() > 1e-9 ? Vec2(e.pos.normalized()) : Vec2(1.0, 0.0);
      const Vec2 base = -w.circle_radius * dir;
      e.goal = base + Vec2(w.rng.uniform(-w.position_noise, w.position_noise),
                           w.rng.uniform(-w.position_noise, w.position_noise));
    }
  }

  for (int r = 0; r < w.robot_count; ++r) {
    if (before.entities[static_cast<std::size_t>(r)].status != Status::active) continue;
    result.rewards[r] = compute_reward(before, w, r, preds[static_cast<std::size_t>(r)],
                                       vis[static_cast<std::size_t>(r)], reward_params);
  }

  ++w.timestep;
  return result;
}

}  // namespace multisoc
