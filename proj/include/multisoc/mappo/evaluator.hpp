#pragma once

#include "multisoc/mappo/trainer.hpp"

#include <functional>
#include <memory>

namespace multisoc {

// Something that can drive the robots of a world for one episode at a time.
class ActionSource {
 public:
  virtual ~ActionSource() = default;
  virtual void begin_episode(const World& w) { (void)w; }
  virtual Vec2 act(const World& w, int robot_id) = 0;
};

// Robots driven by a trained network with hard edge selection; deterministic
// mode takes the Gaussian mean.
template <typename S>
class PolicyActionSource : public ActionSource {
 public:
  PolicyActionSource(const MultiSocNet<S>& net, RngStream rng, double tau, bool deterministic)
      : net_(net), rng_(rng), tau_(tau), deterministic_(deterministic) {}

  void begin_episode(const World& w) override {
    hidden_.assign(static_cast<std::size_t>(w.robot_count),
                   Matrix<S>::Zero(1, net_.config().rnn_size));
  }

  Vec2 act(const World& w, int robot_id) override {
    Observation obs = build_observation(w, robot_id);
    auto result = net_.act(obs, hidden_[static_cast<std::size_t>(robot_id)], rng_,
                           static_cast<S>(tau_),
                           deterministic_ ? MultiSocNet<S>::Mode::deterministic
                                          : MultiSocNet<S>::Mode::sample);
    hidden_[static_cast<std::size_t>(robot_id)] = result.hidden;
    return result.action;
  }

 private:
  const MultiSocNet<S>& net_;
  RngStream rng_;
  double tau_;
  bool deterministic_;
  std::vector<Matrix<S>> hidden_;
};

// Straight to the goal at preferred speed; the trivial upper-bound policy.
class GoalActionSource : public ActionSource {
 public:
  Vec2 act(const World& w, int robot_id) override {
    return preferred_velocity(w.entities[static_cast<std::size_t>(robot_id)], w.dt);
  }
};

// Isotropic Gaussian velocity noise; the no-learning baseline.
class RandomActionSource : public ActionSource {
 public:
  explicit RandomActionSource(RngStream rng, double sigma = 1.0) : rng_(rng), sigma_(sigma) {}
  Vec2 act(const World& w, int robot_id) override {
    (void)w;
    (void)robot_id;
    return Vec2(rng_.normal() * sigma_, rng_.normal() * sigma_);
  }

 private:
  RngStream rng_;
  double sigma_;
};

struct EvalResult {
  MetricsReport metrics;
  std::vector<EpisodeLog> logs;
};

// Run N episodes of at most spec.max_steps and aggregate the metrics.
// Episode e draws its scenario from seed stream child("episode", e), so a
// fixed seed pins the whole run.
inline EvalResult evaluate(ActionSource& policy, const ScenarioSpec& spec, int episodes,
                           uint64_t seed, double collision_penalty = -20.0) {
  if (episodes < 1) {
    throw std::invalid_argument("evaluate: need at least one episode");
  }
  RngStream root(seed);
  EvalResult result;
  RewardParams rp;
  rp.collision_penalty = collision_penalty;
  for (int e = 0; e < episodes; ++e) {
    RngStream scen = root.child("episode", static_cast<uint64_t>(e));
    World w = generate_scenario(spec, scen);
    RngStream crowd_rng = scen.child("crowd");
    CrowdPolicy crowd = make_crowd_policy(spec, crowd_rng);
    policy.begin_episode(w);
    EpisodeLog log;
    log.entity_radius = spec.entity_radius;
    log.record_initial(w);
    while (!w.episode_over(spec.max_steps)) {
      std::map<int, Vec2> actions;
      for (int r = 0; r < w.robot_count; ++r) {
        if (w.entities[static_cast<std::size_t>(r)].status == Status::active) {
          actions[r] = policy.act(w, r);
        }
      }
      StepResult res = step_world(w, actions, crowd, rp);
      log.record_step(w, res.rewards);
    }
    result.logs.push_back(std::move(log));
  }
  result.metrics = compute_metrics(result.logs, spec.discomfort_dist);
  return result;
}

}  // namespace multisoc
