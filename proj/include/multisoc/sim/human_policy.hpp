#pragma once

#include "multisoc/sim/entity.hpp"

#include <string>
#include <vector>

namespace multisoc {

struct OrcaParams {
  double time_horizon = 5.0;   // seconds of reciprocal lookahead
  double neighbor_dist = 10.0; // agents beyond this are ignored entirely
  double dt = 0.25;            // resolution timestep for already-overlapping pairs
};

struct SocialForceParams {
  double relaxation_time = 0.5;
  double repulsion_strength = 2.0;  // A
  double repulsion_range = 0.5;     // B
  double dt = 0.25;
};

// Preferred velocity: straight to the goal at preferred speed, shortened when
// one step would overshoot.
Vec2 preferred_velocity(const EntityState& self, double dt);

// Optimal reciprocal collision avoidance. Builds one half-plane per neighbor
// over the time horizon and picks the feasible velocity closest to the
// preferred one by incremental 2D linear programming; when the program is
// infeasible the standard projective fallback minimises the worst violation.
Vec2 orca_velocity(const EntityState& self, const std::vector<const EntityState*>& neighbors,
                   const OrcaParams& params);

// Goal-attraction relaxation plus exponential pairwise repulsion, integrated
// one step and clipped to the preferred speed.
Vec2 social_force_velocity(const EntityState& self,
                           const std::vector<const EntityState*>& neighbors,
                           const SocialForceParams& params);

enum class HumanPolicyKind { orca, social_force };

// Per-crowd policy selection: which scripted controller drives each human,
// whether humans also react to robots (off by default: adversarial crowd),
// and an optional FoV cone masking the neighbor set before the controller
// runs (the reduced-FoV ORCA variant).
struct CrowdPolicy {
  std::vector<HumanPolicyKind> assignment;  // indexed by order among humans
  OrcaParams orca;
  SocialForceParams social_force;
  bool react_to_robots = false;
  bool limited_fov = false;
  double fov_rad = 2.0 * M_PI;

  HumanPolicyKind kind_of(int human_index) const {
    if (assignment.empty()) return HumanPolicyKind::orca;
    return assignment[static_cast<std::size_t>(human_index) % assignment.size()];
  }
};

}  // namespace multisoc
