#pragma once

#include "multisoc/core/types.hpp"

#include <string>

namespace multisoc {

enum class Kind { robot, human };

enum class Status { active, reached, collided };

inline const char* to_string(Kind k) { return k == Kind::robot ? "robot" : "human"; }

inline const char* to_string(Status s) {
  switch (s) {
    case Status::active: return "active";
    case Status::reached: return "reached";
    default: return "collided";
  }
}

// One human or robot. prev_pos backs the constant-velocity estimate; status
// transitions are monotone: active -> reached or collided, never back.
struct EntityState {
  int id = 0;
  Kind kind = Kind::human;
  Vec2 pos = Vec2::Zero();
  Vec2 prev_pos = Vec2::Zero();
  Vec2 vel = Vec2::Zero();
  Vec2 goal = Vec2::Zero();
  double heading = 0.0;
  double radius = 0.3;
  double pref_speed = 1.0;
  Status status = Status::active;

  double goal_dist() const { return (goal - pos).norm(); }
};

}  // namespace multisoc
