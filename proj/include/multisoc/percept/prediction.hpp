#pragma once

#include "multisoc/sim/entity.hpp"

#include <array>
#include <vector>

namespace multisoc {

inline constexpr int kPredictionHorizon = 5;

// Current position followed by the constant-velocity extrapolation for the
// next kPredictionHorizon steps. This one object feeds both the observation
// features and the predicted-path penalty so the two can never disagree.
struct PredictedPath {
  std::array<Vec2, kPredictionHorizon + 1> pos;

  const Vec2& at_horizon(int k) const { return pos[static_cast<std::size_t>(k)]; }
};

// Velocity estimate from the last two positions; at episode start prev_pos
// equals pos so every predicted pose collapses onto the current one.
inline PredictedPath predict_trajectory(const EntityState& e, double dt) {
  PredictedPath p;
  const Vec2 v_hat = (e.pos - e.prev_pos) / dt;
  p.pos[0] = e.pos;
  for (int k = 1; k <= kPredictionHorizon; ++k) {
    p.pos[static_cast<std::size_t>(k)] = e.pos + static_cast<double>(k) * v_hat * dt;
  }
  return p;
}

}  // namespace multisoc
