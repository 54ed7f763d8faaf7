#pragma once

#include "multisoc/percept/prediction.hpp"
#include "multisoc/sim/world.hpp"

#include <vector>

namespace multisoc {

// 12 trajectory values (current + 5 predicted positions) and a 2-wide kind
// one-hot per node.
inline constexpr Index kNodeFeatureDim = 2 * (kPredictionHorizon + 1) + 2;
inline constexpr Index kIntrinsicDim = 9;

// Labeled, visibility-masked scene graph for one agent. Rows of entities the
// agent cannot see are zeroed and fully masked; N stays constant over an
// episode so shapes never change mid-rollout.
struct InteractionGraph {
  Matrix<double> node_features;  // N x kNodeFeatureDim
  MatrixXb adjacency;            // N x N
  int agent_index = 0;
};

struct Observation {
  InteractionGraph graph;
  Matrix<double> intrinsic;  // 1 x kIntrinsicDim: [p, v, g, theta, r, pref_speed]
  std::vector<PredictedPath> paths;
  std::vector<bool> visible;
  int agent_id = 0;
};

Observation build_observation(const World& w, int agent_id);

}  // namespace multisoc
