#include "multisoc/percept/observation.hpp"

namespace multisoc {

Observation build_observation(const World& w, int agent_id) {
  const int n = static_cast<int>(w.entities.size());
  Observation obs;
  obs.agent_id = agent_id;
  obs.graph.agent_index = agent_id;
  obs.graph.adjacency = visibility_matrix(w, agent_id);
  obs.graph.node_features = Matrix<double>::Zero(n, kNodeFeatureDim);
  obs.paths.resize(static_cast<std::size_t>(n));
  obs.visible.resize(static_cast<std::size_t>(n));

  for (int i = 0; i < n; ++i) {
    const EntityState& e = w.entities[static_cast<std::size_t>(i)];
    obs.paths[static_cast<std::size_t>(i)] = predict_trajectory(e, w.dt);
    obs.visible[static_cast<std::size_t>(i)] = sees(w, agent_id, i);
    if (!obs.visible[static_cast<std::size_t>(i)]) continue;
    for (int k = 0; k <= kPredictionHorizon; ++k) {
      const Vec2& p = obs.paths[static_cast<std::size_t>(i)].at_horizon(k);
      obs.graph.node_features(i, 2 * k) = p.x();
      obs.graph.node_features(i, 2 * k + 1) = p.y();
    }
    const Index label_base = 2 * (kPredictionHorizon + 1);
    obs.graph.node_features(i, label_base + (e.kind == Kind::robot ? 0 : 1)) = 1.0;
  }

  const EntityState& self = w.entities[static_cast<std::size_t>(agent_id)];
  obs.intrinsic.resize(1, kIntrinsicDim);
  obs.intrinsic << self.pos.x(), self.pos.y(), self.vel.x(), self.vel.y(), self.goal.x(),
      self.goal.y(), self.heading, self.radius, self.pref_speed;
  require_finite(obs.intrinsic, "intrinsic observation");
  return obs;
}

}  // namespace multisoc
