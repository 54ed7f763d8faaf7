#pragma once

#include "multisoc/percept/observation.hpp"
#include "multisoc/policy/network.hpp"

#include <vector>

namespace multisoc {

// One (timestep, sequence) slot of a rollout segment. A sequence is one
// (environment, agent) pair. Slots produced while an agent had already
// finished its episode carry active=false and are masked out of every loss;
// begin marks the first step of a fresh episode so the recurrent replay can
// zero the hidden state exactly where the rollout did.
template <typename S>
struct Transition {
  Observation obs;
  std::vector<Matrix<S>> edge_noise;  // one (n x n) draw per edge-selector head
  Vec2 action = Vec2::Zero();
  double log_prob = 0.0;
  double value = 0.0;  // denormalized critic output at collection time
  double reward = 0.0;
  bool done = false;
  bool active = false;
  bool begin = false;
};

// Fixed-shape rollout storage: T timesteps by (envs * agents) sequences, plus
// the hidden state each sequence entered the segment with and the bootstrap
// value of the state after the last step.
template <typename S>
struct RolloutBatch {
  int steps = 0;
  int sequences = 0;
  int agents_per_env = 0;
  std::vector<std::vector<Transition<S>>> data;  // [t][seq]
  std::vector<Matrix<S>> initial_hidden;         // [seq], 1 x rnn_size
  std::vector<Matrix<S>> chunk_hidden;           // [chunk * sequences + seq]
  std::vector<double> bootstrap_value;           // [seq]

  // filled by compute_gae
  std::vector<std::vector<double>> advantages;     // [t][seq]
  std::vector<std::vector<double>> returns;        // [t][seq], raw scale
  std::vector<std::vector<double>> value_targets;  // [t][seq], normalized scale

  void resize(int t_steps, int seq_count, int agents, Index rnn_size) {
    steps = t_steps;
    sequences = seq_count;
    agents_per_env = agents;
    data.assign(static_cast<std::size_t>(t_steps),
                std::vector<Transition<S>>(static_cast<std::size_t>(seq_count)));
    initial_hidden.assign(static_cast<std::size_t>(seq_count),
                          Matrix<S>::Zero(1, rnn_size));
    chunk_hidden.clear();
    bootstrap_value.assign(static_cast<std::size_t>(seq_count), 0.0);
    advantages.assign(static_cast<std::size_t>(t_steps),
                      std::vector<double>(static_cast<std::size_t>(seq_count), 0.0));
    returns = advantages;
    value_targets = advantages;
  }

  Transition<S>& at(int t, int seq) {
    return data[static_cast<std::size_t>(t)][static_cast<std::size_t>(seq)];
  }
  const Transition<S>& at(int t, int seq) const {
    return data[static_cast<std::size_t>(t)][static_cast<std::size_t>(seq)];
  }

  int active_count() const {
    int n = 0;
    for (const auto& row : data) {
      for (const auto& tr : row) {
        if (tr.active) ++n;
      }
    }
    return n;
  }
};

}  // namespace multisoc
