#pragma once

#include "multisoc/core/checkpoint.hpp"
#include "multisoc/mappo/buffer.hpp"
#include "multisoc/mappo/value_norm.hpp"
#include "multisoc/sim/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <thread>

namespace multisoc {

inline int worker_cap() {
  if (const char* env = std::getenv("MULTISOC_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Index-parallel loop; every index is independent, so results do not depend
// on the thread count or schedule.
template <typename Fn>
void parallel_for(int count, const Fn& fn, int max_workers = worker_cap()) {
  const int workers = std::min(count, std::max(1, max_workers));
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<int> cursor{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      try {
        for (int i = cursor.fetch_add(1); i < count; i = cursor.fetch_add(1)) {
          fn(i);
        }
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

struct TrainConfig {
  int n_rollout_threads = 16;
  int num_mini_batch = 2;
  int episode_length = 50;      // steps collected per environment per iteration
  int data_chunk_length = 50;   // recurrent replay chunk
  int64_t num_env_steps = 20000000;
  int ppo_epoch = 5;
  double lr = 4e-5;
  double critic_lr = 4e-5;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_param = 0.2;
  double entropy_coef = 0.01;
  double value_loss_coef = 1.0;
  double max_grad_norm = 10.0;
  double collision_penalty = -20.0;
  TemperatureSchedule temp;
  int64_t checkpoint_interval = 100000;  // env steps between checkpoints
  int rolling_window = 100;              // agent-episodes in the curve window
  uint64_t seed = 0;

  static TrainConfig from_config(const KeyValueConfig& cfg) {
    TrainConfig t;
    t.n_rollout_threads = static_cast<int>(cfg.get_int("nrolloutthread", t.n_rollout_threads));
    t.num_mini_batch = static_cast<int>(cfg.get_int("numminibatch", t.num_mini_batch));
    t.episode_length = static_cast<int>(cfg.get_int("episode_length", t.episode_length));
    t.data_chunk_length = static_cast<int>(cfg.get_int("data_chunk_length", t.data_chunk_length));
    t.num_env_steps = cfg.get_int("num_env_steps", t.num_env_steps);
    t.ppo_epoch = static_cast<int>(cfg.get_int("ppo_epoch", t.ppo_epoch));
    t.lr = cfg.get_num("lr", t.lr);
    t.critic_lr = cfg.get_num("critic_lr", t.lr);
    t.gamma = cfg.get_num("gamma", t.gamma);
    t.gae_lambda = cfg.get_num("gae_lambda", t.gae_lambda);
    t.clip_param = cfg.get_num("clip_param", t.clip_param);
    t.entropy_coef = cfg.get_num("entropy_coef", t.entropy_coef);
    t.value_loss_coef = cfg.get_num("value_loss_coef", t.value_loss_coef);
    t.max_grad_norm = cfg.get_num("max_grad_norm", t.max_grad_norm);
    t.collision_penalty = cfg.get_num("collision_penalty", t.collision_penalty);
    t.checkpoint_interval = cfg.get_int("checkpoint_interval", t.checkpoint_interval);
    t.rolling_window = static_cast<int>(cfg.get_int("rolling_window", t.rolling_window));
    t.seed = static_cast<uint64_t>(cfg.get_int("seed", 0));
    t.temp = TemperatureSchedule::from_config(cfg, t.num_env_steps);
    if (t.episode_length % t.data_chunk_length != 0) {
      throw ConfigError("episode_length must be a multiple of data_chunk_length");
    }
    if (t.n_rollout_threads < 1 || t.num_mini_batch < 1 || t.ppo_epoch < 1) {
      throw ConfigError("nrolloutthread, numminibatch and ppo_epoch must be >= 1");
    }
    return t;
  }
};

// Raw generalized advantage estimation over a collected batch: deltas and
// the lambda-discounted recursion per sequence, truncated at dones, with the
// stored bootstrap value after the last step. Fills advantages and returns.
template <typename S>
void compute_gae_raw(RolloutBatch<S>& batch, double gamma, double lambda) {
  for (int s = 0; s < batch.sequences; ++s) {
    double gae = 0.0;
    double next_value = batch.bootstrap_value[static_cast<std::size_t>(s)];
    for (int t = batch.steps - 1; t >= 0; --t) {
      Transition<S>& tr = batch.at(t, s);
      if (!tr.active) continue;
      const double not_done = tr.done ? 0.0 : 1.0;
      const double delta = tr.reward + gamma * next_value * not_done - tr.value;
      gae = delta + gamma * lambda * not_done * gae;
      batch.advantages[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)] = gae;
      batch.returns[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)] = gae + tr.value;
      next_value = tr.value;
    }
  }
}

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;      // sum until aggregated, then mean
  double clip_fraction = 0.0;  // likewise
  double grad_norm = 0.0;
  int samples = 0;
};

// One simulated environment plus the per-agent recurrent state and episode
// bookkeeping. Each runner owns all of its randomness.
template <typename S>
class EnvRunner {
 public:
  struct FinishedEpisode {
    double agent_reward = 0.0;
    bool success = false;
    int length = 0;
  };

  EnvRunner() = default;

  void init(const ScenarioSpec& spec, Index rnn_size, RngStream stream) {
    spec_ = spec;
    rnn_size_ = rnn_size;
    stream_ = stream;
    act_rng_ = stream.child("act");
    reward_params_.collision_penalty = collision_penalty_;
    reset();
  }

  void set_collision_penalty(double p) {
    collision_penalty_ = p;
    reward_params_.collision_penalty = p;
  }

  void reset() {
    RngStream scen = stream_.child("episode", static_cast<uint64_t>(episode_index_));
    world_ = generate_scenario(spec_, scen);
    RngStream crowd_rng = scen.child("crowd");
    crowd_ = make_crowd_policy(spec_, crowd_rng);
    ++episode_index_;
    hidden_.assign(static_cast<std::size_t>(world_.robot_count), Matrix<S>::Zero(1, rnn_size_));
    episode_reward_.assign(static_cast<std::size_t>(world_.robot_count), 0.0);
    fresh_ = true;
  }

  const World& world() const { return world_; }
  int agents() const { return world_.robot_count; }
  const Matrix<S>& hidden(int agent) const { return hidden_[static_cast<std::size_t>(agent)]; }
  RngStream& act_rng() { return act_rng_; }

  // Advance one step under the shared policy, writing transitions into
  // buffer row t for this runner's sequences.
  void collect_step(const MultiSocNet<S>& net, S tau, RolloutBatch<S>& buffer, int t, int seq0,
                    const ValueNormalizer& vnorm) {
    const int agents = world_.robot_count;
    std::map<int, Vec2> actions;
    for (int a = 0; a < agents; ++a) {
      Transition<S>& tr = buffer.at(t, seq0 + a);
      tr.obs = build_observation(world_, a);
      tr.begin = fresh_;
      tr.active = world_.entities[static_cast<std::size_t>(a)].status == Status::active;
      tr.done = false;
      tr.reward = 0.0;
      if (!tr.active) {
        tr.edge_noise.clear();
        tr.action = Vec2::Zero();
        tr.log_prob = 0.0;
        tr.value = 0.0;
        continue;
      }
      BatchObs<S> one = BatchObs<S>::from_observation(tr.obs);
      tr.edge_noise = sample_edge_noise<S>(1, one.n, net.config().edge_selector_heads, act_rng_);
      PolicyOutput<S> out =
          net.forward(one, hidden_[static_cast<std::size_t>(a)], tr.edge_noise, tau, true);
      hidden_[static_cast<std::size_t>(a)] = out.hidden;
      const Vec2 mean(out.action_mean(0, 0), out.action_mean(0, 1));
      const Vec2 sigma(std::exp(static_cast<double>(out.log_std(0, 0))),
                       std::exp(static_cast<double>(out.log_std(0, 1))));
      tr.action = mean + Vec2(act_rng_.normal() * sigma.x(), act_rng_.normal() * sigma.y());
      tr.log_prob = MultiSocNet<S>::gaussian_log_prob(tr.action, mean, sigma);
      tr.value = vnorm.denormalize(static_cast<double>(out.value(0, 0)));
      actions[a] = tr.action;
    }

    StepResult res = step_world(world_, actions, crowd_, reward_params_);
    const bool over = world_.episode_over(spec_.max_steps);
    for (int a = 0; a < agents; ++a) {
      Transition<S>& tr = buffer.at(t, seq0 + a);
      if (!tr.active) continue;
      auto it = res.rewards.find(a);
      tr.reward = it != res.rewards.end() ? it->second : 0.0;
      episode_reward_[static_cast<std::size_t>(a)] += tr.reward;
      const bool terminated =
          world_.entities[static_cast<std::size_t>(a)].status != Status::active;
      tr.done = terminated || over;  // episode cap counts as terminal
    }
    fresh_ = false;
    if (over) {
      for (int a = 0; a < agents; ++a) {
        FinishedEpisode fe;
        fe.agent_reward = episode_reward_[static_cast<std::size_t>(a)];
        fe.success = world_.entities[static_cast<std::size_t>(a)].status == Status::reached;
        fe.length = world_.timestep;
        finished_.push_back(fe);
      }
      reset();
    }
  }

  // Denormalized value of the current state per agent, for GAE bootstrap.
  void bootstrap(const MultiSocNet<S>& net, S tau, RolloutBatch<S>& buffer, int seq0,
                 const ValueNormalizer& vnorm) {
    for (int a = 0; a < agents(); ++a) {
      double v = 0.0;
      if (world_.entities[static_cast<std::size_t>(a)].status == Status::active && !fresh_) {
        Observation obs = build_observation(world_, a);
        BatchObs<S> one = BatchObs<S>::from_observation(obs);
        auto noise = sample_edge_noise<S>(1, one.n, net.config().edge_selector_heads, act_rng_);
        PolicyOutput<S> out =
            net.forward(one, hidden_[static_cast<std::size_t>(a)], noise, tau, true);
        v = vnorm.denormalize(static_cast<double>(out.value(0, 0)));
      }
      buffer.bootstrap_value[static_cast<std::size_t>(seq0 + a)] = v;
    }
  }

  std::vector<FinishedEpisode> drain_finished() {
    std::vector<FinishedEpisode> out(finished_.begin(), finished_.end());
    finished_.clear();
    return out;
  }

 private:
  ScenarioSpec spec_;
  RewardParams reward_params_;
  double collision_penalty_ = -20.0;
  Index rnn_size_ = 0;
  RngStream stream_, act_rng_;
  World world_;
  CrowdPolicy crowd_;
  std::vector<Matrix<S>> hidden_;
  std::vector<double> episode_reward_;
  std::vector<FinishedEpisode> finished_;
  int64_t episode_index_ = 0;
  bool fresh_ = true;
};

// log-probability rows of a diagonal Gaussian, on the tape
template <typename S>
Var<S> gaussian_logp_rows(Var<S> mean, Var<S> log_std, const Matrix<S>& actions) {
  const Index b = mean.rows();
  Var<S> lsb = broadcast_rows(log_std, b);
  Var<S> inv_sigma = multisoc::exp(scale(lsb, S(-1)));
  Var<S> diff = add_mat(scale(mean, S(-1)), actions);
  Var<S> z = mul(diff, inv_sigma);
  Var<S> quad = scale(sum_cols(mul(z, z)), S(-0.5));
  Var<S> logdet = scale(sum_cols(lsb), S(-1));
  const Matrix<S> norm_const =
      Matrix<S>::Constant(b, 1, static_cast<S>(-std::log(2.0 * M_PI)));
  return add_mat(add(quad, logdet), norm_const);
}

// Shared-parameter PPO with recurrent chunked replay and value
// normalization. One trainer owns the single ParamSet of the run; rollout
// workers read immutable snapshots, only the update path writes.
template <typename S>
class MappoTrainer {
 public:
  MappoTrainer(ScenarioSpec scenario, NetConfig net_cfg, TrainConfig train_cfg)
      : scenario_(scenario), cfg_(train_cfg), net_(net_cfg) {
    scenario_.seed = train_cfg.seed;
    root_ = RngStream(train_cfg.seed);
    net_.init_params(root_.child("params"));
    AdamConfig<S> ac;
    ac.lr = static_cast<S>(cfg_.lr);
    ac.eps = static_cast<S>(1e-5);
    opt_ = Adam<S>(ac);
    if (cfg_.critic_lr != cfg_.lr) {
      opt_.set_prefix_lr("critic/", static_cast<S>(cfg_.critic_lr));
    }
    shuffle_rng_ = root_.child("shuffle");
    envs_.resize(static_cast<std::size_t>(cfg_.n_rollout_threads));
    for (int e = 0; e < cfg_.n_rollout_threads; ++e) {
      envs_[static_cast<std::size_t>(e)].set_collision_penalty(cfg_.collision_penalty);
      envs_[static_cast<std::size_t>(e)].init(scenario_, net_.config().rnn_size,
                                              root_.child("env", static_cast<uint64_t>(e)));
    }
    agents_per_env_ = envs_[0].agents();
  }

  MultiSocNet<S>& net() { return net_; }
  ValueNormalizer& value_normalizer() { return vnorm_; }
  int64_t env_steps() const { return env_steps_; }
  int64_t iteration() const { return iteration_; }

  double current_tau() const {
    return temperature(env_steps_, cfg_.temp);
  }

  RolloutBatch<S> collect_rollouts() {
    RolloutBatch<S> buffer;
    const int seqs = cfg_.n_rollout_threads * agents_per_env_;
    buffer.resize(cfg_.episode_length, seqs, agents_per_env_, net_.config().rnn_size);
    const S tau = static_cast<S>(current_tau());

    // chunk-boundary hidden snapshots, one row per (chunk, seq)
    const int chunks = cfg_.episode_length / cfg_.data_chunk_length;
    buffer.chunk_hidden.assign(static_cast<std::size_t>(chunks) * static_cast<std::size_t>(seqs),
                               Matrix<S>::Zero(1, net_.config().rnn_size));

    parallel_for(cfg_.n_rollout_threads, [&](int e) {
      EnvRunner<S>& env = envs_[static_cast<std::size_t>(e)];
      const int seq0 = e * agents_per_env_;
      for (int t = 0; t < cfg_.episode_length; ++t) {
        if (t % cfg_.data_chunk_length == 0) {
          const int c = t / cfg_.data_chunk_length;
          for (int a = 0; a < agents_per_env_; ++a) {
            buffer.chunk_hidden[static_cast<std::size_t>(c * seqs + seq0 + a)] = env.hidden(a);
          }
        }
        env.collect_step(net_, tau, buffer, t, seq0, vnorm_);
      }
      env.bootstrap(net_, tau, buffer, seq0, vnorm_);
    });
    for (int s = 0; s < seqs; ++s) {
      buffer.initial_hidden[static_cast<std::size_t>(s)] =
          buffer.chunk_hidden[static_cast<std::size_t>(s)];
    }

    for (auto& env : envs_) {
      for (auto& fe : env.drain_finished()) {
        window_.push_back(fe);
        while (static_cast<int>(window_.size()) > cfg_.rolling_window) window_.pop_front();
      }
    }
    env_steps_ += static_cast<int64_t>(cfg_.episode_length) * cfg_.n_rollout_threads;
    return buffer;
  }

  // GAE over raw-scale values, then normalizer update and normalized value
  // targets; advantages standardized over the active transitions.
  void compute_gae(RolloutBatch<S>& batch) {
    compute_gae_raw(batch, cfg_.gamma, cfg_.gae_lambda);
    std::vector<double> all_returns;
    for (int t = 0; t < batch.steps; ++t) {
      for (int s = 0; s < batch.sequences; ++s) {
        if (!batch.at(t, s).active) continue;
        all_returns.push_back(
            batch.returns[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)]);
      }
    }
    vnorm_.update(all_returns);

    double mean = 0.0, sq = 0.0;
    int count = 0;
    for (int t = 0; t < batch.steps; ++t) {
      for (int s = 0; s < batch.sequences; ++s) {
        if (!batch.at(t, s).active) continue;
        mean += batch.advantages[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)];
        ++count;
      }
    }
    if (count == 0) return;
    mean /= count;
    for (int t = 0; t < batch.steps; ++t) {
      for (int s = 0; s < batch.sequences; ++s) {
        if (!batch.at(t, s).active) continue;
        const double d =
            batch.advantages[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)] - mean;
        sq += d * d;
      }
    }
    const double stddev = std::sqrt(sq / count) + 1e-8;
    for (int t = 0; t < batch.steps; ++t) {
      for (int s = 0; s < batch.sequences; ++s) {
        Transition<S>& tr = batch.at(t, s);
        if (!tr.active) continue;
        auto& adv = batch.advantages[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)];
        adv = (adv - mean) / stddev;
        batch.value_targets[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)] =
            vnorm_.normalize(batch.returns[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)]);
      }
    }
  }

  // clipped-surrogate update: ppo_epoch passes over num_mini_batch groups of
  // recurrent chunks
  UpdateStats ppo_update(const RolloutBatch<S>& batch) {
    const int seqs = batch.sequences;
    const int chunks_per_seq = cfg_.episode_length / cfg_.data_chunk_length;
    const int total_chunks = seqs * chunks_per_seq;
    std::vector<int> order(static_cast<std::size_t>(total_chunks));
    std::iota(order.begin(), order.end(), 0);

    const S tau = static_cast<S>(current_tau());
    UpdateStats stats;
    int stat_batches = 0;

    for (int epoch = 0; epoch < cfg_.ppo_epoch; ++epoch) {
      // deterministic shuffle from the trainer's own stream
      for (int i = total_chunks - 1; i > 0; --i) {
        const int j = static_cast<int>(shuffle_rng_.below(static_cast<uint64_t>(i + 1)));
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
      }
      const int per_batch = (total_chunks + cfg_.num_mini_batch - 1) / cfg_.num_mini_batch;
      for (int mb = 0; mb < cfg_.num_mini_batch; ++mb) {
        const int begin = mb * per_batch;
        const int end = std::min(total_chunks, begin + per_batch);
        if (begin >= end) continue;
        std::vector<int> units(order.begin() + begin, order.begin() + end);
        UpdateStats s = update_minibatch(batch, units, tau);
        stats.policy_loss += s.policy_loss;
        stats.value_loss += s.value_loss;
        stats.entropy += s.entropy;
        stats.approx_kl += s.approx_kl;
        stats.clip_fraction += s.clip_fraction;
        stats.grad_norm += s.grad_norm;
        ++stat_batches;
      }
    }
    if (stat_batches > 0) {
      stats.policy_loss /= stat_batches;
      stats.value_loss /= stat_batches;
      stats.entropy /= stat_batches;
      stats.approx_kl /= stat_batches;
      stats.clip_fraction /= stat_batches;
      stats.grad_norm /= stat_batches;
    }
    return stats;
  }

  struct CurvePoint {
    int64_t env_steps = 0;
    double mean_episode_reward = 0.0;
    double success_rate = 0.0;
  };

  CurvePoint curve_point() const {
    CurvePoint p;
    p.env_steps = env_steps_;
    if (!window_.empty()) {
      for (const auto& fe : window_) {
        p.mean_episode_reward += fe.agent_reward;
        p.success_rate += fe.success ? 1.0 : 0.0;
      }
      p.mean_episode_reward /= static_cast<double>(window_.size());
      p.success_rate /= static_cast<double>(window_.size());
    }
    return p;
  }

  UpdateStats train_iteration() {
    RolloutBatch<S> batch = collect_rollouts();
    compute_gae(batch);
    UpdateStats stats = ppo_update(batch);
    ++iteration_;
    return stats;
  }

  // Full loop: iterate until the step budget, stream curve rows, write
  // periodic and final checkpoints into out_dir.
  void train(const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    std::ofstream curve(out_dir + "/curve.csv", std::ios::trunc);
    curve << "env_steps,mean_episode_reward,success_rate\n";
    save_checkpoint(out_dir + "/checkpoint_0.ckpt");
    int64_t next_checkpoint = cfg_.checkpoint_interval;
    while (env_steps_ < cfg_.num_env_steps) {
      try {
        train_iteration();
      } catch (const NumericError&) {
        save_checkpoint(out_dir + "/checkpoint_diagnostics.ckpt");
        throw;
      }
      CurvePoint p = curve_point();
      char row[128];
      std::snprintf(row, sizeof(row), "%lld,%.6f,%.6f\n", static_cast<long long>(p.env_steps),
                    p.mean_episode_reward, p.success_rate);
      curve << row;
      curve.flush();
      if (env_steps_ >= next_checkpoint) {
        save_checkpoint(out_dir + "/checkpoint_" + std::to_string(env_steps_) + ".ckpt");
        next_checkpoint += cfg_.checkpoint_interval;
      }
    }
    if (iteration_ > 0) {
      save_checkpoint(out_dir + "/checkpoint_final.ckpt");
    }
  }

  void save_checkpoint(const std::string& path) const {
    std::vector<CheckpointEntry> entries;
    for (const auto& [name, e] : net_.params()) {
      entries.push_back(to_entry("net/" + name, e.value));
    }
    Adam<S>& opt = const_cast<Adam<S>&>(opt_);
    for (const auto& [name, e] : net_.params()) {
      if (opt.has_moments(name)) {
        entries.push_back(to_entry("opt/m/" + name, opt.first_moment(name)));
        entries.push_back(to_entry("opt/v/" + name, opt.second_moment(name)));
      }
    }
    Matrix<float> meta(1, 5);
    meta << static_cast<float>(opt_.step_count()), static_cast<float>(env_steps_),
        static_cast<float>(iteration_), 0.0f, 0.0f;
    entries.push_back(to_entry("train/meta", meta));
    Matrix<float> vn(1, 3);
    vn << static_cast<float>(vnorm_.mean()), static_cast<float>(vnorm_.variance()),
        static_cast<float>(vnorm_.count());
    entries.push_back(to_entry("vnorm/stats", vn));
    write_checkpoint(path, entries);
  }

  void load_checkpoint(const std::string& path) {
    auto entries = read_checkpoint(path);
    load_net_params(net_, entries);
    for (const auto& e : entries) {
      if (e.name.rfind("opt/m/", 0) == 0) {
        opt_.first_moment(e.name.substr(6)) = entry_to_matrix<S>(e);
      } else if (e.name.rfind("opt/v/", 0) == 0) {
        opt_.second_moment(e.name.substr(6)) = entry_to_matrix<S>(e);
      } else if (e.name == "train/meta") {
        Matrix<S> m = entry_to_matrix<S>(e);
        opt_.set_step_count(static_cast<int64_t>(m(0, 0)));
        env_steps_ = static_cast<int64_t>(m(0, 1));
        iteration_ = static_cast<int64_t>(m(0, 2));
      } else if (e.name == "vnorm/stats") {
        Matrix<S> m = entry_to_matrix<S>(e);
        vnorm_.restore(m(0, 0), m(0, 1), m(0, 2));
      }
    }
  }

  // parameters only (the shape any evaluator needs)
  static void load_net_params(MultiSocNet<S>& net, const std::vector<CheckpointEntry>& entries) {
    for (const auto& e : entries) {
      if (e.name.rfind("net/", 0) != 0) continue;
      const std::string name = e.name.substr(4);
      if (!net.params().has(name)) {
        throw std::runtime_error("checkpoint parameter '" + name + "' unknown to this architecture");
      }
      Matrix<S>& dst = net.params().value(name);
      if (static_cast<uint32_t>(dst.rows()) != e.dims[0] ||
          static_cast<uint32_t>(dst.cols()) != e.dims[1]) {
        throw std::runtime_error("checkpoint parameter '" + name + "' has shape " +
                                 std::to_string(e.dims[0]) + "x" + std::to_string(e.dims[1]) +
                                 ", expected " + std::to_string(dst.rows()) + "x" +
                                 std::to_string(dst.cols()));
      }
      dst = entry_to_matrix<S>(e);
    }
  }

 private:
  UpdateStats update_minibatch(const RolloutBatch<S>& batch, const std::vector<int>& units,
                               S tau) {
    const int chunks_per_seq = cfg_.episode_length / cfg_.data_chunk_length;
    const int seqs = batch.sequences;
    int active_total = 0;
    for (int u : units) {
      const int seq = u % seqs;
      const int chunk = u / seqs;
      for (int t = chunk * cfg_.data_chunk_length; t < (chunk + 1) * cfg_.data_chunk_length; ++t) {
        if (batch.at(t, seq).active) ++active_total;
      }
    }
    if (active_total == 0) return {};

    // workers grab disjoint unit ranges; gradients reduce in fixed order
    const int workers = std::min(worker_cap(), static_cast<int>(units.size()));
    const int per_worker = (static_cast<int>(units.size()) + workers - 1) / workers;
    std::vector<std::unique_ptr<MultiSocNet<S>>> worker_nets(static_cast<std::size_t>(workers));
    std::vector<UpdateStats> worker_stats(static_cast<std::size_t>(workers));

    parallel_for(
        workers,
        [&](int w) {
          const int begin = w * per_worker;
          const int end = std::min<int>(static_cast<int>(units.size()), begin + per_worker);
          if (begin >= end) return;
          worker_nets[static_cast<std::size_t>(w)] = std::make_unique<MultiSocNet<S>>(net_.config());
          MultiSocNet<S>& wnet = *worker_nets[static_cast<std::size_t>(w)];
          for (const auto& [name, e] : net_.params()) {
            wnet.params().value(name) = e.value;
          }
          std::vector<int> mine(units.begin() + begin, units.begin() + end);
          worker_stats[static_cast<std::size_t>(w)] =
              chunk_backward(batch, mine, wnet, tau, active_total);
        },
        workers);

    // reduce gradients and stats deterministically
    net_.params().zero_grads();
    UpdateStats stats;
    for (int w = 0; w < workers; ++w) {
      if (!worker_nets[static_cast<std::size_t>(w)]) continue;
      for (auto& [name, e] : net_.params()) {
        e.grad += worker_nets[static_cast<std::size_t>(w)]->params().grad(name);
      }
      const UpdateStats& s = worker_stats[static_cast<std::size_t>(w)];
      stats.policy_loss += s.policy_loss;
      stats.value_loss += s.value_loss;
      stats.approx_kl += s.approx_kl;
      stats.clip_fraction += s.clip_fraction;
      stats.samples += s.samples;
    }
    if (stats.samples > 0) {
      stats.approx_kl /= stats.samples;
      stats.clip_fraction /= stats.samples;
    }
    stats.entropy = 0.0;
    {
      const Matrix<S>& ls = net_.params().value("actor/log_std");
      for (Index d = 0; d < ls.cols(); ++d) {
        stats.entropy += static_cast<double>(ls(0, d)) + 0.5 * std::log(2.0 * M_PI * M_E);
      }
    }

    // global gradient-norm clip, then one Adam step
    double norm_sq = 0.0;
    for (const auto& [name, e] : net_.params()) {
      norm_sq += static_cast<double>(e.grad.squaredNorm());
    }
    const double norm = std::sqrt(norm_sq);
    stats.grad_norm = norm;
    if (norm > cfg_.max_grad_norm) {
      const S scale_g = static_cast<S>(cfg_.max_grad_norm / norm);
      for (auto& [name, e] : net_.params()) {
        e.grad *= scale_g;
      }
    }
    opt_.step(net_.params());
    return stats;
  }

  // Build the loss graph for a set of chunks on a worker-local parameter
  // copy and run backward. Losses are already scaled by 1/active_total so
  // worker sums combine into the minibatch mean.
  UpdateStats chunk_backward(const RolloutBatch<S>& batch, const std::vector<int>& units,
                             MultiSocNet<S>& wnet, S tau, int active_total) {
    const int seqs = batch.sequences;
    const int L = cfg_.data_chunk_length;
    const Index b = static_cast<Index>(units.size());
    const Index n = batch.at(0, 0).obs.graph.node_features.rows();
    const int heads = wnet.config().edge_selector_heads;
    const Index rnn = wnet.config().rnn_size;

    Tape<S> tape;
    Matrix<S> h0(b, rnn);
    for (Index i = 0; i < b; ++i) {
      const int u = units[static_cast<std::size_t>(i)];
      const int seq = u % seqs;
      const int chunk = u / seqs;
      h0.row(i) = batch.chunk_hidden[static_cast<std::size_t>(chunk * seqs + seq)].row(0);
    }
    Var<S> h = tape.leaf(h0);

    Var<S> total_loss;
    bool have_loss = false;
    double kl_sum = 0.0, clip_sum = 0.0, pol_sum = 0.0, val_sum = 0.0;
    int counted = 0;

    for (int lt = 0; lt < L; ++lt) {
      // assemble the batched observation for this step
      std::vector<const Observation*> obs_ptrs;
      obs_ptrs.reserve(static_cast<std::size_t>(b));
      std::vector<Matrix<S>> noise(static_cast<std::size_t>(heads),
                                   Matrix<S>::Zero(b * n, n));
      Matrix<S> actions(b, 2);
      Matrix<S> logp_old(b, 1);
      Matrix<S> adv(b, 1);
      Matrix<S> vtarget(b, 1);
      Matrix<S> weight(b, 1);
      Matrix<S> begin_mask = Matrix<S>::Constant(b, rnn, S(1));
      Matrix<S> act_mask = Matrix<S>::Zero(b, rnn);

      for (Index i = 0; i < b; ++i) {
        const int u = units[static_cast<std::size_t>(i)];
        const int seq = u % seqs;
        const int chunk = u / seqs;
        const int t = chunk * L + lt;
        const Transition<S>& tr = batch.at(t, seq);
        obs_ptrs.push_back(&tr.obs);
        if (tr.begin) begin_mask.row(i).setZero();
        if (tr.active) {
          act_mask.row(i).setOnes();
          for (int hd = 0; hd < heads; ++hd) {
            noise[static_cast<std::size_t>(hd)].middleRows(i * n, n) =
                tr.edge_noise[static_cast<std::size_t>(hd)];
          }
        }
        actions(i, 0) = static_cast<S>(tr.action.x());
        actions(i, 1) = static_cast<S>(tr.action.y());
        logp_old(i, 0) = static_cast<S>(tr.log_prob);
        adv(i, 0) = static_cast<S>(
            batch.advantages[static_cast<std::size_t>(t)][static_cast<std::size_t>(seq)]);
        vtarget(i, 0) = static_cast<S>(
            batch.value_targets[static_cast<std::size_t>(t)][static_cast<std::size_t>(seq)]);
        weight(i, 0) = tr.active ? S(1) / static_cast<S>(active_total) : S(0);
      }

      BatchObs<S> step_obs = BatchObs<S>::from_observations(obs_ptrs);
      Var<S> h_in = mul_mat(h, begin_mask);
      auto fwd = wnet.forward_vars(tape, step_obs, h_in, noise, tau, /*hard=*/true);
      // carry the new hidden only where the transition was live
      Matrix<S> inact_mask = Matrix<S>::Constant(b, rnn, S(1)) - act_mask;
      h = add(mul_mat(fwd.hidden, act_mask), mul_mat(h_in, inact_mask));

      Var<S> logp = gaussian_logp_rows(fwd.action_mean, fwd.log_std, actions);
      const Matrix<S> neg_logp_old = -logp_old;
      Var<S> ratio = multisoc::exp(add_mat(logp, neg_logp_old));
      Var<S> surr1 = mul_mat(ratio, adv);
      Var<S> surr2 = mul_mat(clamp(ratio, S(1) - static_cast<S>(cfg_.clip_param),
                                   S(1) + static_cast<S>(cfg_.clip_param)),
                             adv);
      Var<S> policy_term = scale(weighted_sum_all(min_elem(surr1, surr2), weight), S(-1));
      const Matrix<S> neg_vtarget = -vtarget;
      Var<S> verr = add_mat(fwd.value, neg_vtarget);
      Var<S> value_term = weighted_sum_all(mul(verr, verr), weight);
      Var<S> step_loss =
          add(policy_term, scale(value_term, static_cast<S>(cfg_.value_loss_coef)));
      // state-independent entropy bonus, once per step's weight mass
      const S weight_mass = weight.sum();
      step_loss = sub(step_loss, scale(sum_all(fwd.log_std),
                                       static_cast<S>(cfg_.entropy_coef) * weight_mass));
      total_loss = have_loss ? add(total_loss, step_loss) : step_loss;
      have_loss = true;

      pol_sum += static_cast<double>(policy_term.value()(0, 0));
      val_sum += static_cast<double>(value_term.value()(0, 0));
      for (Index i = 0; i < b; ++i) {
        if (weight(i, 0) == S(0)) continue;
        const double r = static_cast<double>(ratio.value()(i, 0));
        kl_sum += (r - 1.0) - std::log(std::max(r, 1e-12));
        if (std::abs(r - 1.0) > cfg_.clip_param) clip_sum += 1.0;
        ++counted;
      }
    }

    if (!have_loss) return {};
    if (!total_loss.value().allFinite()) {
      throw NumericError("ppo_update: non-finite loss");
    }
    tape.backward(total_loss);

    UpdateStats s;
    s.policy_loss = pol_sum;
    s.value_loss = val_sum;
    s.approx_kl = kl_sum;
    s.clip_fraction = clip_sum;
    s.samples = counted;
    return s;
  }

  ScenarioSpec scenario_;
  TrainConfig cfg_;
  MultiSocNet<S> net_;
  Adam<S> opt_;
  ValueNormalizer vnorm_;
  RngStream root_, shuffle_rng_;
  std::vector<EnvRunner<S>> envs_;
  std::deque<typename EnvRunner<S>::FinishedEpisode> window_;
  int agents_per_env_ = 0;
  int64_t env_steps_ = 0;
  int64_t iteration_ = 0;
};

}  // namespace multisoc
