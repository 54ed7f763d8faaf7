#pragma once

#include "multisoc/config.hpp"
#include "multisoc/core/adam.hpp"
#include "multisoc/core/ops.hpp"
#include "multisoc/core/params.hpp"
#include "multisoc/core/random.hpp"
#include "multisoc/percept/observation.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace multisoc {

// Architecture sizes, read from config with the conventional key names.
struct NetConfig {
  Index node_dim = kNodeFeatureDim;
  Index intrinsic_dim = kIntrinsicDim;
  Index edge_selector_emb = 512;  // edge_selector_emb_size
  int edge_selector_heads = 4;    // edge_selector_num_head (density factor)
  Index mha_emb = 256;            // mha_emb_size
  int mha_heads = 8;              // mha_num_head
  Index agent_emb = 64;           // agent_embedding_size
  Index rnn_size = 128;           // human_node_rnn_size
  Index head_hidden = 64;         // human_node_embedding_size
  double log_std_init = 0.0;
  double log_std_min = -5.0;
  double log_std_max = 2.0;
  double action_gain = 0.01;  // init gain of the action output layer

  static NetConfig from_config(const KeyValueConfig& cfg) {
    NetConfig n;
    n.edge_selector_emb = cfg.get_int("edge_selector_emb_size", n.edge_selector_emb);
    n.edge_selector_heads = static_cast<int>(cfg.get_int("edge_selector_num_head", n.edge_selector_heads));
    n.mha_emb = cfg.get_int("mha_emb_size", n.mha_emb);
    n.mha_heads = static_cast<int>(cfg.get_int("mha_num_head", n.mha_heads));
    n.agent_emb = cfg.get_int("agent_embedding_size", n.agent_emb);
    n.rnn_size = cfg.get_int("human_node_rnn_size", n.rnn_size);
    n.head_hidden = cfg.get_int("human_node_embedding_size", n.head_hidden);
    n.log_std_init = cfg.get_num("log_std_init", n.log_std_init);
    n.action_gain = cfg.get_num("gain", n.action_gain);
    n.validate();
    return n;
  }

  void validate() const {
    if (edge_selector_heads < 1 || mha_heads < 1) {
      throw ConfigError("attention head counts must be >= 1");
    }
    if (edge_selector_emb % edge_selector_heads != 0) {
      throw ConfigError("edge_selector_emb_size must divide by edge_selector_num_head");
    }
    if (mha_emb % mha_heads != 0) {
      throw ConfigError("mha_emb_size must divide by mha_num_head");
    }
  }
};

// Gumbel temperature: geometric decay from the start value to the base value
// across the training horizon, clamped from below.
struct TemperatureSchedule {
  double start = 5.0;
  double base = 0.05;
  double floor = 0.03;
  int64_t total_steps = 1;

  static TemperatureSchedule from_config(const KeyValueConfig& cfg, int64_t total) {
    TemperatureSchedule t;
    t.start = cfg.get_num("temperature_start", t.start);
    t.base = cfg.get_num("temperature_base", t.base);
    t.floor = cfg.get_num("temperature_min", t.floor);
    t.total_steps = std::max<int64_t>(total, 1);
    return t;
  }
};

inline double temperature(int64_t step, const TemperatureSchedule& s) {
  const double frac = std::min(1.0, static_cast<double>(step) / static_cast<double>(s.total_steps));
  const double tau = s.start * std::pow(s.base / s.start, frac);
  return std::max(tau, s.floor);
}

// A batch of same-sized observations laid out as stacked node blocks.
template <typename S>
struct BatchObs {
  Index n = 0;      // nodes per sample
  Index batch = 0;  // number of samples
  Matrix<S> features;            // (batch*n) x node_dim
  MatrixXb adjacency;            // (batch*n) x n, one visibility block per sample
  Matrix<S> intrinsic;           // batch x intrinsic_dim
  std::vector<Index> agent_rows; // row of the agent node per sample

  static BatchObs from_observations(const std::vector<const Observation*>& obs) {
    BatchObs b;
    b.batch = static_cast<Index>(obs.size());
    b.n = obs[0]->graph.node_features.rows();
    b.features.resize(b.batch * b.n, obs[0]->graph.node_features.cols());
    b.adjacency.resize(b.batch * b.n, b.n);
    b.intrinsic.resize(b.batch, obs[0]->intrinsic.cols());
    for (Index i = 0; i < b.batch; ++i) {
      const Observation& o = *obs[static_cast<std::size_t>(i)];
      if (o.graph.node_features.rows() != b.n) {
        throw DimensionError("BatchObs: mixed node counts in one batch");
      }
      b.features.middleRows(i * b.n, b.n) = o.graph.node_features.template cast<S>();
      b.adjacency.middleRows(i * b.n, b.n) = o.graph.adjacency;
      b.intrinsic.row(i) = o.intrinsic.template cast<S>();
      b.agent_rows.push_back(i * b.n + o.graph.agent_index);
    }
    return b;
  }

  static BatchObs from_observation(const Observation& o) {
    return from_observations({&o});
  }
};

// Per-head Gumbel draws matching a BatchObs; one (batch*n) x n matrix per
// edge-selector head.
template <typename S>
std::vector<Matrix<S>> sample_edge_noise(Index batch, Index n, int heads, RngStream& rng) {
  std::vector<Matrix<S>> out;
  out.reserve(static_cast<std::size_t>(heads));
  for (int k = 0; k < heads; ++k) {
    out.push_back(gumbel_noise<S>(batch * n, n, rng));
  }
  return out;
}

// Sparse interaction graph produced by the edge selector. Edges are the
// nonzero mean selection weights; the mask adds forced self-loops so no
// downstream neighborhood can be empty.
template <typename S>
struct SparseGraph {
  Matrix<S> node_features;  // (batch*n) x edge_selector_emb, concatenated head outputs
  Matrix<S> weights;        // (batch*n) x n, mean of per-head selections, rows sum to 1
  MatrixXb mask;            // weights != 0, plus the diagonal of every block
  Index n = 0;

  Index out_degree(Index row) const {
    Index d = 0;
    for (Index j = 0; j < weights.cols(); ++j) {
      if (weights(row, j) != S(0)) ++d;
    }
    return d;
  }
};

template <typename S>
struct PolicyOutput {
  Matrix<S> action_mean;  // batch x 2
  Matrix<S> log_std;      // 1 x 2
  Matrix<S> value;        // batch x 1
  Matrix<S> hidden;       // batch x rnn_size
};

// The MultiSoc actor-critic: edge selector -> crowd coordinator -> extract
// agent node, concat with the intrinsic embedding -> GRU -> action and value
// heads. One parameter set shared by every agent.
template <typename S>
class MultiSocNet {
 public:
  explicit MultiSocNet(NetConfig cfg = {}) : cfg_(cfg) {
    cfg_.validate();
    build_params();
  }

  const NetConfig& config() const { return cfg_; }
  ParamSet<S>& params() { return params_; }
  const ParamSet<S>& params() const { return params_; }

  // scaled uniform for linear maps, orthogonal for the recurrent weights,
  // zero biases, and a small gain on the action output layer
  void init_params(RngStream rng) {
    RngStream r = rng.child("init");
    auto uni = [&](const std::string& name, double gain = 1.0) {
      RngStream s = r.child(name);
      uniform_init(params_.value(name), s, gain);
    };
    auto orth = [&](const std::string& name) {
      RngStream s = r.child(name);
      orthogonal_init(params_.value(name), s);
    };
    uni("es/wq");
    uni("es/wk");
    uni("es/wv");
    params_.value("es/gumbel_w").setConstant(S(1));
    uni("cc/wq");
    uni("cc/wk");
    uni("cc/wv");
    uni("ic/w");
    uni("gru/wz");
    uni("gru/wr");
    uni("gru/wh");
    orth("gru/uz");
    orth("gru/ur");
    orth("gru/uh");
    uni("actor/w1");
    uni("actor/w2", cfg_.action_gain);  // small gain keeps early actions near zero mean
    uni("critic/w1");
    uni("critic/w2");
    params_.value("actor/log_std").setConstant(static_cast<S>(cfg_.log_std_init));
  }

  // ---- stages ----

  struct EdgeSelectorVars {
    Var<S> node_features;
    Var<S> weights;
    MatrixXb mask;
  };

  // Per head: masked scaled dot-product attention over the visibility graph,
  // then a Gumbel-Softmax over destinations of (w * score + b + g) / tau.
  // hard=true snaps each head's row to a one-hot with a straight-through
  // gradient. Returns both the attended node features and the mean selection
  // weights.
  EdgeSelectorVars edge_selector_vars(Tape<S>& tape, const BatchObs<S>& obs,
                                      const std::vector<Matrix<S>>& noise, S tau,
                                      bool hard) const {
    if (tau <= S(0)) throw NumericError("edge_selector: tau must be positive");
    if (static_cast<int>(noise.size()) != cfg_.edge_selector_heads) {
      throw DimensionError("edge_selector: one noise matrix per head expected");
    }
    require_finite(obs.features, "edge_selector input");
    const Index n = obs.n;
    const MatrixXb eff_mask = with_self_loops(obs.adjacency, n);

    ParamSet<S>& ps = const_cast<ParamSet<S>&>(params_);
    Var<S> e = tape.leaf(obs.features);
    Var<S> q = matmul(e, ps.use(tape, "es/wq"));
    Var<S> k = matmul(e, ps.use(tape, "es/wk"));
    Var<S> v = matmul(e, ps.use(tape, "es/wv"));
    Var<S> gw = ps.use(tape, "es/gumbel_w");
    Var<S> gb = ps.use(tape, "es/gumbel_b");

    const Index dh = cfg_.edge_selector_emb / cfg_.edge_selector_heads;
    const S scale_factor = S(1) / std::sqrt(static_cast<S>(cfg_.node_dim));

    Var<S> features_cat;
    Var<S> weight_sum;
    for (int h = 0; h < cfg_.edge_selector_heads; ++h) {
      Var<S> qh = slice_cols(q, h * dh, dh);
      Var<S> kh = slice_cols(k, h * dh, dh);
      Var<S> vh = slice_cols(v, h * dh, dh);
      Var<S> scores = blocks_qkt(qh, kh, n, scale_factor);
      Var<S> attended = blocks_apply(softmax_rows(scores, &eff_mask), vh, n);
      features_cat = h == 0 ? attended : concat_cols(features_cat, attended);

      Var<S> logits = add_scalar_var(scale_by_var(scores, gw), gb);
      Var<S> perturbed = scale(add_mat(logits, noise[static_cast<std::size_t>(h)]), S(1) / tau);
      Var<S> soft = softmax_rows(perturbed, &eff_mask);
      Var<S> sel = hard ? st_hard_rows(soft) : soft;
      weight_sum = h == 0 ? sel : add(weight_sum, sel);
    }
    Var<S> weights = scale(weight_sum, S(1) / static_cast<S>(cfg_.edge_selector_heads));

    require_finite(features_cat.value(), "edge_selector features");
    require_finite(weights.value(), "edge_selector weights");

    EdgeSelectorVars out;
    out.node_features = features_cat;
    out.weights = weights;
    out.mask = sparse_mask(weights.value(), n);
    return out;
  }

  SparseGraph<S> edge_selector(const BatchObs<S>& obs, const std::vector<Matrix<S>>& noise,
                               S tau, bool hard) const {
    Tape<S> tape(false);
    EdgeSelectorVars vars = edge_selector_vars(tape, obs, noise, tau, hard);
    SparseGraph<S> g;
    g.node_features = vars.node_features.value();
    g.weights = vars.weights.value();
    g.mask = vars.mask;
    g.n = obs.n;
    return g;
  }

  // Single-layer GAT over the sparse graph: per head, masked attention rows
  // over the selected neighborhoods, then the value-projected neighbors are
  // summed and heads concatenated. No activation before the concat.
  Var<S> crowd_coordinator_vars(Tape<S>& tape, Var<S> node_features, const MatrixXb& mask,
                                Index n) const {
    ParamSet<S>& ps = const_cast<ParamSet<S>&>(params_);
    Var<S> q = matmul(node_features, ps.use(tape, "cc/wq"));
    Var<S> k = matmul(node_features, ps.use(tape, "cc/wk"));
    Var<S> v = matmul(node_features, ps.use(tape, "cc/wv"));
    const Index dh = cfg_.mha_emb / cfg_.mha_heads;
    // scaled by the node feature dimension
    const S scale_factor = S(1) / std::sqrt(static_cast<S>(node_features.cols()));
    Var<S> out;
    for (int h = 0; h < cfg_.mha_heads; ++h) {
      Var<S> qh = slice_cols(q, h * dh, dh);
      Var<S> kh = slice_cols(k, h * dh, dh);
      Var<S> vh = slice_cols(v, h * dh, dh);
      Var<S> alpha = softmax_rows(blocks_qkt(qh, kh, n, scale_factor), &mask);
      Var<S> head_out = blocks_apply(alpha, vh, n);
      out = h == 0 ? head_out : concat_cols(out, head_out);
    }
    require_finite(out.value(), "crowd_coordinator");
    return out;
  }

  Matrix<S> crowd_coordinator(const SparseGraph<S>& g) const {
    Tape<S> tape(false);
    Var<S> nf = tape.leaf(g.node_features);
    return crowd_coordinator_vars(tape, nf, g.mask, g.n).value();
  }

  // attention rows of one head over a sparse graph, for inspection and tests
  Matrix<S> crowd_attention_rows(const SparseGraph<S>& g, int head) const {
    Tape<S> tape(false);
    ParamSet<S>& ps = const_cast<ParamSet<S>&>(params_);
    Var<S> nf = tape.leaf(g.node_features);
    Var<S> q = matmul(nf, ps.use(tape, "cc/wq"));
    Var<S> k = matmul(nf, ps.use(tape, "cc/wk"));
    const Index dh = cfg_.mha_emb / cfg_.mha_heads;
    const S scale_factor = S(1) / std::sqrt(static_cast<S>(g.node_features.cols()));
    Var<S> qh = slice_cols(q, head * dh, dh);
    Var<S> kh = slice_cols(k, head * dh, dh);
    return softmax_rows(blocks_qkt(qh, kh, g.n, scale_factor), &g.mask).value();
  }

  Var<S> intrinsic_coordinator_vars(Tape<S>& tape, Var<S> intrinsic) const {
    ParamSet<S>& ps = const_cast<ParamSet<S>&>(params_);
    return relu(affine(intrinsic, ps.use(tape, "ic/w"), ps.use(tape, "ic/b")));
  }

  Matrix<S> intrinsic_coordinator(const Matrix<S>& w) const {
    Tape<S> tape(false);
    Var<S> v = tape.leaf(w);
    return intrinsic_coordinator_vars(tape, v).value();
  }

  struct ForwardVars {
    Var<S> action_mean;
    Var<S> log_std;
    Var<S> value;
    Var<S> hidden;
    Var<S> edge_weights;
  };

  // Full pipeline for a batch of same-shape observations. h_prev is
  // batch x rnn_size (zeros at episode start).
  ForwardVars forward_vars(Tape<S>& tape, const BatchObs<S>& obs, Var<S> h_prev,
                           const std::vector<Matrix<S>>& noise, S tau, bool hard) const {
    ParamSet<S>& ps = const_cast<ParamSet<S>&>(params_);
    EdgeSelectorVars es = edge_selector_vars(tape, obs, noise, tau, hard);
    Var<S> coordinated = crowd_coordinator_vars(tape, es.node_features, es.mask, obs.n);
    Var<S> agent_nodes = select_rows(coordinated, obs.agent_rows);
    Var<S> intr = intrinsic_coordinator_vars(tape, tape.leaf(obs.intrinsic));
    Var<S> v_const = concat_cols(agent_nodes, intr);

    GruWeights<S> gru{ps.use(tape, "gru/wz"), ps.use(tape, "gru/uz"), ps.use(tape, "gru/bz"),
                      ps.use(tape, "gru/wr"), ps.use(tape, "gru/ur"), ps.use(tape, "gru/br"),
                      ps.use(tape, "gru/wh"), ps.use(tape, "gru/uh"), ps.use(tape, "gru/bh")};
    Var<S> h = gru_cell(h_prev, v_const, gru);
    require_finite(h.value(), "gru");

    Var<S> actor_hidden = multisoc::tanh(affine(h, ps.use(tape, "actor/w1"), ps.use(tape, "actor/b1")));
    Var<S> mean = affine(actor_hidden, ps.use(tape, "actor/w2"), ps.use(tape, "actor/b2"));
    Var<S> critic_hidden = multisoc::tanh(affine(h, ps.use(tape, "critic/w1"), ps.use(tape, "critic/b1")));
    Var<S> value = affine(critic_hidden, ps.use(tape, "critic/w2"), ps.use(tape, "critic/b2"));
    Var<S> log_std = clamp(ps.use(tape, "actor/log_std"), static_cast<S>(cfg_.log_std_min),
                           static_cast<S>(cfg_.log_std_max));
    require_finite(mean.value(), "action head");
    require_finite(value.value(), "value head");

    return ForwardVars{mean, log_std, value, h, es.weights};
  }

  enum class Mode { sample, deterministic };

  // Value-only forward over a batch, without gradients.
  PolicyOutput<S> forward(const BatchObs<S>& obs, const Matrix<S>& h_prev,
                          const std::vector<Matrix<S>>& noise, S tau, bool hard) const {
    Tape<S> tape(false);
    Var<S> h = tape.leaf(h_prev);
    ForwardVars f = forward_vars(tape, obs, h, noise, tau, hard);
    return PolicyOutput<S>{f.action_mean.value(), f.log_std.value(), f.value.value(),
                           f.hidden.value()};
  }

  struct ActResult {
    Vec2 action = Vec2::Zero();
    double log_prob = 0.0;
    double value = 0.0;
    Matrix<S> hidden;
  };

  // One agent acting: forward a single observation, then draw (or take) the
  // Gaussian mean. The Gumbel noise is drawn from the caller's stream so the
  // whole step is reproducible.
  ActResult act(const Observation& obs, const Matrix<S>& h_prev, RngStream& rng, S tau,
                Mode mode) const {
    BatchObs<S> batch = BatchObs<S>::from_observation(obs);
    std::vector<Matrix<S>> noise =
        sample_edge_noise<S>(1, batch.n, cfg_.edge_selector_heads, rng);
    PolicyOutput<S> out = forward(batch, h_prev, noise, tau, /*hard=*/true);
    ActResult r;
    r.hidden = out.hidden;
    r.value = out.value(0, 0);
    Vec2 mean(out.action_mean(0, 0), out.action_mean(0, 1));
    Vec2 sigma(std::exp(static_cast<double>(out.log_std(0, 0))),
               std::exp(static_cast<double>(out.log_std(0, 1))));
    if (mode == Mode::sample) {
      r.action = mean + Vec2(rng.normal() * sigma.x(), rng.normal() * sigma.y());
    } else {
      r.action = mean;
    }
    r.log_prob = gaussian_log_prob(r.action, mean, sigma);
    return r;
  }

  static double gaussian_log_prob(const Vec2& a, const Vec2& mean, const Vec2& sigma) {
    double lp = 0.0;
    for (int d = 0; d < 2; ++d) {
      const double z = (a(d) - mean(d)) / sigma(d);
      lp += -0.5 * z * z - std::log(sigma(d)) - 0.5 * std::log(2.0 * M_PI);
    }
    return lp;
  }

 private:
  static MatrixXb with_self_loops(const MatrixXb& adjacency, Index n) {
    MatrixXb m = adjacency;
    for (Index r = 0; r < m.rows(); ++r) {
      m(r, r % n) = true;
    }
    return m;
  }

  static MatrixXb sparse_mask(const Matrix<S>& weights, Index n) {
    MatrixXb m(weights.rows(), weights.cols());
    for (Index r = 0; r < weights.rows(); ++r) {
      for (Index j = 0; j < weights.cols(); ++j) {
        m(r, j) = weights(r, j) != S(0);
      }
      m(r, r % n) = true;  // forced self-loop
    }
    return m;
  }

  void build_params() {
    params_.add("es/wq", cfg_.node_dim, cfg_.edge_selector_emb);
    params_.add("es/wk", cfg_.node_dim, cfg_.edge_selector_emb);
    params_.add("es/wv", cfg_.node_dim, cfg_.edge_selector_emb);
    params_.add("es/gumbel_w", 1, 1);
    params_.add("es/gumbel_b", 1, 1);
    params_.add("cc/wq", cfg_.edge_selector_emb, cfg_.mha_emb);
    params_.add("cc/wk", cfg_.edge_selector_emb, cfg_.mha_emb);
    params_.add("cc/wv", cfg_.edge_selector_emb, cfg_.mha_emb);
    params_.add("ic/w", cfg_.intrinsic_dim, cfg_.agent_emb);
    params_.add("ic/b", 1, cfg_.agent_emb);
    const Index gru_in = cfg_.mha_emb + cfg_.agent_emb;
    params_.add("gru/wz", gru_in, cfg_.rnn_size);
    params_.add("gru/uz", cfg_.rnn_size, cfg_.rnn_size);
    params_.add("gru/bz", 1, cfg_.rnn_size);
    params_.add("gru/wr", gru_in, cfg_.rnn_size);
    params_.add("gru/ur", cfg_.rnn_size, cfg_.rnn_size);
    params_.add("gru/br", 1, cfg_.rnn_size);
    params_.add("gru/wh", gru_in, cfg_.rnn_size);
    params_.add("gru/uh", cfg_.rnn_size, cfg_.rnn_size);
    params_.add("gru/bh", 1, cfg_.rnn_size);
    params_.add("actor/w1", cfg_.rnn_size, cfg_.head_hidden);
    params_.add("actor/b1", 1, cfg_.head_hidden);
    params_.add("actor/w2", cfg_.head_hidden, 2);
    params_.add("actor/b2", 1, 2);
    params_.add("actor/log_std", 1, 2);
    params_.add("critic/w1", cfg_.rnn_size, cfg_.head_hidden);
    params_.add("critic/b1", 1, cfg_.head_hidden);
    params_.add("critic/w2", cfg_.head_hidden, 1);
    params_.add("critic/b2", 1, 1);
  }

  NetConfig cfg_;
  ParamSet<S> params_;
};

}  // namespace multisoc
