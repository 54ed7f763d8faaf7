#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "multisoc/policy/network.hpp"
#include "support/finite_diff.hpp"

#include <algorithm>
#include <numeric>

using namespace multisoc;
using testsupport::finite_diff;
using testsupport::max_rel_err;

namespace {

NetConfig small_config(int es_heads = 4, int mha_heads = 4) {
  NetConfig c;
  c.edge_selector_emb = 32;
  c.edge_selector_heads = es_heads;
  c.mha_emb = 32;
  c.mha_heads = mha_heads;
  c.agent_emb = 16;
  c.rnn_size = 24;
  c.head_hidden = 16;
  return c;
}

// random but valid interaction-graph batch: diagonal visibility set, some
// entities fully hidden (zero row and column)
BatchObs<double> random_batch(Index n, Index batch, RngStream& rng) {
  BatchObs<double> b;
  b.n = n;
  b.batch = batch;
  b.features.setZero(batch * n, kNodeFeatureDim);
  b.adjacency.resize(batch * n, n);
  b.intrinsic.setZero(batch, kIntrinsicDim);
  for (Index s = 0; s < batch; ++s) {
    std::vector<bool> hidden(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) hidden[static_cast<std::size_t>(i)] = rng.uniform() < 0.2;
    hidden[0] = false;  // agent node stays visible
    for (Index i = 0; i < n; ++i) {
      const Index row = s * n + i;
      if (!hidden[static_cast<std::size_t>(i)]) {
        for (Index c = 0; c < kNodeFeatureDim; ++c) b.features(row, c) = rng.uniform(-2, 2);
      }
      for (Index k = 0; k < n; ++k) {
        bool vis = !hidden[static_cast<std::size_t>(i)] && !hidden[static_cast<std::size_t>(k)];
        b.adjacency(row, k) = vis && (i == k || rng.uniform() < 0.75);
      }
    }
    for (Index c = 0; c < kIntrinsicDim; ++c) b.intrinsic(s, c) = rng.uniform(-2, 2);
    b.agent_rows.push_back(s * n);
  }
  return b;
}

}  // namespace

TEST_CASE("edge selector on a single node yields the self-loop with weight one") {
  MultiSocNet<double> net(small_config());
  net.init_params(RngStream(1));
  RngStream rng(2);
  BatchObs<double> obs = random_batch(1, 1, rng);
  auto noise = sample_edge_noise<double>(1, 1, 4, rng);
  for (bool hard : {true, false}) {
    SparseGraph<double> g = net.edge_selector(obs, noise, 1.0, hard);
    CHECK(g.weights.rows() == 1);
    CHECK(g.weights(0, 0) == doctest::Approx(1.0));
    CHECK(g.mask(0, 0) == true);
  }
}

TEST_CASE("hard edge selector keeps out-degree at most the head count") {
  RngStream rng(42);
  for (int heads : {2, 4}) {
    MultiSocNet<double> net(small_config(heads));
    net.init_params(RngStream(static_cast<uint64_t>(heads)));
    for (int trial = 0; trial < 60; ++trial) {
      const Index n = 1 + static_cast<Index>(rng.below(12));
      BatchObs<double> obs = random_batch(n, 1, rng);
      auto noise = sample_edge_noise<double>(1, n, heads, rng);
      SparseGraph<double> g = net.edge_selector(obs, noise, 0.5, /*hard=*/true);
      for (Index i = 0; i < n; ++i) {
        CHECK(g.out_degree(i) <= heads);
        CHECK(g.out_degree(i) >= 1);
      }
    }
  }
}

TEST_CASE("zero-temperature soft selection is one-hot at the maximal logit") {
  NetConfig cfg = small_config(1, 4);
  MultiSocNet<double> net(cfg);
  net.init_params(RngStream(5));
  RngStream rng(6);
  const Index n = 5;
  BatchObs<double> obs = random_batch(n, 1, rng);
  std::vector<Matrix<double>> zero_noise = {Matrix<double>::Zero(n, n)};
  SparseGraph<double> g = net.edge_selector(obs, zero_noise, 1e-8, /*hard=*/false);

  // independent score recomputation (single head: full projection)
  Matrix<double> e = obs.features;
  Matrix<double> q = e * net.params().value("es/wq");
  Matrix<double> k = e * net.params().value("es/wk");
  Matrix<double> scores = q * k.transpose() / std::sqrt(static_cast<double>(kNodeFeatureDim));
  const double gw = net.params().value("es/gumbel_w")(0, 0);
  const double gb = net.params().value("es/gumbel_b")(0, 0);
  for (Index i = 0; i < n; ++i) {
    Index best = -1;
    double best_logit = -1e300;
    for (Index j = 0; j < n; ++j) {
      bool allowed = obs.adjacency(i, j) || i == j;
      if (!allowed) continue;
      double logit = gw * scores(i, j) + gb;
      if (logit > best_logit) {
        best_logit = logit;
        best = j;
      }
    }
    CHECK(g.weights(i, best) == doctest::Approx(1.0));
    CHECK(g.weights.row(i).sum() == doctest::Approx(1.0));
  }
}

TEST_CASE("soft selection rows sum to one for any temperature") {
  RngStream rng(7);
  MultiSocNet<double> net(small_config());
  net.init_params(RngStream(8));
  for (double tau : {0.05, 0.5, 1.0, 5.0}) {
    const Index n = 6;
    BatchObs<double> obs = random_batch(n, 2, rng);
    auto noise = sample_edge_noise<double>(2, n, 4, rng);
    SparseGraph<double> g = net.edge_selector(obs, noise, tau, /*hard=*/false);
    for (Index r = 0; r < g.weights.rows(); ++r) {
      CHECK(std::abs(g.weights.row(r).sum() - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("crowd coordinator with a single neighbor copies its projection") {
  NetConfig cfg = small_config(4, 2);
  MultiSocNet<double> net(cfg);
  net.init_params(RngStream(9));
  RngStream rng(10);
  const Index n = 4;
  SparseGraph<double> g;
  g.n = n;
  g.node_features.setZero(n, cfg.edge_selector_emb);
  for (Index i = 0; i < n; ++i)
    for (Index c = 0; c < cfg.edge_selector_emb; ++c) g.node_features(i, c) = rng.uniform(-1, 1);
  g.weights = Matrix<double>::Zero(n, n);
  g.mask = MatrixXb::Constant(n, n, false);
  // node 0's only neighborhood entry is node 2
  g.mask(0, 2) = true;
  for (Index i = 1; i < n; ++i) g.mask(i, i) = true;

  Matrix<double> out = net.crowd_coordinator(g);
  const Matrix<double>& wv = net.params().value("cc/wv");
  Matrix<double> expect = g.node_features.row(2) * wv;  // all heads concatenated
  CHECK((out.row(0) - expect.row(0)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("identical node features give uniform attention over neighborhoods") {
  NetConfig cfg = small_config(4, 2);
  MultiSocNet<double> net(cfg);
  net.init_params(RngStream(11));
  const Index n = 5;
  SparseGraph<double> g;
  g.n = n;
  g.node_features = Matrix<double>::Constant(n, cfg.edge_selector_emb, 0.37);
  g.weights = Matrix<double>::Zero(n, n);
  g.mask = MatrixXb::Constant(n, n, false);
  RngStream rng(12);
  for (Index i = 0; i < n; ++i) {
    g.mask(i, i) = true;
    for (Index j = 0; j < n; ++j) {
      if (rng.uniform() < 0.5) g.mask(i, j) = true;
    }
  }
  for (int head = 0; head < cfg.mha_heads; ++head) {
    Matrix<double> alpha = net.crowd_attention_rows(g, head);
    for (Index i = 0; i < n; ++i) {
      const double deg = static_cast<double>(g.mask.row(i).cast<int>().sum());
      for (Index j = 0; j < n; ++j) {
        if (g.mask(i, j)) {
          CHECK(alpha(i, j) == doctest::Approx(1.0 / deg));
        } else {
          CHECK(alpha(i, j) == 0.0);
        }
      }
    }
  }
}

TEST_CASE("crowd coordinator matches a naive per-head double-loop oracle") {
  NetConfig cfg = small_config(4, 4);
  MultiSocNet<double> net(cfg);
  net.init_params(RngStream(13));
  RngStream rng(14);
  const Index n = 5;
  SparseGraph<double> g;
  g.n = n;
  g.node_features.setZero(n, cfg.edge_selector_emb);
  for (Index i = 0; i < n; ++i)
    for (Index c = 0; c < cfg.edge_selector_emb; ++c) g.node_features(i, c) = rng.uniform(-1, 1);
  g.weights = Matrix<double>::Zero(n, n);
  g.mask = MatrixXb::Constant(n, n, false);
  for (Index i = 0; i < n; ++i) {
    g.mask(i, i) = true;
    for (Index j = 0; j < n; ++j)
      if (rng.uniform() < 0.6) g.mask(i, j) = true;
  }

  Matrix<double> out = net.crowd_coordinator(g);

  const Matrix<double>& wq = net.params().value("cc/wq");
  const Matrix<double>& wk = net.params().value("cc/wk");
  const Matrix<double>& wv = net.params().value("cc/wv");
  const Index dh = cfg.mha_emb / cfg.mha_heads;
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(cfg.edge_selector_emb));
  Matrix<double> expect(n, cfg.mha_emb);
  for (int h = 0; h < cfg.mha_heads; ++h) {
    Matrix<double> q = g.node_features * wq.middleCols(h * dh, dh);
    Matrix<double> k = g.node_features * wk.middleCols(h * dh, dh);
    Matrix<double> v = g.node_features * wv.middleCols(h * dh, dh);
    for (Index i = 0; i < n; ++i) {
      double denom = 0.0;
      std::vector<double> weights(static_cast<std::size_t>(n), 0.0);
      double mx = -1e300;
      for (Index j = 0; j < n; ++j) {
        if (g.mask(i, j)) mx = std::max(mx, q.row(i).dot(k.row(j)) * scale_factor);
      }
      for (Index j = 0; j < n; ++j) {
        if (!g.mask(i, j)) continue;
        weights[static_cast<std::size_t>(j)] = std::exp(q.row(i).dot(k.row(j)) * scale_factor - mx);
        denom += weights[static_cast<std::size_t>(j)];
      }
      Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(dh);
      for (Index j = 0; j < n; ++j) {
        if (!g.mask(i, j)) continue;
        acc += (weights[static_cast<std::size_t>(j)] / denom) * v.row(j);
      }
      expect.block(i, h * dh, 1, dh) = acc;
    }
  }
  CHECK((out - expect).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("crowd coordinator attention rows sum to one over sparse graphs") {
  RngStream rng(15);
  MultiSocNet<double> net(small_config());
  net.init_params(RngStream(16));
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = 1 + static_cast<Index>(rng.below(8));
    BatchObs<double> obs = random_batch(n, 1, rng);
    auto noise = sample_edge_noise<double>(1, n, 4, rng);
    SparseGraph<double> g = net.edge_selector(obs, noise, 0.5, true);
    for (int head = 0; head < net.config().mha_heads; ++head) {
      Matrix<double> alpha = net.crowd_attention_rows(g, head);
      for (Index i = 0; i < n; ++i) {
        CHECK(std::abs(alpha.row(i).sum() - 1.0) < 1e-9);
      }
    }
  }
}

TEST_CASE("intrinsic coordinator shape and zero-weight behaviour") {
  NetConfig cfg;  // full-size: 9 -> 64
  MultiSocNet<double> net(cfg);
  Matrix<double> w(1, kIntrinsicDim);
  w << 1, 2, 3, 4, 5, 6, 0.5, 0.3, 1.0;
  Matrix<double> out = net.intrinsic_coordinator(w);
  CHECK(out.rows() == 1);
  CHECK(out.cols() == 64);
  CHECK(out.cwiseAbs().maxCoeff() == 0.0);  // params still zero
  net.init_params(RngStream(17));
  out = net.intrinsic_coordinator(w);
  CHECK(out.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("deterministic forward is reproducible for a lone agent") {
  MultiSocNet<double> net(small_config());
  net.init_params(RngStream(18));
  World w;
  w.robot_count = 1;
  w.dt = 0.25;
  EntityState e;
  e.kind = Kind::robot;
  e.goal = Vec2(3, 2);
  w.entities.push_back(e);
  Observation obs = build_observation(w, 0);
  Matrix<double> h0 = Matrix<double>::Zero(1, net.config().rnn_size);
  RngStream r1(55), r2(55);
  auto a1 = net.act(obs, h0, r1, 0.5, MultiSocNet<double>::Mode::deterministic);
  auto a2 = net.act(obs, h0, r2, 0.5, MultiSocNet<double>::Mode::deterministic);
  CHECK(a1.action == a2.action);
  CHECK(a1.value == a2.value);
  CHECK((a1.hidden - a2.hidden).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("policy output is invariant to permuting non-agent nodes") {
  MultiSocNet<double> net(small_config());
  net.init_params(RngStream(19));
  RngStream rng(20);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = 6;
    BatchObs<double> obs = random_batch(n, 1, rng);
    auto noise = sample_edge_noise<double>(1, n, 4, rng);
    Matrix<double> h0 = Matrix<double>::Zero(1, net.config().rnn_size);
    PolicyOutput<double> base = net.forward(obs, h0, noise, 0.7, true);

    // permutation fixing the agent node 0
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    for (Index i = n - 1; i >= 2; --i) {
      std::swap(perm[static_cast<std::size_t>(i)], perm[1 + static_cast<std::size_t>(rng.below(static_cast<uint64_t>(i)))]);
    }
    BatchObs<double> shuffled = obs;
    std::vector<Matrix<double>> noise_p = noise;
    for (Index i = 0; i < n; ++i) {
      shuffled.features.row(perm[static_cast<std::size_t>(i)]) = obs.features.row(i);
      for (Index j = 0; j < n; ++j) {
        shuffled.adjacency(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]) =
            obs.adjacency(i, j);
        for (std::size_t h = 0; h < noise.size(); ++h) {
          noise_p[h](perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]) =
              noise[h](i, j);
        }
      }
    }
    shuffled.agent_rows = {perm[0]};
    PolicyOutput<double> out = net.forward(shuffled, h0, noise_p, 0.7, true);
    CHECK((out.action_mean - base.action_mean).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((out.value - base.value).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((out.hidden - base.hidden).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("batched forward equals independent per-sample forwards") {
  MultiSocNet<double> net(small_config());
  net.init_params(RngStream(21));
  RngStream rng(22);
  const Index n = 5, batch = 7;
  BatchObs<double> obs = random_batch(n, batch, rng);
  auto noise = sample_edge_noise<double>(batch, n, 4, rng);
  Matrix<double> h0(batch, net.config().rnn_size);
  for (Index i = 0; i < h0.size(); ++i) h0(i / h0.cols(), i % h0.cols()) = rng.uniform(-1, 1);

  PolicyOutput<double> full = net.forward(obs, h0, noise, 0.9, true);

  for (Index s = 0; s < batch; ++s) {
    BatchObs<double> one;
    one.n = n;
    one.batch = 1;
    one.features = obs.features.middleRows(s * n, n);
    one.adjacency = obs.adjacency.middleRows(s * n, n);
    one.intrinsic = obs.intrinsic.row(s);
    one.agent_rows = {obs.agent_rows[static_cast<std::size_t>(s)] - s * n};
    std::vector<Matrix<double>> noise_one;
    for (const auto& m : noise) noise_one.push_back(m.middleRows(s * n, n));
    PolicyOutput<double> single = net.forward(one, h0.row(s), noise_one, 0.9, true);
    CHECK((single.action_mean - full.action_mean.row(s)).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(std::abs(single.value(0, 0) - full.value(s, 0)) < 1e-6);
    CHECK((single.hidden - full.hidden.row(s)).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("end-to-end value gradient matches finite differences in soft mode") {
  NetConfig cfg = small_config();
  RngStream rng(23);
  for (int seed = 0; seed < 3; ++seed) {
    MultiSocNet<double> net(cfg);
    net.init_params(RngStream(100 + static_cast<uint64_t>(seed)));
    const Index n = 4;
    BatchObs<double> obs = random_batch(n, 2, rng);
    auto noise = sample_edge_noise<double>(2, n, cfg.edge_selector_heads, rng);
    Matrix<double> h0 = Matrix<double>::Zero(2, cfg.rnn_size);

    auto loss_value = [&]() {
      Tape<double> tape(false);
      Var<double> h = tape.leaf(h0);
      auto f = net.forward_vars(tape, obs, h, noise, 0.8, /*hard=*/false);
      return f.value.value().sum();
    };

    Tape<double> tape;
    net.params().zero_grads();
    Var<double> h = tape.leaf(h0);
    auto f = net.forward_vars(tape, obs, h, noise, 0.8, /*hard=*/false);
    tape.backward(sum_all(f.value));

    for (const std::string name : {"es/wq", "cc/wv", "ic/w", "gru/uh", "critic/w1", "critic/w2"}) {
      Matrix<double> analytic = net.params().grad(name);
      Matrix<double>& target = net.params().value(name);
      Matrix<double> fd = finite_diff(target, loss_value, 1e-5);
      CAPTURE(name);
      CHECK(max_rel_err(analytic, fd) < 1e-4);
    }
  }
}

TEST_CASE("straight-through backward equals the soft backward on identical noise") {
  NetConfig cfg = small_config();
  MultiSocNet<double> net(cfg);
  net.init_params(RngStream(24));
  RngStream rng(25);
  const Index n = 5;
  BatchObs<double> obs = random_batch(n, 1, rng);
  auto noise = sample_edge_noise<double>(1, n, cfg.edge_selector_heads, rng);
  Matrix<double> c(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) c(i, j) = rng.uniform(-1, 1);

  auto grads_for = [&](bool hard) {
    net.params().zero_grads();
    Tape<double> tape;
    auto es = net.edge_selector_vars(tape, obs, noise, 0.6, hard);
    tape.backward(weighted_sum_all(es.weights, c));
    std::map<std::string, Matrix<double>> out;
    for (const std::string name : {"es/gumbel_w", "es/gumbel_b", "es/wq", "es/wk"}) {
      out[name] = net.params().grad(name);
    }
    return out;
  };

  auto hard_g = grads_for(true);
  auto soft_g = grads_for(false);
  for (const auto& [name, g] : hard_g) {
    CAPTURE(name);
    CHECK((g - soft_g[name]).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("temperature schedule endpoints and monotonicity") {
  TemperatureSchedule sched;
  sched.total_steps = 1000000;
  CHECK(temperature(0, sched) == doctest::Approx(5.0));
  CHECK(temperature(1000000, sched) == doctest::Approx(0.05));
  CHECK(temperature(100000000, sched) >= 0.03);
  RngStream rng(26);
  for (int trial = 0; trial < 200; ++trial) {
    int64_t a = static_cast<int64_t>(rng.below(2000000));
    int64_t b = a + static_cast<int64_t>(rng.below(2000000));
    CHECK(temperature(b, sched) <= temperature(a, sched) + 1e-12);
  }
}

TEST_CASE("config keys map onto the architecture sizes") {
  KeyValueConfig cfg = KeyValueConfig::parse_text(
      "human_node_rnn_size=128\nedge_selector_num_head=4\nmha_num_head=8\n"
      "edge_selector_emb_size=512\nmha_emb_size=256\nagent_embedding_size=64\n"
      "human_node_embedding_size=64\nhuman_human_edge_rnn_size=256\n");
  NetConfig n = NetConfig::from_config(cfg);
  CHECK(n.rnn_size == 128);
  CHECK(n.edge_selector_heads == 4);
  CHECK(n.mha_heads == 8);
  CHECK(n.agent_emb == 64);
  // hyperparameters with no matching block are left for the caller to warn on
  auto unused = cfg.unused_keys();
  REQUIRE(unused.size() == 1);
  CHECK(unused[0] == "human_human_edge_rnn_size");
}

TEST_CASE("non-finite observations are rejected with the failing stage named") {
  MultiSocNet<double> net(small_config());
  net.init_params(RngStream(27));
  RngStream rng(28);
  BatchObs<double> obs = random_batch(3, 1, rng);
  obs.features(1, 2) = std::numeric_limits<double>::infinity();
  auto noise = sample_edge_noise<double>(1, 3, 4, rng);
  Matrix<double> h0 = Matrix<double>::Zero(1, net.config().rnn_size);
  try {
    net.forward(obs, h0, noise, 0.5, true);
    FAIL("expected NumericError");
  } catch (const NumericError& err) {
    CHECK(std::string(err.what()).find("edge_selector") != std::string::npos);
  }
}
