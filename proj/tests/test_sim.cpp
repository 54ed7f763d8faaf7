#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "multisoc/sim/metrics.hpp"
#include "multisoc/sim/world.hpp"

#include <cmath>
#include <map>
#include <set>

using namespace multisoc;

namespace {

ScenarioSpec desk_spec(int humans, int robots, uint64_t seed) {
  ScenarioSpec s;
  s.humans = humans;
  s.robots = robots;
  s.seed = seed;
  return s;
}

World make_empty_world(int robots, int humans) {
  World w;
  w.robot_count = robots;
  w.dt = 0.25;
  w.goal_radius = 0.3;
  w.rng = RngStream(1);
  for (int i = 0; i < robots + humans; ++i) {
    EntityState e;
    e.id = i;
    e.kind = i < robots ? Kind::robot : Kind::human;
    w.entities.push_back(e);
  }
  return w;
}

}  // namespace

TEST_CASE("scenario with no humans yields one robot and a valid goal") {
  World w = generate_scenario(desk_spec(0, 1, 3), RngStream(3));
  CHECK(w.entities.size() == 1);
  CHECK(w.entities[0].kind == Kind::robot);
  CHECK(w.entities[0].pos.allFinite());
  CHECK(w.entities[0].goal.allFinite());
  CHECK(w.entities[0].pos.norm() <= w.circle_radius + 1e-9);
}

TEST_CASE("scenario generation is deterministic under a seed") {
  World a = generate_scenario(desk_spec(20, 1, 7), RngStream(7));
  World b = generate_scenario(desk_spec(20, 1, 7), RngStream(7));
  REQUIRE(a.entities.size() == b.entities.size());
  for (std::size_t i = 0; i < a.entities.size(); ++i) {
    CHECK(a.entities[i].pos == b.entities[i].pos);
    CHECK(a.entities[i].goal == b.entities[i].goal);
  }
}

TEST_CASE("human goals lie within noise tolerance of the antipode") {
  // start = base + n1, goal = -base + n2 with |n_i| <= noise per axis, so
  // |goal + start| <= 2 * noise * sqrt(2)
  for (uint64_t seed = 0; seed < 100; ++seed) {
    ScenarioSpec spec = desk_spec(20, 1, seed);
    World w = generate_scenario(spec, RngStream(seed));
    for (int i = w.robot_count; i < static_cast<int>(w.entities.size()); ++i) {
      const EntityState& h = w.entities[static_cast<std::size_t>(i)];
      CHECK((h.goal + h.pos).norm() <= 2.0 * spec.position_noise * std::sqrt(2.0) + 1e-9);
    }
  }
}

TEST_CASE("scenario placement respects pairwise clearance") {
  ScenarioSpec spec = desk_spec(15, 3, 5);
  World w = generate_scenario(spec, RngStream(5));
  for (std::size_t i = 0; i < w.entities.size(); ++i) {
    for (std::size_t k = i + 1; k < w.entities.size(); ++k) {
      const double d = (w.entities[i].pos - w.entities[k].pos).norm();
      CHECK(d >= w.entities[i].radius + w.entities[k].radius + spec.clearance_margin - 1e-9);
    }
  }
}

TEST_CASE("impossible placement raises a scenario error") {
  ScenarioSpec spec = desk_spec(200, 1, 1);
  spec.circle_radius = 1.0;  // not enough room on the circle
  CHECK_THROWS_AS(generate_scenario(spec, RngStream(1)), ScenarioError);
}

TEST_CASE("lone robot integrates its velocity command") {
  World w = make_empty_world(1, 0);
  w.entities[0].pos = Vec2(0, 0);
  w.entities[0].prev_pos = Vec2(0, 0);
  w.entities[0].goal = Vec2(5, 0);
  CrowdPolicy crowd;
  StepResult r = step_world(w, {{0, Vec2(1.0, 0.0)}}, crowd, {});
  CHECK(w.entities[0].pos.x() == doctest::Approx(0.25));
  CHECK(w.entities[0].pos.y() == doctest::Approx(0.0));
  CHECK(w.timestep == 1);
  CHECK(r.rewards.count(0) == 1);
}

TEST_CASE("commands above preferred speed are clipped") {
  World w = make_empty_world(1, 0);
  w.entities[0].goal = Vec2(5, 0);
  CrowdPolicy crowd;
  step_world(w, {{0, Vec2(30.0, 40.0)}}, crowd, {});
  CHECK(w.entities[0].vel.norm() == doctest::Approx(1.0));
  CHECK(w.entities[0].pos.norm() == doctest::Approx(0.25));
}

TEST_CASE("overlapping entities trigger a collision event") {
  World w = make_empty_world(1, 1);
  w.entities[0].pos = Vec2(0, 0);
  w.entities[0].goal = Vec2(5, 5);
  w.entities[1].pos = Vec2(0.59, 0);  // sum of radii is 0.6
  w.entities[1].goal = w.entities[1].pos;
  CrowdPolicy crowd;
  StepResult r = step_world(w, {{0, Vec2(0, 0)}}, crowd, {});
  REQUIRE(r.events.collided.size() == 1);
  CHECK(r.events.collided[0] == 0);
  CHECK(w.entities[0].status == Status::collided);
  CHECK(r.rewards[0] == doctest::Approx(-20.0));
}

TEST_CASE("actions for unknown or inactive robots are rejected") {
  World w = make_empty_world(1, 0);
  w.entities[0].goal = Vec2(5, 0);
  CrowdPolicy crowd;
  CHECK_THROWS_AS(step_world(w, {{3, Vec2(0, 0)}}, crowd, {}), std::invalid_argument);
  w.entities[0].status = Status::reached;
  CHECK_THROWS_AS(step_world(w, {{0, Vec2(0, 0)}}, crowd, {}), std::invalid_argument);
}

TEST_CASE("statuses match an independent pairwise-distance replay oracle") {
  ScenarioSpec spec = desk_spec(5, 3, 11);
  World w = generate_scenario(spec, RngStream(11));
  CrowdPolicy crowd = make_crowd_policy(spec, w.rng);
  RngStream actions(99);

  struct Frame {
    std::vector<Vec2> pos;
    std::vector<Status> status;
  };
  std::vector<Frame> trace;
  std::vector<Vec2> goals;
  for (const auto& e : w.entities) goals.push_back(e.goal);

  auto snap = [&]() {
    Frame f;
    for (const auto& e : w.entities) {
      f.pos.push_back(e.pos);
      f.status.push_back(e.status);
    }
    trace.push_back(f);
  };
  snap();
  for (int step = 0; step < 50; ++step) {
    std::map<int, Vec2> acts;
    for (int r = 0; r < w.robot_count; ++r) {
      if (w.entities[static_cast<std::size_t>(r)].status == Status::active) {
        acts[r] = Vec2(actions.uniform(-1, 1), actions.uniform(-1, 1));
      }
    }
    step_world(w, acts, crowd, {});
    snap();
  }

  // replay: walk the recorded positions and recompute every status change
  const int n = static_cast<int>(w.entities.size());
  std::vector<Status> expect(static_cast<std::size_t>(n), Status::active);
  for (std::size_t f = 1; f < trace.size(); ++f) {
    for (int r = 0; r < w.robot_count; ++r) {
      if (expect[static_cast<std::size_t>(r)] != Status::active) continue;
      bool hit = false;
      for (int k = 0; k < n && !hit; ++k) {
        if (k == r) continue;
        if ((trace[f].pos[static_cast<std::size_t>(r)] - trace[f].pos[static_cast<std::size_t>(k)])
                .norm() < 0.6) {
          hit = true;
        }
      }
      if (hit) {
        expect[static_cast<std::size_t>(r)] = Status::collided;
      } else if ((trace[f].pos[static_cast<std::size_t>(r)] - goals[static_cast<std::size_t>(r)])
                     .norm() < w.goal_radius) {
        expect[static_cast<std::size_t>(r)] = Status::reached;
      }
      CHECK(trace[f].status[static_cast<std::size_t>(r)] == expect[static_cast<std::size_t>(r)]);
    }
  }
}

TEST_CASE("visibility is all-ones over visible rows with full FoV") {
  World w = make_empty_world(1, 3);
  w.robot_fov = {2 * M_PI, 50.0};
  w.human_fov = {2 * M_PI, 50.0};
  w.entities[0].pos = Vec2(0, 0);
  w.entities[1].pos = Vec2(1, 0);
  w.entities[2].pos = Vec2(0, 2);
  w.entities[3].pos = Vec2(-3, 1);
  MatrixXb m = visibility_matrix(w, 0);
  CHECK(m.cast<int>().sum() == 16);
}

TEST_CASE("entity directly behind another is invisible under 180-degree FoV") {
  World w = make_empty_world(1, 2);
  w.robot_fov = {2 * M_PI, 50.0};
  w.human_fov = {M_PI, 50.0};
  w.entities[0].pos = Vec2(0, -5);
  w.entities[1].pos = Vec2(0, 0);
  w.entities[1].heading = 0.0;    // looking along +x
  w.entities[2].pos = Vec2(-2, 0);  // directly behind entity 1
  MatrixXb m = visibility_matrix(w, 0);
  CHECK(m(1, 2) == false);
  CHECK(m(2, 1) == true);  // 2 looking along +x by default sees 1? heading 0, bearing +x
  CHECK(m(1, 1) == true);
}

TEST_CASE("visibility matches a pairwise angle and range oracle") {
  RngStream rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    World w = make_empty_world(2, 4);
    w.robot_fov = {120.0 * M_PI / 180.0, 4.0};
    w.human_fov = {120.0 * M_PI / 180.0, 4.0};
    for (auto& e : w.entities) {
      e.pos = Vec2(rng.uniform(-5, 5), rng.uniform(-5, 5));
      e.heading = rng.uniform(-M_PI, M_PI);
    }
    auto oracle_sees = [&](int a, int b) {
      if (a == b) return true;
      Vec2 d = w.entities[static_cast<std::size_t>(b)].pos - w.entities[static_cast<std::size_t>(a)].pos;
      if (d.norm() > 4.0) return false;
      double ang = std::atan2(d.y(), d.x()) - w.entities[static_cast<std::size_t>(a)].heading;
      while (ang > M_PI) ang -= 2 * M_PI;
      while (ang < -M_PI) ang += 2 * M_PI;
      return std::abs(ang) <= 60.0 * M_PI / 180.0 + 1e-12;
    };
    MatrixXb m = visibility_matrix(w, 0);
    const int n = static_cast<int>(w.entities.size());
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < n; ++k) {
        bool expect = oracle_sees(0, i) && oracle_sees(0, k) && oracle_sees(i, k);
        CHECK(m(i, k) == expect);
      }
    }
  }
}

TEST_CASE("visibility row and column of entities outside the agent FoV are zero") {
  RngStream rng(33);
  for (int trial = 0; trial < 20; ++trial) {
    World w = make_empty_world(1, 5);
    w.robot_fov = {100.0 * M_PI / 180.0, 3.0};
    w.human_fov = {2 * M_PI, 10.0};
    for (auto& e : w.entities) {
      e.pos = Vec2(rng.uniform(-5, 5), rng.uniform(-5, 5));
      e.heading = rng.uniform(-M_PI, M_PI);
    }
    MatrixXb m = visibility_matrix(w, 0);
    for (int i = 0; i < 6; ++i) {
      if (!sees(w, 0, i)) {
        CHECK(m.row(i).cast<int>().sum() == 0);
        CHECK(m.col(i).cast<int>().sum() == 0);
      } else {
        CHECK(m(i, i) == true);
      }
    }
  }
}

namespace {

// reward fixture: one robot heading for (5,0) plus one human with
// hand-chosen predicted poses
struct RewardFixture {
  World before, after;
  std::vector<PredictedPath> preds;
  std::vector<bool> visible{true, true};

  RewardFixture(const Vec2& robot_after, const Vec2& human_pos) {
    before = make_empty_world(1, 1);
    before.entities[0].goal = Vec2(5, 0);
    before.entities[1].pos = human_pos;
    before.entities[1].prev_pos = human_pos;
    after = before;
    after.entities[0].pos = robot_after;
    after.entities[0].prev_pos = Vec2(0, 0);
    preds.resize(2);
    for (auto& p : preds) p.pos.fill(Vec2(50, 50));
    preds[1].pos[0] = human_pos;
  }
};

}  // namespace

TEST_CASE("reward: pure approach with no overlaps") {
  RewardFixture fx(Vec2(0.5, 0), Vec2(30, 30));
  double r = compute_reward(fx.before, fx.after, 0, fx.preds, fx.visible, {});
  CHECK(r == doctest::Approx(0.5));
}

TEST_CASE("reward: collision overrides everything at -20") {
  RewardFixture fx(Vec2(0.5, 0), Vec2(30, 30));
  fx.after.entities[0].status = Status::collided;
  double r = compute_reward(fx.before, fx.after, 0, fx.preds, fx.visible, {});
  CHECK(r == -20.0);
}

TEST_CASE("reward: overlap at horizon two costs a quarter of the penalty") {
  // r_pot = 0.1, overlap only at k=2 -> 0.1 - 20/4 = -4.9
  RewardFixture fx(Vec2(0.1, 0), Vec2(30, 30));
  fx.preds[1].pos[2] = Vec2(0.3, 0);  // within 0.6 of the robot after-pose
  double r = compute_reward(fx.before, fx.after, 0, fx.preds, fx.visible, {});
  CHECK(r == doctest::Approx(0.1 - 20.0 / 4.0));
}

TEST_CASE("reward: earliest overlap dominates the prediction penalty") {
  RewardFixture fx(Vec2(0.0, 0), Vec2(30, 30));
  fx.after.entities[0].pos = Vec2(0, 0);  // r_pot = 0
  fx.preds[1].pos[1] = Vec2(0.2, 0);
  fx.preds[1].pos[3] = Vec2(-0.2, 0);
  double r = compute_reward(fx.before, fx.after, 0, fx.preds, fx.visible, {});
  CHECK(r == doctest::Approx(-10.0));  // min(-20/2, -20/8) = -10
}

TEST_CASE("reward: invisible entities contribute no penalty") {
  RewardFixture fx(Vec2(0.1, 0), Vec2(30, 30));
  fx.preds[1].pos[1] = Vec2(0.2, 0);
  fx.visible[1] = false;
  double r = compute_reward(fx.before, fx.after, 0, fx.preds, fx.visible, {});
  CHECK(r == doctest::Approx(0.1));
}

TEST_CASE("no extra reward term on the goal-reaching step") {
  // the reaching step pays exactly the potential difference
  World w = make_empty_world(1, 0);
  w.entities[0].pos = Vec2(0, 0);
  w.entities[0].prev_pos = Vec2(0, 0);
  w.entities[0].goal = Vec2(0.4, 0);
  CrowdPolicy crowd;
  StepResult r = step_world(w, {{0, Vec2(1, 0)}}, crowd, {});
  REQUIRE(w.entities[0].status == Status::reached);
  // d_before = 0.4, d_after = 0.15: reward is the bare potential term
  CHECK(r.rewards[0] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("reward bounds hold on random simulated steps") {
  ScenarioSpec spec = desk_spec(6, 2, 17);
  World w = generate_scenario(spec, RngStream(17));
  CrowdPolicy crowd = make_crowd_policy(spec, w.rng);
  RngStream actions(5);
  const double r_pot_max = spec.pref_speed * spec.dt;
  for (int step = 0; step < 80 && !w.episode_over(150); ++step) {
    std::map<int, Vec2> acts;
    for (int r = 0; r < w.robot_count; ++r) {
      if (w.entities[static_cast<std::size_t>(r)].status == Status::active) {
        acts[r] = Vec2(actions.uniform(-1.5, 1.5), actions.uniform(-1.5, 1.5));
      }
    }
    StepResult res = step_world(w, acts, crowd, {});
    for (const auto& [id, rew] : res.rewards) {
      CHECK(rew >= -20.0 - 1e-9);
      CHECK(rew <= r_pot_max + 1e-9);
    }
  }
}

TEST_CASE("episode terminates exactly when all robots are done or at the cap") {
  World w = make_empty_world(2, 0);
  w.entities[0].goal = Vec2(5, 0);
  w.entities[1].goal = Vec2(-5, 0);
  CHECK_FALSE(w.episode_over(150));
  w.entities[0].status = Status::reached;
  CHECK_FALSE(w.episode_over(150));
  w.entities[1].status = Status::collided;
  CHECK(w.episode_over(150));
  World w2 = make_empty_world(1, 0);
  w2.timestep = 150;
  CHECK(w2.episode_over(150));
}

TEST_CASE("finished robots keep moving toward their goals as obstacles") {
  World w = make_empty_world(2, 0);
  w.entities[0].pos = Vec2(0, 0);
  w.entities[0].goal = Vec2(5, 0);
  w.entities[0].status = Status::collided;
  w.entities[1].pos = Vec2(0, 5);
  w.entities[1].goal = Vec2(0, -5);
  CrowdPolicy crowd;
  step_world(w, {{1, Vec2(0, -1)}}, crowd, {});
  CHECK(w.entities[0].pos.x() == doctest::Approx(0.25));
  CHECK(w.entities[0].status == Status::collided);
}

namespace {

Snapshot snap(int t, int id, Kind kind, Vec2 pos, Status st, double reward) {
  Snapshot s;
  s.t = t;
  s.entity_id = id;
  s.kind = kind;
  s.pos = pos;
  s.status = st;
  s.reward = reward;
  s.radius = 0.3;
  return s;
}

}  // namespace

TEST_CASE("metrics match a hand-computed three-episode report") {
  std::vector<EpisodeLog> logs;

  // episode A: one robot walks 2 m to its goal in 4 steps, human far away
  {
    EpisodeLog log;
    log.robot_count = 1;
    log.dt = 0.25;
    for (int f = 0; f <= 4; ++f) {
      std::vector<Snapshot> frame;
      Status st = f == 4 ? Status::reached : Status::active;
      frame.push_back(snap(f, 0, Kind::robot, Vec2(0.5 * f, 0), st, f > 0 ? 0.5 : 0.0));
      frame.push_back(snap(f, 1, Kind::human, Vec2(10, 10), Status::active, 0.0));
      log.frames.push_back(frame);
    }
    logs.push_back(log);
  }

  // episode B: robot 0 collides with the human on step 1, robot 1 times out
  {
    EpisodeLog log;
    log.robot_count = 2;
    log.dt = 0.25;
    for (int f = 0; f <= 2; ++f) {
      std::vector<Snapshot> frame;
      Status st0 = f >= 1 ? Status::collided : Status::active;
      double r0 = f == 1 ? -20.0 : 0.0;
      frame.push_back(snap(f, 0, Kind::robot, Vec2(0.25 * std::min(f, 1), 0), st0, r0));
      frame.push_back(snap(f, 1, Kind::robot, Vec2(100 + 0.25 * f, 0), Status::active,
                           f > 0 ? 0.25 : 0.0));
      frame.push_back(snap(f, 2, Kind::human, Vec2(0.75, 0), Status::active, 0.0));
      log.frames.push_back(frame);
    }
    logs.push_back(log);
  }

  // episode C: robot reaches in 2 steps, intruding on the human during step 1
  {
    EpisodeLog log;
    log.robot_count = 1;
    log.dt = 0.25;
    std::vector<Vec2> human = {Vec2(0.3, 0.7), Vec2(0.3, 0.7), Vec2(5, 5)};
    for (int f = 0; f <= 2; ++f) {
      std::vector<Snapshot> frame;
      Status st = f == 2 ? Status::reached : Status::active;
      frame.push_back(snap(f, 0, Kind::robot, Vec2(0.3 * f, 0), st, f > 0 ? 0.3 : 0.0));
      frame.push_back(snap(f, 1, Kind::human, human[static_cast<std::size_t>(f)], Status::active, 0.0));
      log.frames.push_back(frame);
    }
    logs.push_back(log);
  }

  MetricsReport rep = compute_metrics(logs, 0.25);
  CHECK(rep.episodes == 3);
  CHECK(rep.robots == 4);
  CHECK(rep.success_rate == doctest::Approx(0.5));
  CHECK(rep.collision_rate == doctest::Approx(0.25));
  CHECK(rep.timeout_rate == doctest::Approx(0.25));
  CHECK(rep.intrusion_ratio == doctest::Approx(37.5));
  CHECK(rep.travel_time == doctest::Approx(0.5625));
  CHECK(rep.travel_length == doctest::Approx(0.8375));
  CHECK(rep.mean_reward == doctest::Approx(-4.225));
}

TEST_CASE("all robots reaching goals away from humans scores perfect metrics") {
  EpisodeLog log;
  log.robot_count = 1;
  log.dt = 0.25;
  for (int f = 0; f <= 2; ++f) {
    std::vector<Snapshot> frame;
    Status st = f == 2 ? Status::reached : Status::active;
    frame.push_back(snap(f, 0, Kind::robot, Vec2(0.25 * f, 0), st, 0.25));
    frame.push_back(snap(f, 1, Kind::human, Vec2(20, 20), Status::active, 0.0));
    log.frames.push_back(frame);
  }
  MetricsReport rep = compute_metrics({log}, 0.25);
  CHECK(rep.success_rate == doctest::Approx(1.0));
  CHECK(rep.collision_rate == doctest::Approx(0.0));
  CHECK(rep.intrusion_ratio == doctest::Approx(0.0));
}

TEST_CASE("metrics reject an empty log set") {
  CHECK_THROWS_AS(compute_metrics({}, 0.25), std::invalid_argument);
}

TEST_CASE("episode logs are deterministic and csv round-trips") {
  auto run = [](uint64_t seed) {
    ScenarioSpec spec = desk_spec(4, 2, seed);
    World w = generate_scenario(spec, RngStream(seed));
    CrowdPolicy crowd = make_crowd_policy(spec, w.rng);
    RngStream actions(seed + 1);
    EpisodeLog log;
    log.record_initial(w);
    for (int step = 0; step < 30 && !w.episode_over(150); ++step) {
      std::map<int, Vec2> acts;
      for (int r = 0; r < w.robot_count; ++r) {
        if (w.entities[static_cast<std::size_t>(r)].status == Status::active) {
          acts[r] = Vec2(actions.uniform(-1, 1), actions.uniform(-1, 1));
        }
      }
      StepResult res = step_world(w, acts, crowd, {});
      log.record_step(w, res.rewards);
    }
    return log;
  };
  EpisodeLog a = run(77), b = run(77);
  REQUIRE(a.frames.size() == b.frames.size());
  for (std::size_t f = 0; f < a.frames.size(); ++f) {
    for (std::size_t i = 0; i < a.frames[f].size(); ++i) {
      CHECK(a.frames[f][i].pos == b.frames[f][i].pos);
      CHECK(a.frames[f][i].reward == b.frames[f][i].reward);
    }
  }

  write_episode_csv(a, "episode_roundtrip.csv");
  EpisodeLog back = read_episode_csv("episode_roundtrip.csv");
  REQUIRE(back.frames.size() == a.frames.size());
  CHECK(back.robot_count == a.robot_count);
  for (std::size_t f = 0; f < a.frames.size(); ++f) {
    for (std::size_t i = 0; i < a.frames[f].size(); ++i) {
      CHECK(back.frames[f][i].pos.x() == doctest::Approx(a.frames[f][i].pos.x()));
      CHECK(back.frames[f][i].status == a.frames[f][i].status);
    }
  }
  std::remove("episode_roundtrip.csv");
}
