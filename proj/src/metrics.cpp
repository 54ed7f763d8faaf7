#include "multisoc/sim/metrics.hpp"

#include <cmath>
#include <sstream>

namespace multisoc {

void EpisodeLog::record_initial(const World& w) {
  robot_count = w.robot_count;
  dt = w.dt;
  frames.clear();
  record_step(w, {});
}

void EpisodeLog::record_step(const World& w, const std::map<int, double>& rewards) {
  std::vector<Snapshot> frame;
  frame.reserve(w.entities.size());
  for (const auto& e : w.entities) {
    Snapshot s;
    s.t = static_cast<int>(frames.size());
    s.entity_id = e.id;
    s.kind = e.kind;
    s.pos = e.pos;
    s.vel = e.vel;
    s.status = e.status;
    s.goal_dist = e.goal_dist();
    s.radius = e.radius;
    auto it = rewards.find(e.id);
    s.reward = it != rewards.end() ? it->second : 0.0;
    frame.push_back(s);
  }
  frames.push_back(std::move(frame));
}

MetricsReport compute_metrics(const std::vector<EpisodeLog>& logs, double discomfort_dist) {
  if (logs.empty()) {
    throw std::invalid_argument("compute_metrics: no episodes");
  }
  MetricsReport rep;
  double intrusion_sum = 0.0;
  int intrusion_robots = 0;
  double time_sum = 0.0, length_sum = 0.0, reward_sum = 0.0;
  int robots_total = 0;

  for (const auto& log : logs) {
    ++rep.episodes;
    const int n_frames = static_cast<int>(log.frames.size());
    for (int r = 0; r < log.robot_count; ++r) {
      ++robots_total;
      // terminal frame: first frame with a non-active status, else the last
      int term = n_frames - 1;
      Status final_status = Status::active;
      for (int f = 0; f < n_frames; ++f) {
        const Snapshot& s = log.frames[static_cast<std::size_t>(f)][static_cast<std::size_t>(r)];
        if (s.status != Status::active) {
          term = f;
          final_status = s.status;
          break;
        }
      }
      if (final_status == Status::reached) rep.success_rate += 1.0;
      if (final_status == Status::collided) rep.collision_rate += 1.0;

      // travel time and path length until the terminal frame (or episode end)
      time_sum += log.dt * term;
      double length = 0.0;
      double cum_reward = 0.0;
      int active_steps = 0, close_steps = 0;
      for (int f = 1; f < n_frames; ++f) {
        const auto& frame = log.frames[static_cast<std::size_t>(f)];
        const auto& prev = log.frames[static_cast<std::size_t>(f - 1)];
        const Snapshot& s = frame[static_cast<std::size_t>(r)];
        cum_reward += s.reward;
        if (f <= term) {
          length += (s.pos - prev[static_cast<std::size_t>(r)].pos).norm();
        }
        // robot counted active during step f when it had not terminated before
        if (prev[static_cast<std::size_t>(r)].status == Status::active) {
          ++active_steps;
          for (std::size_t k = static_cast<std::size_t>(log.robot_count); k < frame.size(); ++k) {
            const Snapshot& h = frame[k];
            if ((s.pos - h.pos).norm() < s.radius + h.radius + discomfort_dist) {
              ++close_steps;
              break;
            }
          }
        }
      }
      length_sum += length;
      reward_sum += cum_reward;
      if (active_steps > 0) {
        intrusion_sum += static_cast<double>(close_steps) / active_steps;
      }
      ++intrusion_robots;
    }
  }

  rep.robots = robots_total;
  rep.success_rate /= robots_total;
  rep.collision_rate /= robots_total;
  rep.timeout_rate = 1.0 - rep.success_rate - rep.collision_rate;
  rep.intrusion_ratio = 100.0 * intrusion_sum / std::max(intrusion_robots, 1);
  rep.travel_time = time_sum / robots_total;
  rep.travel_length = length_sum / robots_total;
  rep.mean_reward = reward_sum / robots_total;
  return rep;
}

std::string MetricsReport::table() const {
  std::ostringstream os;
  os << "Success  Collision  Intrusion  TravelTime  TravelLength  Reward\n";
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-8.3f %-10.3f %-10.2f %-11.2f %-13.2f %-7.2f",
                success_rate, collision_rate, intrusion_ratio, travel_time, travel_length,
                mean_reward);
  os << buf;
  return os.str();
}

}  // namespace multisoc
