#include "multisoc/sim/human_policy.hpp"

#include <cmath>
#include <limits>

namespace multisoc {

namespace {

constexpr double kEps = 1e-10;

double det(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

struct Line {
  Vec2 point;
  Vec2 direction;
};

// Project onto one constraint line, keeping the circle bound and all earlier
// lines. Returns false when the subproblem is infeasible.
bool linear_program1(const std::vector<Line>& lines, std::size_t line_no, double max_speed,
                     const Vec2& opt_v, bool direction_opt, Vec2& result) {
  const Line& ln = lines[line_no];
  const double dot = ln.point.dot(ln.direction);
  const double discriminant = dot * dot + max_speed * max_speed - ln.point.squaredNorm();
  if (discriminant < 0.0) {
    return false;  // line misses the speed circle
  }
  const double sqrt_disc = std::sqrt(discriminant);
  double t_left = -dot - sqrt_disc;
  double t_right = -dot + sqrt_disc;

  for (std::size_t i = 0; i < line_no; ++i) {
    const double denominator = det(ln.direction, lines[i].direction);
    const double numerator = det(lines[i].direction, ln.point - lines[i].point);
    if (std::abs(denominator) <= kEps) {
      if (numerator < 0.0) return false;  // parallel and fully outside
      continue;
    }
    const double t = numerator / denominator;
    if (denominator >= 0.0) {
      t_right = std::min(t_right, t);
    } else {
      t_left = std::max(t_left, t);
    }
    if (t_left > t_right) return false;
  }

  if (direction_opt) {
    result = ln.point + (opt_v.dot(ln.direction) > 0.0 ? t_right : t_left) * ln.direction;
  } else {
    const double t = ln.direction.dot(opt_v - ln.point);
    result = ln.point + std::clamp(t, t_left, t_right) * ln.direction;
  }
  return true;
}

// Incremental 2D linear program over half-planes inside the speed circle.
// Returns the index of the first failing line, or lines.size() on success.
std::size_t linear_program2(const std::vector<Line>& lines, double max_speed, const Vec2& opt_v,
                            bool direction_opt, Vec2& result) {
  if (direction_opt) {
    result = opt_v * max_speed;
  } else if (opt_v.squaredNorm() > max_speed * max_speed) {
    result = opt_v.normalized() * max_speed;
  } else {
    result = opt_v;
  }
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (det(lines[i].direction, lines[i].point - result) > 0.0) {
      const Vec2 saved = result;
      if (!linear_program1(lines, i, max_speed, opt_v, direction_opt, result)) {
        result = saved;
        return i;
      }
    }
  }
  return lines.size();
}

// Infeasible case: march through the violated constraints minimising the
// maximum penetration distance.
void linear_program3(const std::vector<Line>& lines, std::size_t begin_line, double max_speed,
                     Vec2& result) {
  double distance = 0.0;
  for (std::size_t i = begin_line; i < lines.size(); ++i) {
    if (det(lines[i].direction, lines[i].point - result) <= distance) continue;
    std::vector<Line> proj_lines;
    proj_lines.reserve(i);
    for (std::size_t j = 0; j < i; ++j) {
      Line new_line;
      const double denominator = det(lines[i].direction, lines[j].direction);
      if (std::abs(denominator) <= kEps) {
        if (lines[i].direction.dot(lines[j].direction) > 0.0) continue;  // same direction
        new_line.point = 0.5 * (lines[i].point + lines[j].point);
      } else {
        new_line.point = lines[i].point +
                         (det(lines[j].direction, lines[i].point - lines[j].point) / denominator) *
                             lines[i].direction;
      }
      new_line.direction = (lines[j].direction - lines[i].direction).normalized();
      proj_lines.push_back(new_line);
    }
    const Vec2 saved = result;
    if (linear_program2(proj_lines, max_speed,
                        Vec2(-lines[i].direction.y(), lines[i].direction.x()), true,
                        result) < proj_lines.size()) {
      result = saved;  // only possible through rounding; keep last feasible point
    }
    distance = det(lines[i].direction, lines[i].point - result);
  }
}

}  // namespace

Vec2 preferred_velocity(const EntityState& self, double dt) {
  const Vec2 to_goal = self.goal - self.pos;
  const double dist = to_goal.norm();
  if (dist < kEps) return Vec2::Zero();
  const double speed = std::min(self.pref_speed, dist / dt);
  return to_goal / dist * speed;
}

Vec2 orca_velocity(const EntityState& self, const std::vector<const EntityState*>& neighbors,
                   const OrcaParams& params) {
  const double inv_horizon = 1.0 / params.time_horizon;
  std::vector<Line> lines;
  lines.reserve(neighbors.size());

  for (const EntityState* other : neighbors) {
    const Vec2 rel_pos = other->pos - self.pos;
    if (rel_pos.squaredNorm() > params.neighbor_dist * params.neighbor_dist) continue;
    const Vec2 rel_vel = self.vel - other->vel;
    const double dist_sq = rel_pos.squaredNorm();
    const double combined_r = self.radius + other->radius;
    const double combined_r_sq = combined_r * combined_r;

    Line line;
    Vec2 u;
    if (dist_sq > combined_r_sq) {
      const Vec2 w = rel_vel - inv_horizon * rel_pos;  // from cutoff center
      const double w_len_sq = w.squaredNorm();
      const double dot1 = w.dot(rel_pos);
      if (dot1 < 0.0 && dot1 * dot1 > combined_r_sq * w_len_sq) {
        // project on the cutoff circle
        const double w_len = std::sqrt(w_len_sq);
        const Vec2 unit_w = w / w_len;
        line.direction = Vec2(unit_w.y(), -unit_w.x());
        u = (combined_r * inv_horizon - w_len) * unit_w;
      } else {
        // project on the nearer leg
        const double leg = std::sqrt(dist_sq - combined_r_sq);
        if (det(rel_pos, w) > 0.0) {
          line.direction = Vec2(rel_pos.x() * leg - rel_pos.y() * combined_r,
                                rel_pos.x() * combined_r + rel_pos.y() * leg) /
                           dist_sq;
        } else {
          line.direction = -Vec2(rel_pos.x() * leg + rel_pos.y() * combined_r,
                                 -rel_pos.x() * combined_r + rel_pos.y() * leg) /
                           dist_sq;
        }
        const double dot2 = rel_vel.dot(line.direction);
        u = dot2 * line.direction - rel_vel;
      }
    } else {
      // already overlapping: resolve within one timestep
      const double inv_step = 1.0 / params.dt;
      const Vec2 w = rel_vel - inv_step * rel_pos;
      const double w_len = w.norm();
      Vec2 unit_w;
      if (w_len > kEps) {
        unit_w = w / w_len;
      } else if (rel_pos.norm() > kEps) {
        unit_w = -rel_pos.normalized();
      } else {
        unit_w = Vec2(1.0, 0.0);
      }
      line.direction = Vec2(unit_w.y(), -unit_w.x());
      u = (combined_r * inv_step - w_len) * unit_w;
    }
    line.point = self.vel + 0.5 * u;  // reciprocity: each side takes half
    lines.push_back(line);
  }

  const Vec2 pref = preferred_velocity(self, params.dt);
  Vec2 result;
  const std::size_t fail = linear_program2(lines, self.pref_speed, pref, false, result);
  if (fail < lines.size()) {
    linear_program3(lines, fail, self.pref_speed, result);
  }
  return result;
}

Vec2 social_force_velocity(const EntityState& self,
                           const std::vector<const EntityState*>& neighbors,
                           const SocialForceParams& params) {
  const Vec2 desired = preferred_velocity(self, params.dt);
  Vec2 force = (desired - self.vel) / params.relaxation_time;
  for (const EntityState* other : neighbors) {
    const Vec2 away = self.pos - other->pos;
    const double d = away.norm();
    const double r_sum = self.radius + other->radius;
    const double magnitude =
        params.repulsion_strength * std::exp((r_sum - d) / params.repulsion_range);
    const Vec2 direction = d > kEps ? Vec2(away / d) : Vec2(1.0, 0.0);
    force += magnitude * direction;
  }
  Vec2 vel = self.vel + force * params.dt;
  const double speed = vel.norm();
  if (speed > self.pref_speed) {
    vel *= self.pref_speed / speed;
  }
  return vel;
}

}  // namespace multisoc
