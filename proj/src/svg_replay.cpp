#include "multisoc/io/svg_replay.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace multisoc {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string point_pair(const Vec2& p) { return fmt(p.x()) + "," + fmt(p.y()); }

double heading_of(const Snapshot& s) {
  if (s.vel.norm() > 1e-9) return std::atan2(s.vel.y(), s.vel.x());
  return 0.0;
}

bool robot_sees(const Snapshot& robot, const Snapshot& target, const ReplayStyle& style) {
  if (robot.entity_id == target.entity_id) return true;
  const Vec2 d = target.pos - robot.pos;
  if (d.norm() > style.sensor_range) return false;
  if (style.fov_deg >= 360.0 - 1e-9) return true;
  double ang = std::atan2(d.y(), d.x()) - heading_of(robot);
  while (ang > M_PI) ang -= 2 * M_PI;
  while (ang < -M_PI) ang += 2 * M_PI;
  return std::abs(ang) <= style.fov_deg * M_PI / 360.0;
}

std::string star_points(const Vec2& center, double r, const SvgMapper& map) {
  std::string pts;
  for (int k = 0; k < 10; ++k) {
    const double ang = -M_PI / 2 + k * M_PI / 5;
    const double rad = (k % 2 == 0) ? r : 0.45 * r;
    Vec2 world(center.x() + rad * std::cos(ang), center.y() + rad * std::sin(ang));
    if (!pts.empty()) pts += " ";
    pts += point_pair(map.to_svg(world));
  }
  return pts;
}

}  // namespace

SvgMapper SvgMapper::fit(const EpisodeLog& log, const ReplayStyle& style) {
  SvgMapper m;
  m.scale = style.px_per_meter;
  m.margin = style.margin_m;
  bool first = true;
  for (const auto& frame : log.frames) {
    for (const auto& s : frame) {
      if (first) {
        m.min_x = m.max_x = s.pos.x();
        m.min_y = m.max_y = s.pos.y();
        first = false;
      }
      m.min_x = std::min(m.min_x, s.pos.x());
      m.max_x = std::max(m.max_x, s.pos.x());
      m.min_y = std::min(m.min_y, s.pos.y());
      m.max_y = std::max(m.max_y, s.pos.y());
    }
  }
  return m;
}

std::string render_episode_svg(const EpisodeLog& log, const ReplayStyle& style) {
  SvgMapper map = SvgMapper::fit(log, style);
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(map.width())
      << "\" height=\"" << fmt(map.height()) << "\" viewBox=\"0 0 " << fmt(map.width()) << " "
      << fmt(map.height()) << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (log.frames.empty() || log.frames.front().empty()) {
    svg << "</svg>\n";
    return svg.str();
  }

  const auto& last = log.frames.back();
  const int n = static_cast<int>(last.size());

  // visibility at the final frame: inside any robot's cone
  std::vector<bool> in_view(static_cast<std::size_t>(n), false);
  for (int r = 0; r < n; ++r) {
    if (last[static_cast<std::size_t>(r)].kind != Kind::robot) continue;
    for (int k = 0; k < n; ++k) {
      if (robot_sees(last[static_cast<std::size_t>(r)], last[static_cast<std::size_t>(k)], style)) {
        in_view[static_cast<std::size_t>(k)] = true;
      }
    }
  }

  const int frames = static_cast<int>(log.frames.size());
  const int chunks = std::min(4, std::max(1, frames - 1));
  for (int i = 0; i < n; ++i) {
    const Snapshot& s = last[static_cast<std::size_t>(i)];
    const bool robot = s.kind == Kind::robot;
    const std::string color = robot ? "green" : (in_view[static_cast<std::size_t>(i)] ? "orange" : "black");
    svg << "<g class=\"entity\" id=\"entity-" << s.entity_id << "\">\n";

    // fading trail, oldest chunk faintest
    if (frames > 1) {
      const int seg_count = frames - 1;
      int seg0 = 0;
      for (int c = 0; c < chunks; ++c) {
        const int seg1 = (c == chunks - 1) ? seg_count : (seg_count * (c + 1)) / chunks;
        if (seg1 <= seg0) continue;
        const double opacity = 0.2 + 0.6 * (c + 1) / chunks;
        svg << "<polyline class=\"trail\" fill=\"none\" stroke=\"" << color
            << "\" stroke-opacity=\"" << fmt(opacity) << "\" points=\"";
        for (int f = seg0; f <= seg1; ++f) {
          if (f > seg0) svg << " ";
          svg << point_pair(map.to_svg(log.frames[static_cast<std::size_t>(f)][static_cast<std::size_t>(i)].pos));
        }
        svg << "\"/>\n";
        seg0 = seg1;
      }
    }

    if (robot) {
      // dashed sensor circle and dashed line to the goal star (the episode
      // trace carries no goal, so the ending position stands in for it)
      const Vec2 c = map.to_svg(s.pos);
      svg << "<circle class=\"fov\" cx=\"" << fmt(c.x()) << "\" cy=\"" << fmt(c.y()) << "\" r=\""
          << fmt(style.sensor_range * map.scale)
          << "\" fill=\"none\" stroke=\"green\" stroke-dasharray=\"6,6\" stroke-opacity=\"0.6\"/>\n";
      const Vec2 start = map.to_svg(log.frames.front()[static_cast<std::size_t>(i)].pos);
      svg << "<line class=\"goal-line\" x1=\"" << fmt(start.x()) << "\" y1=\"" << fmt(start.y())
          << "\" x2=\"" << fmt(c.x()) << "\" y2=\"" << fmt(c.y())
          << "\" stroke=\"blue\" stroke-dasharray=\"4,4\" stroke-opacity=\"0.5\"/>\n";
      svg << "<polygon class=\"goal-star\" fill=\"red\" points=\"" << star_points(s.pos, 0.35, map)
          << "\"/>\n";
    }

    // predicted poses for entities inside some robot's view
    if (in_view[static_cast<std::size_t>(i)]) {
      for (int k = 1; k <= 5; ++k) {
        const Vec2 pred = s.pos + static_cast<double>(k) * s.vel * style.dt;
        const Vec2 c = map.to_svg(pred);
        svg << "<circle class=\"pred\" cx=\"" << fmt(c.x()) << "\" cy=\"" << fmt(c.y())
            << "\" r=\"" << fmt(s.radius * map.scale) << "\" fill=\"none\" stroke=\"" << color
            << "\" stroke-opacity=\"" << fmt(0.5 - 0.07 * k) << "\"/>\n";
      }
    }

    // body
    const Vec2 c = map.to_svg(s.pos);
    svg << "<circle class=\"body\" cx=\"" << fmt(c.x()) << "\" cy=\"" << fmt(c.y()) << "\" r=\""
        << fmt(s.radius * map.scale) << "\" fill=\"" << color << "\"/>\n";
    svg << "</g>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

void write_episode_svg(const EpisodeLog& log, const ReplayStyle& style, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot open " + path + " for writing");
  }
  out << render_episode_svg(log, style);
}

}  // namespace multisoc
