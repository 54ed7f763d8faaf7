#pragma once

#include "multisoc/sim/metrics.hpp"

#include <string>

namespace multisoc {

// Rendering options for episode replays. The CSV schema carries no world
// parameters, so FoV and prediction settings come in as flags with the
// simulator defaults.
struct ReplayStyle {
  double fov_deg = 360.0;
  double sensor_range = 5.0;
  double dt = 0.25;
  double px_per_meter = 50.0;
  double margin_m = 1.5;
};

// World-to-canvas mapping: fitted to the episode bounds, y flipped.
struct SvgMapper {
  double min_x = -1, min_y = -1, max_x = 1, max_y = 1;
  double scale = 50.0;
  double margin = 1.5;

  static SvgMapper fit(const EpisodeLog& log, const ReplayStyle& style);
  double width() const { return (max_x - min_x + 2 * margin) * scale; }
  double height() const { return (max_y - min_y + 2 * margin) * scale; }
  Vec2 to_svg(const Vec2& world) const {
    return Vec2((world.x() - min_x + margin) * scale, (max_y - world.y() + margin) * scale);
  }
};

// Trajectory plot of one episode: robots green with a dashed FoV circle and a
// dashed line to a red goal star, humans orange when inside some robot's FoV
// and black otherwise, trails fading over time, five predicted poses per
// visible entity. An empty episode yields an empty canvas.
std::string render_episode_svg(const EpisodeLog& log, const ReplayStyle& style);

void write_episode_svg(const EpisodeLog& log, const ReplayStyle& style, const std::string& path);

}  // namespace multisoc
