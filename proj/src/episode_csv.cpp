#include "multisoc/sim/metrics.hpp"

#include <fstream>
#include <sstream>

namespace multisoc {

namespace {

Status status_from(const std::string& s, int line) {
  if (s == "active") return Status::active;
  if (s == "reached") return Status::reached;
  if (s == "collided") return Status::collided;
  throw std::runtime_error("episode csv line " + std::to_string(line) + ": bad status '" + s + "'");
}

Kind kind_from(const std::string& s, int line) {
  if (s == "robot") return Kind::robot;
  if (s == "human") return Kind::human;
  throw std::runtime_error("episode csv line " + std::to_string(line) + ": bad kind '" + s + "'");
}

}  // namespace

void write_episode_csv(const EpisodeLog& log, std::ostream& out) {
  out << "t,entity_id,kind,x,y,vx,vy,status,reward\n";
  char buf[256];
  for (const auto& frame : log.frames) {
    for (const auto& s : frame) {
      std::snprintf(buf, sizeof(buf), "%d,%d,%s,%.9g,%.9g,%.9g,%.9g,%s,%.9g\n", s.t, s.entity_id,
                    to_string(s.kind), s.pos.x(), s.pos.y(), s.vel.x(), s.vel.y(),
                    to_string(s.status), s.reward);
      out << buf;
    }
  }
}

void write_episode_csv(const EpisodeLog& log, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot open " + path + " for writing");
  }
  write_episode_csv(log, out);
}

EpisodeLog read_episode_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open episode csv " + path);
  }
  EpisodeLog log;
  std::string line;
  int lineno = 0;
  std::map<int, std::vector<Snapshot>> by_t;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1) {
      if (line.rfind("t,entity_id,kind", 0) != 0) {
        throw std::runtime_error("episode csv line 1: unexpected header '" + line + "'");
      }
      continue;
    }
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 9) {
      throw std::runtime_error("episode csv line " + std::to_string(lineno) + ": expected 9 fields, got " +
                               std::to_string(fields.size()));
    }
    Snapshot s;
    try {
      s.t = std::stoi(fields[0]);
      s.entity_id = std::stoi(fields[1]);
      s.kind = kind_from(fields[2], lineno);
      s.pos = Vec2(std::stod(fields[3]), std::stod(fields[4]));
      s.vel = Vec2(std::stod(fields[5]), std::stod(fields[6]));
      s.status = status_from(fields[7], lineno);
      s.reward = std::stod(fields[8]);
    } catch (const std::invalid_argument&) {
      throw std::runtime_error("episode csv line " + std::to_string(lineno) + ": malformed number");
    }
    by_t[s.t].push_back(s);
  }
  for (auto& [t, frame] : by_t) {
    int robots = 0;
    for (const auto& s : frame) {
      if (s.kind == Kind::robot) ++robots;
    }
    log.robot_count = std::max(log.robot_count, robots);
    log.frames.push_back(std::move(frame));
  }
  return log;
}

}  // namespace multisoc
