#include "trailmap/trails.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "trailmap/errors.hpp"

namespace trailmap {

using nlohmann::json;

std::string to_string(TrailSource s) { return s == TrailSource::kEgo ? "ego" : "object"; }

TrailSource trail_source_from_string(const std::string& s) {
  if (s == "ego") return TrailSource::kEgo;
  if (s == "object") return TrailSource::kObject;
  throw ParseError("unknown trail source '" + s + "'");
}

void validate_trail(const Trail& trail) {
  auto fail = [&](const std::string& why) { throw ValidationError("trail '" + trail.id + "': " + why); };
  if (!(trail.width_m > 0.0) || !std::isfinite(trail.width_m)) fail("width_m must be > 0");
  if (trail.poses.size() < 2) fail("needs at least 2 poses");
  for (std::size_t i = 0; i < trail.poses.size(); ++i) {
    const Pose& p = trail.poses[i];
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.t)) {
      fail("pose " + std::to_string(i) + " is not finite");
    }
    if (p.speed && !(*p.speed >= 0.0 && std::isfinite(*p.speed))) {
      fail("pose " + std::to_string(i) + " has negative or non-finite speed");
    }
    if (i == 0) continue;
    const Pose& q = trail.poses[i - 1];
    if (!(p.t > q.t)) fail("timestamps not strictly increasing at pose " + std::to_string(i));
    if (p.x == q.x && p.y == q.y) fail("poses " + std::to_string(i - 1) + " and " + std::to_string(i) + " coincide");
  }
}

Trail parse_trail_record(const std::string& text, std::size_t line) {
  const std::string where = "line " + std::to_string(line) + ": ";
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(where + e.what());
  }
  try {
    Trail t;
    t.id = j.at("id").get<std::string>();
    t.source = trail_source_from_string(j.at("source").get<std::string>());
    t.width_m = j.at("width_m").get<double>();
    for (const auto& p : j.at("points")) {
      Pose pose;
      pose.x = p.at("x").get<double>();
      pose.y = p.at("y").get<double>();
      pose.t = p.at("t").get<double>();
      if (auto it = p.find("speed"); it != p.end() && !it->is_null()) pose.speed = it->get<double>();
      t.poses.push_back(pose);
    }
    return t;
  } catch (const json::exception& e) {
    throw ParseError(where + e.what());
  } catch (const ParseError& e) {
    throw ParseError(where + e.what());
  }
}

std::string format_trail_record(const Trail& trail) {
  json pts = json::array();
  for (const auto& p : trail.poses) {
    json jp = {{"x", p.x}, {"y", p.y}, {"t", p.t}};
    if (p.speed) jp["speed"] = *p.speed;
    pts.push_back(std::move(jp));
  }
  json j = {{"id", trail.id}, {"source", to_string(trail.source)}, {"width_m", trail.width_m}, {"points", pts}};
  return j.dump();
}

std::filesystem::path frame_sidecar_path(const std::filesystem::path& trails_path) {
  return trails_path.string() + ".meta.json";
}

TrailFile load_trails(const std::filesystem::path& path, TrailFormat format, bool strict) {
  if (format != TrailFormat::kJsonLines) throw ParseError("unsupported trail format");
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open trail file " + path.string());

  TrailFile out;
  if (const auto side = frame_sidecar_path(path); std::filesystem::exists(side)) {
    std::ifstream sin(side);
    try {
      const json m = json::parse(sin);
      out.frame.frame_id = m.at("frame_id").get<std::string>();
      if (m.contains("origin_lat") && !m["origin_lat"].is_null()) out.frame.origin_lat = m["origin_lat"].get<double>();
      if (m.contains("origin_lon") && !m["origin_lon"].is_null()) out.frame.origin_lon = m["origin_lon"].get<double>();
    } catch (const json::exception& e) {
      throw ParseError(side.string() + ": " + e.what());
    }
  }

  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    Trail t = parse_trail_record(text, line);
    try {
      validate_trail(t);
    } catch (const ValidationError& e) {
      if (strict) throw ValidationError("line " + std::to_string(line) + ": " + e.what());
      out.rejected.push_back({line, t.id, e.what()});
      continue;
    }
    out.trails.push_back(std::move(t));
  }
  return out;
}

void save_trails(const std::filesystem::path& path, const std::vector<Trail>& trails, const FrameMetadata& frame) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& t : trails) out << format_trail_record(t) << '\n';

  json m = {{"frame_id", frame.frame_id}};
  if (frame.origin_lat) m["origin_lat"] = *frame.origin_lat;
  if (frame.origin_lon) m["origin_lon"] = *frame.origin_lon;
  std::ofstream side(frame_sidecar_path(path), std::ios::binary);
  side << m.dump(2) << '\n';
}

std::vector<TrailSegment> segments(const Trail& trail) {
  std::vector<TrailSegment> out;
  out.reserve(trail.poses.size() > 0 ? trail.poses.size() - 1 : 0);
  for (std::size_t i = 1; i < trail.poses.size(); ++i) {
    const Pose& a = trail.poses[i - 1];
    const Pose& b = trail.poses[i];
    TrailSegment s{a, b, heading(a.xy(), b.xy()), 0.0, trail.width_m};
    if (a.speed) {
      s.speed = *a.speed;
    } else {
      const double dt = b.t - a.t;
      if (!(dt > 0.0)) {
        std::cerr << "warning: trail '" << trail.id << "' segment " << (i - 1)
                  << " has zero duration; dropped\n";
        continue;
      }
      s.speed = distance(a.xy(), b.xy()) / dt;
    }
    out.push_back(s);
  }
  return out;
}

}  // namespace trailmap
