#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "trailmap/geometry.hpp"

namespace trailmap {

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double t = 0.0;
  std::optional<double> speed;

  Vec2 xy() const { return {x, y}; }
};

enum class TrailSource { kEgo, kObject };

struct Trail {
  std::string id;
  TrailSource source = TrailSource::kEgo;
  double width_m = 0.0;
  std::vector<Pose> poses;
};

struct TrailSegment {
  Pose a;
  Pose b;
  double yaw = 0.0;  // heading of b - a, (-pi, pi]
  double speed = 0.0;
  double width_m = 0.0;
};

// Sidecar record declaring the planar frame the poses live in.
struct FrameMetadata {
  std::string frame_id = "local";
  std::optional<double> origin_lat;
  std::optional<double> origin_lon;
};

enum class TrailFormat { kJsonLines };

struct RejectedRecord {
  std::size_t line = 0;
  std::string trail_id;
  std::string reason;
};

struct TrailFile {
  FrameMetadata frame;
  std::vector<Trail> trails;
  std::vector<RejectedRecord> rejected;
};

std::string to_string(TrailSource s);
TrailSource trail_source_from_string(const std::string& s);

// Throws ValidationError naming the trail id on the first violated invariant.
void validate_trail(const Trail& trail);

// Reads `path` (one trail per line) plus the optional `<path>.meta.json`
// sidecar. Malformed lines throw ParseError with the line number. Trails that
// parse but break an invariant are collected in `rejected`, or thrown as a
// ValidationError when `strict` is set.
TrailFile load_trails(const std::filesystem::path& path, TrailFormat format = TrailFormat::kJsonLines,
                      bool strict = false);

// Parses one record; `line` is used in diagnostics only.
Trail parse_trail_record(const std::string& text, std::size_t line);
std::string format_trail_record(const Trail& trail);

void save_trails(const std::filesystem::path& path, const std::vector<Trail>& trails,
                 const FrameMetadata& frame = {});

std::filesystem::path frame_sidecar_path(const std::filesystem::path& trails_path);

// p - 1 segments for a valid trail. Segments whose duration is zero and that
// need a derived speed are dropped with a warning on stderr.
std::vector<TrailSegment> segments(const Trail& trail);

}  // namespace trailmap
