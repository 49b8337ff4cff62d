#include "trailmap/tile_archive.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "trailmap/errors.hpp"

namespace trailmap {

using nlohmann::json;

json grid_spec_to_json(const GridSpec& s) {
  return {{"w_glob", s.w_glob}, {"h_glob", s.h_glob}, {"r", s.r},
          {"n", s.n},           {"origin", {s.origin.x, s.origin.y}}, {"rotation", s.rotation}};
}

GridSpec grid_spec_from_json(const json& j) {
  try {
    GridSpec s;
    s.w_glob = j.at("w_glob").get<double>();
    s.h_glob = j.at("h_glob").get<double>();
    s.r = j.at("r").get<double>();
    s.n = j.at("n").get<int>();
    if (j.contains("origin")) s.origin = {j["origin"].at(0).get<double>(), j["origin"].at(1).get<double>()};
    if (j.contains("rotation")) s.rotation = j["rotation"].get<double>();
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw ParseError(std::string("grid spec: ") + e.what());
  }
}

GridTile ArchivedTile::raw_tile() const {
  GridTile t = GridTile::empty(spec);
  const auto nn = static_cast<std::size_t>(spec.n);
  const std::size_t cells = spec.cells();
  if (raw.size() != cells * (nn + 1)) throw ShapeError("raw tensor size does not match grid spec");
  for (std::size_t c = 0; c < cells; ++c) {
    for (std::size_t j = 0; j < nn; ++j) t.dir[c * nn + j] = raw[c * (nn + 1) + j];
    t.speed[c] = raw[c * (nn + 1) + nn];
  }
  return t;
}

void write_f32(const std::filesystem::path& path, std::span<const double> values) {
  std::vector<char> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(values[i]));
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    std::memcpy(bytes.data() + i * 4, &bits, 4);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::vector<double> read_f32(const std::filesystem::path& path, std::size_t expected_count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StageError("missing tensor file " + path.string() + " (produce it with `trailmap raster`)");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() != expected_count * 4) {
    throw ShapeError(path.string() + ": expected " + std::to_string(expected_count) + " floats, found " +
                     std::to_string(bytes.size() / 4));
  }
  std::vector<double> out(expected_count);
  for (std::size_t i = 0; i < expected_count; ++i) {
    std::uint32_t bits = 0;
    std::memcpy(&bits, bytes.data() + i * 4, 4);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

void write_archived_tile(const std::filesystem::path& dir, const ArchivedTile& tile, const json& provenance) {
  std::filesystem::create_directories(dir);
  write_f32(dir / (tile.tile_id + ".grid.f32"), tile.grid);
  write_f32(dir / (tile.tile_id + ".raw.f32"), tile.raw);

  json channels = json::array();
  for (int j = 1; j <= tile.spec.n; ++j) channels.push_back("dir_" + std::to_string(j));
  channels.push_back("speed");
  json meta = {
      {"version", 1},
      {"tile_id", tile.tile_id},
      {"kind", tile.kind},
      {"grid_spec", grid_spec_to_json(tile.spec)},
      {"shape", {tile.spec.w_grid(), tile.spec.h_grid(), tile.spec.n + 1}},
      {"layout", "row-major [w_grid][h_grid][channel], little-endian float32"},
      {"channels", channels},
      {"sigma", tile.sigma},
      {"files", {{"grid", tile.tile_id + ".grid.f32"}, {"raw", tile.tile_id + ".raw.f32"}}},
      {"trail_ids", tile.trail_ids},
      {"augmentation", tile.augmentation},
      {"provenance", provenance},
  };
  std::ofstream out(dir / (tile.tile_id + ".json"), std::ios::binary);
  out << meta.dump(2) << '\n';
}

ArchivedTile read_archived_tile(const std::filesystem::path& dir, const std::string& tile_id, bool load_tensors) {
  const auto meta_path = dir / (tile_id + ".json");
  std::ifstream in(meta_path);
  if (!in) throw StageError("missing tile sidecar " + meta_path.string() + " (produce it with `trailmap raster`)");
  json meta;
  try {
    meta = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(meta_path.string() + ": " + e.what());
  }
  if (meta.value("version", 0) != 1) throw StageError(meta_path.string() + ": unsupported tile version");
  if (!meta.contains("grid_spec")) throw StageError(meta_path.string() + ": missing grid_spec");
  ArchivedTile t;
  t.tile_id = tile_id;
  t.kind = meta.value("kind", "fixed");
  t.spec = grid_spec_from_json(meta["grid_spec"]);
  t.sigma = meta.value("sigma", 0.0);
  t.trail_ids = meta.value("trail_ids", std::vector<std::string>{});
  t.augmentation = meta.value("augmentation", json());
  if (load_tensors) {
    const std::size_t count = t.spec.cells() * static_cast<std::size_t>(t.spec.n + 1);
    t.grid = read_f32(dir / (tile_id + ".grid.f32"), count);
    t.raw = read_f32(dir / (tile_id + ".raw.f32"), count);
  }
  return t;
}

}  // namespace trailmap
