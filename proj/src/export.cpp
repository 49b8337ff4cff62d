#include "trailmap/export.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "trailmap/errors.hpp"

namespace trailmap {

using nlohmann::json;

void write_png_gray(const std::filesystem::path& path, int width, int height, std::span<const std::uint8_t> pixels) {
  if (pixels.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw ShapeError("png: pixel count does not match " + std::to_string(width) + "x" + std::to_string(height));
  }
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw std::runtime_error("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int row = 0; row < height; ++row) {
    png_write_row(png, pixels.data() + static_cast<std::size_t>(row) * static_cast<std::size_t>(width));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::vector<ChannelImage> write_channel_pngs(const std::filesystem::path& dir, const std::string& stem,
                                             std::span<const double> tensor, int w, int h, int channels) {
  if (tensor.size() != static_cast<std::size_t>(w) * h * channels) throw ShapeError("png export: tensor shape mismatch");
  std::vector<ChannelImage> out;
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(w) * h);
  for (int c = 0; c < channels; ++c) {
    double lo = INFINITY;
    double hi = -INFINITY;
    for (std::size_t cell = 0; cell < static_cast<std::size_t>(w) * h; ++cell) {
      lo = std::min(lo, tensor[cell * channels + c]);
      hi = std::max(hi, tensor[cell * channels + c]);
    }
    const double span = hi - lo;
    for (int ix = 0; ix < w; ++ix) {
      for (int iy = 0; iy < h; ++iy) {
        const double v = tensor[(static_cast<std::size_t>(ix) * h + iy) * channels + c];
        const double t = span > 0.0 ? (v - lo) / span : 0.0;
        pixels[static_cast<std::size_t>(h - 1 - iy) * w + ix] = static_cast<std::uint8_t>(std::lround(t * 255.0));
      }
    }
    ChannelImage img{stem + ".ch" + std::to_string(c) + ".png", lo, hi};
    write_png_gray(dir / img.file, w, h, pixels);
    out.push_back(img);
  }
  return out;
}

json feature_collection(std::span<const ExportLine> lines) {
  json features = json::array();
  for (const auto& l : lines) {
    json coords = json::array();
    for (const Vec2& p : l.points) coords.push_back({p.x, p.y});
    features.push_back({{"type", "Feature"},
                        {"geometry", {{"type", "LineString"}, {"coordinates", coords}}},
                        {"properties", l.properties.is_null() ? json::object() : l.properties}});
  }
  return {{"type", "FeatureCollection"}, {"features", features}};
}

}  // namespace trailmap
