#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <png.h>

#include <nlohmann/json.hpp>

#include "taskgrasp/error.hpp"
#include "taskgrasp/geometry.hpp"

namespace taskgrasp
{

struct Rgb
{
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  bool operator==(const Rgb&) const = default;
};

struct RgbImage
{
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // row-major, 3 bytes per pixel

  RgbImage() = default;
  RgbImage(int w, int h, Rgb fill = {})
    : width(w), height(h), data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3)
  {
    for (std::size_t i = 0; i < data.size(); i += 3)
    {
      data[i] = fill.r;
      data[i + 1] = fill.g;
      data[i + 2] = fill.b;
    }
  }

  bool contains(int u, int v) const { return u >= 0 && v >= 0 && u < width && v < height; }

  Rgb at(int u, int v) const
  {
    const std::size_t i = (static_cast<std::size_t>(v) * width + u) * 3;
    return {data[i], data[i + 1], data[i + 2]};
  }

  void set(int u, int v, Rgb c)
  {
    const std::size_t i = (static_cast<std::size_t>(v) * width + u) * 3;
    data[i] = c.r;
    data[i + 1] = c.g;
    data[i + 2] = c.b;
  }

  std::size_t count(Rgb c) const
  {
    std::size_t n = 0;
    for (std::size_t i = 0; i < data.size(); i += 3)
      n += (data[i] == c.r && data[i + 1] == c.g && data[i + 2] == c.b);
    return n;
  }

  bool operator==(const RgbImage&) const = default;
};

// FNV-1a over dimensions and pixel bytes; used for audit records and golden files.
inline std::string image_hash(const RgbImage& img)
{
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::uint8_t byte) {
    h ^= byte;
    h *= 1099511628211ULL;
  };
  for (int dim : {img.width, img.height})
    for (int s = 0; s < 32; s += 8)
      mix(static_cast<std::uint8_t>((static_cast<std::uint32_t>(dim) >> s) & 0xff));
  for (auto b : img.data)
    mix(b);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace detail
{
struct FileCloser
{
  void operator()(std::FILE* f) const
  {
    if (f)
      std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// Encodes to an in-memory PNG byte string.
inline std::string encode_png_raw(int width, int height, int color_type, int bit_depth,
                                  const std::vector<std::uint8_t>& bytes, std::size_t row_bytes)
{
  std::string sink;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info)
  {
    png_destroy_write_struct(&png, &info);
    fail(ErrorKind::IoError, "libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png)))
  {
    png_destroy_write_struct(&png, &info);
    fail(ErrorKind::IoError, "libpng failed to encode image");
  }
  png_set_write_fn(
      png, &sink,
      [](png_structp p, png_bytep data, png_size_t len) {
        static_cast<std::string*>(png_get_io_ptr(p))->append(reinterpret_cast<const char*>(data), len);
      },
      [](png_structp) {});
  png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16)
    png_set_swap(png);  // rows are supplied little-endian
  for (int y = 0; y < height; ++y)
    png_write_row(png, const_cast<png_bytep>(bytes.data() + static_cast<std::size_t>(y) * row_bytes));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return sink;
}

inline void write_png_raw(const std::string& path, int width, int height, int color_type, int bit_depth,
                          const std::vector<std::uint8_t>& bytes, std::size_t row_bytes)
{
  const std::string encoded = encode_png_raw(width, height, color_type, bit_depth, bytes, row_bytes);
  std::ofstream out(path, std::ios::binary);
  out.write(encoded.data(), static_cast<std::streamsize>(encoded.size()));
  if (!out)
    fail(ErrorKind::IoError, "cannot write " + path);
}

struct PngData
{
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 0;
  std::vector<std::uint8_t> bytes;  // 16-bit samples little-endian
};

inline PngData read_png_raw(const std::string& path)
{
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp)
    fail(ErrorKind::IoError, "cannot read " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info)
  {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorKind::IoError, "libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png)))
  {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorKind::ParseError, path + ": not a readable PNG");
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const int color_type = png_get_color_type(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE)
    png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS))
    png_set_strip_alpha(png);
  if (color_type & PNG_COLOR_MASK_ALPHA)
    png_set_strip_alpha(png);
  if (png_get_bit_depth(png, info) == 16)
    png_set_swap(png);
  png_read_update_info(png, info);

  PngData out;
  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  out.bit_depth = png_get_bit_depth(png, info);
  const std::size_t row_bytes = png_get_rowbytes(png, info);
  out.bytes.resize(row_bytes * out.height);
  for (int y = 0; y < out.height; ++y)
    png_read_row(png, out.bytes.data() + static_cast<std::size_t>(y) * row_bytes, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}
}  // namespace detail

inline std::string encode_png(const RgbImage& img)
{
  return detail::encode_png_raw(img.width, img.height, PNG_COLOR_TYPE_RGB, 8, img.data,
                                static_cast<std::size_t>(img.width) * 3);
}

inline void write_png(const std::string& path, const RgbImage& img)
{
  detail::write_png_raw(path, img.width, img.height, PNG_COLOR_TYPE_RGB, 8, img.data,
                        static_cast<std::size_t>(img.width) * 3);
}

inline RgbImage read_png(const std::string& path)
{
  auto raw = detail::read_png_raw(path);
  RgbImage img(raw.width, raw.height);
  for (int y = 0; y < raw.height; ++y)
  {
    for (int x = 0; x < raw.width; ++x)
    {
      const std::size_t px = static_cast<std::size_t>(y) * raw.width + x;
      auto sample = [&](int c) -> std::uint8_t {
        if (raw.bit_depth == 16)
          return raw.bytes[(px * raw.channels + c) * 2 + 1];
        return raw.bytes[px * raw.channels + c];
      };
      if (raw.channels >= 3)
        img.set(x, y, {sample(0), sample(1), sample(2)});
      else
        img.set(x, y, {sample(0), sample(0), sample(0)});
    }
  }
  return img;
}

// Sidecar for a 16-bit depth PNG: meters per unit plus the camera intrinsics.
struct DepthMeta
{
  double depth_scale = 0.0001;
  CameraIntrinsics intrinsics;
};

inline nlohmann::json intrinsics_to_json(const CameraIntrinsics& k)
{
  return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
}

inline CameraIntrinsics intrinsics_from_json(const nlohmann::json& j)
{
  CameraIntrinsics k;
  try
  {
    k.fx = j.at("fx").get<double>();
    k.fy = j.at("fy").get<double>();
    k.cx = j.at("cx").get<double>();
    k.cy = j.at("cy").get<double>();
    k.width = j.at("width").get<int>();
    k.height = j.at("height").get<int>();
  }
  catch (const nlohmann::json::exception& e)
  {
    fail(ErrorKind::ParseError, std::string("intrinsics: ") + e.what());
  }
  k.validate();
  return k;
}

inline void write_depth(const std::string& png_path, const std::string& meta_path, const DepthImage& depth,
                        const DepthMeta& meta)
{
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(depth.width) * depth.height * 2);
  for (std::size_t i = 0; i < depth.data.size(); ++i)
  {
    const double units = std::round(depth.data[i] / meta.depth_scale);
    const auto q = static_cast<std::uint16_t>(std::clamp(units, 0.0, 65535.0));
    bytes[2 * i] = static_cast<std::uint8_t>(q & 0xff);
    bytes[2 * i + 1] = static_cast<std::uint8_t>(q >> 8);
  }
  detail::write_png_raw(png_path, depth.width, depth.height, PNG_COLOR_TYPE_GRAY, 16, bytes,
                        static_cast<std::size_t>(depth.width) * 2);
  nlohmann::json j = {{"format_version", 1},
                      {"depth_scale", meta.depth_scale},
                      {"intrinsics", intrinsics_to_json(meta.intrinsics)}};
  std::ofstream out(meta_path);
  if (!out)
    fail(ErrorKind::IoError, "cannot write " + meta_path);
  out << j.dump(2) << '\n';
}

inline DepthMeta read_depth_meta(const std::string& meta_path)
{
  std::ifstream in(meta_path);
  if (!in)
    fail(ErrorKind::IoError, "cannot read " + meta_path);
  nlohmann::json j;
  try
  {
    j = nlohmann::json::parse(in);
  }
  catch (const nlohmann::json::exception& e)
  {
    fail(ErrorKind::ParseError, meta_path + ": " + e.what());
  }
  DepthMeta meta;
  meta.depth_scale = j.value("depth_scale", 0.0);
  if (!(meta.depth_scale > 0.0) || !std::isfinite(meta.depth_scale))
    fail(ErrorKind::ParseError, meta_path + ": depth_scale must be positive");
  if (!j.contains("intrinsics"))
    fail(ErrorKind::ParseError, meta_path + ": missing intrinsics");
  meta.intrinsics = intrinsics_from_json(j["intrinsics"]);
  return meta;
}

inline DepthImage read_depth(const std::string& png_path, const DepthMeta& meta)
{
  auto raw = detail::read_png_raw(png_path);
  if (raw.channels != 1 || raw.bit_depth != 16)
    fail(ErrorKind::ParseError, png_path + ": depth must be a 16-bit single-channel PNG");
  if (raw.width != meta.intrinsics.width || raw.height != meta.intrinsics.height)
    fail(ErrorKind::DimensionMismatch, png_path + ": size disagrees with sidecar intrinsics");
  DepthImage depth(raw.width, raw.height);
  for (std::size_t i = 0; i < depth.data.size(); ++i)
  {
    const unsigned q = raw.bytes[2 * i] | (static_cast<unsigned>(raw.bytes[2 * i + 1]) << 8);
    depth.data[i] = q * meta.depth_scale;
  }
  return depth;
}

}  // namespace taskgrasp
