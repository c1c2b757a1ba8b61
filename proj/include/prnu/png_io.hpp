#pragma once

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "prnu/plane.hpp"
#include "prnu/signal.hpp"

namespace prnu {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] inline void png_fail(png_structp png, png_const_charp msg) {
  auto* text = static_cast<std::string*>(png_get_error_ptr(png));
  if (text) *text = msg;
  png_longjmp(png, 1);
}

inline void png_warn(png_structp, png_const_charp) {}

}  // namespace detail

/// Reads an 8- or 16-bit PNG as luminance in [0,1]. Color images go through BT.601 weights;
/// alpha is discarded.
inline ImagePlane read_png(const std::filesystem::path& path) {
  detail::FilePtr file(std::fopen(path.string().c_str(), "rb"));
  if (!file) throw ImageIoError("cannot open " + path.string());

  std::string error;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, detail::png_fail, detail::png_warn);
  if (!png) throw ImageIoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw ImageIoError("png_create_info_struct failed");
  }

  std::vector<png_byte> pixels;
  std::vector<png_bytep> rows;
  png_uint_32 width = 0, height = 0;
  int depth = 0, channels = 0;
  // Locals touched after setjmp are kept in containers/volatile-free scalars set before the jump.
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageIoError("cannot decode " + path.string() + ": " + error);
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  width = png_get_image_width(png, info);
  height = png_get_image_height(png, info);
  depth = png_get_bit_depth(png, info);
  channels = png_get_channels(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  pixels.resize(stride * height);
  rows.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = pixels.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  if ((depth != 8 && depth != 16) || (channels != 1 && channels != 3))
    throw ImageIoError("unsupported PNG layout in " + path.string());

  const double scale = depth == 16 ? 65535.0 : 255.0;
  const int bytes = depth / 8;
  auto sample = [&](png_uint_32 y, png_uint_32 x, int c) -> float {
    const png_byte* p = rows[y] + (static_cast<std::size_t>(x) * channels + c) * bytes;
    const unsigned v = bytes == 2 ? (static_cast<unsigned>(p[0]) << 8) | p[1] : p[0];
    return static_cast<float>(v / scale);
  };

  const int h = static_cast<int>(height), w = static_cast<int>(width);
  if (channels == 1) {
    Plane out(h, w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out(y, x) = sample(y, x, 0);
    return ImagePlane(std::move(out));
  }
  RgbImage rgb{Plane(h, w), Plane(h, w), Plane(h, w)};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      rgb.r(y, x) = sample(y, x, 0);
      rgb.g(y, x) = sample(y, x, 1);
      rgb.b(y, x) = sample(y, x, 2);
    }
  return to_luminance(rgb);
}

/// The values a 16-bit write/read round trip yields.
inline ImagePlane quantize16(const ImagePlane& image) {
  Plane out = image.plane();
  for (float& v : out.values())
    v = static_cast<float>(static_cast<double>(std::lround(static_cast<double>(v) * 65535.0)) / 65535.0);
  return ImagePlane(std::move(out));
}

/// Writes a 16-bit grayscale PNG (values rounded to the nearest 1/65535).
inline void write_png16(const std::filesystem::path& path, const ImagePlane& image) {
  detail::FilePtr file(std::fopen(path.string().c_str(), "wb"));
  if (!file) throw ImageIoError("cannot create " + path.string());

  const int h = image.height(), w = image.width();
  std::vector<png_byte> pixels(static_cast<std::size_t>(h) * w * 2);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto v = static_cast<unsigned>(std::lround(static_cast<double>(image(y, x)) * 65535.0));
      png_byte* p = &pixels[(static_cast<std::size_t>(y) * w + x) * 2];
      p[0] = static_cast<png_byte>(v >> 8);
      p[1] = static_cast<png_byte>(v & 0xff);
    }
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = pixels.data() + static_cast<std::size_t>(y) * w * 2;

  std::string error;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, detail::png_fail, detail::png_warn);
  if (!png) throw ImageIoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw ImageIoError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ImageIoError("cannot encode " + path.string() + ": " + error);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 16, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace prnu
