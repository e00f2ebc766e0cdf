#pragma once

#include <png.h>

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "dexined/error.hpp"

namespace dexined {

// 8-bit raster, row-major with interleaved channels.
struct Raster {
  std::size_t height = 0, width = 0, channels = 0;
  std::vector<std::uint8_t> pixels;

  Raster() = default;
  Raster(std::size_t h, std::size_t w, std::size_t c, std::uint8_t fill = 0)
      : height(h), width(w), channels(c), pixels(h * w * c, fill) {}

  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c = 0) {
    return pixels[(y * width + x) * channels + c];
  }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c = 0) const {
    return pixels[(y * width + x) * channels + c];
  }
  std::string extent() const { return std::to_string(width) + "x" + std::to_string(height); }
  friend bool operator==(const Raster&, const Raster&) = default;
};

namespace detail {

struct PngReadBuffer {
  const std::uint8_t* data;
  std::size_t size, offset;
};

inline void png_error_fn(png_structp png, png_const_charp msg) {
  *static_cast<std::string*>(png_get_error_ptr(png)) = msg;
  png_longjmp(png, 1);
}
inline void png_warning_fn(png_structp, png_const_charp) {}

}  // namespace detail

// Decodes an 8-bit PNG. Palette images expand to RGB; alpha is dropped.
// Grayscale stays single-channel.
inline Raster decode_png(const std::vector<std::uint8_t>& bytes, const std::string& label) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8))
    throw DataError(label + ": not a PNG file");
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, detail::png_error_fn,
                                           detail::png_warning_fn);
  png_infop info = png_create_info_struct(png);
  detail::PngReadBuffer buf{bytes.data(), bytes.size(), 0};
  Raster r;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError(label + ": corrupt PNG (" + err + ")");
  }
  png_set_read_fn(png, &buf, [](png_structp p, png_bytep out, png_size_t n) {
    auto* b = static_cast<detail::PngReadBuffer*>(png_get_io_ptr(p));
    if (b->offset + n > b->size) png_error(p, "truncated data");
    std::memcpy(out, b->data + b->offset, n);
    b->offset += n;
  });
  png_read_info(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (depth != 8 && !(color == PNG_COLOR_TYPE_PALETTE && depth <= 8)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError(label + ": only 8-bit PNG is supported, found bit depth " +
                    std::to_string(depth));
  }
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  r.width = png_get_image_width(png, info);
  r.height = png_get_image_height(png, info);
  r.channels = png_get_channels(png, info);
  r.pixels.resize(r.width * r.height * r.channels);
  rows.resize(r.height);
  for (std::size_t y = 0; y < r.height; ++y) rows[y] = r.pixels.data() + y * r.width * r.channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  if (r.channels != 1 && r.channels != 3)
    throw DataError(label + ": unsupported channel count " + std::to_string(r.channels));
  return r;
}

inline std::vector<std::uint8_t> encode_png(const Raster& r) {
  if (r.channels != 1 && r.channels != 3)
    throw DataError("encode_png: unsupported channel count " + std::to_string(r.channels));
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, detail::png_error_fn,
                                            detail::png_warning_fn);
  png_infop info = png_create_info_struct(png);
  std::vector<std::uint8_t> out;
  std::vector<png_const_bytep> rows(r.height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("encode_png: " + err);
  }
  png_set_write_fn(
      png, &out,
      [](png_structp p, png_bytep data, png_size_t n) {
        auto* v = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(p));
        v->insert(v->end(), data, data + n);
      },
      nullptr);
  png_set_IHDR(png, info, png_uint_32(r.width), png_uint_32(r.height), 8,
               r.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  // fixed settings keep the encoded bytes reproducible
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  for (std::size_t y = 0; y < r.height; ++y) rows[y] = r.pixels.data() + y * r.width * r.channels;
  png_write_rows(png, const_cast<png_bytepp>(rows.data()), png_uint_32(r.height));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Writes through a sibling temporary file and renames it into place.
inline void write_bytes_atomic(const std::filesystem::path& path, const void* data,
                               std::size_t size) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + tmp.string() + "'");
    out.write(static_cast<const char*>(data), std::streamsize(size));
    if (!out) throw DataError("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_bytes_atomic(path, text.data(), text.size());
}

inline Raster read_png(const std::filesystem::path& path) {
  return decode_png(read_bytes(path), path.string());
}

inline void write_png(const std::filesystem::path& path, const Raster& r) {
  const auto bytes = encode_png(r);
  write_bytes_atomic(path, bytes.data(), bytes.size());
}

}  // namespace dexined
