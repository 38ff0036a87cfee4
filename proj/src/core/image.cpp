#include "inspectlab/core/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

#include "inspectlab/core/error.hpp"

namespace inspectlab {

GrayImage resize_bilinear(const GrayImage& src, int width, int height) {
  if (src.width == width && src.height == height) return src;
  GrayImage out(width, height);
  const double sx = static_cast<double>(src.width) / width;
  const double sy = static_cast<double>(src.height) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, src.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, src.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double wx = fx - x0;
      const double top = src.at(x0, y0) * (1.0 - wx) + src.at(x1, y0) * wx;
      const double bottom = src.at(x0, y1) * (1.0 - wx) + src.at(x1, y1) * wx;
      const double v = top * (1.0 - wy) + bottom * wy;
      out.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
    }
  }
  return out;
}

GrayImage quantize_unit(std::span<const float> values, int width, int height) {
  require(values.size() == static_cast<std::size_t>(width) * height, "quantize_unit: size mismatch");
  GrayImage out(width, height);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float v = std::clamp(values[i], 0.0f, 1.0f);
    out.pixels[i] = static_cast<std::uint8_t>(std::floor(v * 255.0f + 0.5f));
  }
  return out;
}

namespace {

struct PngWriteBuffer {
  std::vector<std::uint8_t>* out;
};

void png_write_to_vector(png_structp png, png_bytep data, png_size_t length) {
  auto* buf = static_cast<PngWriteBuffer*>(png_get_io_ptr(png));
  buf->out->insert(buf->out->end(), data, data + length);
}

void png_flush_noop(png_structp) {}

struct PngReadBuffer {
  std::span<const std::uint8_t> bytes;
  std::size_t offset = 0;
};

void png_read_from_span(png_structp png, png_bytep data, png_size_t length) {
  auto* buf = static_cast<PngReadBuffer*>(png_get_io_ptr(png));
  if (buf->offset + length > buf->bytes.size()) {
    png_error(png, "truncated PNG stream");
    return;
  }
  std::memcpy(data, buf->bytes.data() + buf->offset, length);
  buf->offset += length;
}

struct PngErrorState {
  char message[256] = {0};
};

void png_error_longjmp(png_structp png, png_const_charp msg) {
  auto* state = static_cast<PngErrorState*>(png_get_error_ptr(png));
  std::snprintf(state->message, sizeof(state->message), "%s", msg);
  png_longjmp(png, 1);
}

void png_warning_ignore(png_structp, png_const_charp) {}

// libpng reports errors by longjmp; no object with a destructor may be
// created between setjmp and the last libpng call in these two functions.
bool encode_raw_impl(std::vector<std::uint8_t>& out, const std::uint8_t* pixels, int width, int height, int color_type,
                     int channels, PngErrorState& err) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_longjmp, png_warning_ignore);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  PngWriteBuffer buf{&out};
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_set_write_fn(png, &buf, png_write_to_vector, png_flush_noop);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(pixels + static_cast<std::size_t>(y) * width * channels));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

std::vector<std::uint8_t> encode_raw(const std::uint8_t* pixels, int width, int height, int color_type, int channels) {
  std::vector<std::uint8_t> out;
  out.reserve(static_cast<std::size_t>(width) * height * channels / 2 + 128);
  PngErrorState err;
  if (!encode_raw_impl(out, pixels, width, height, color_type, channels, err)) {
    fail(ErrorKind::io, std::string("PNG encode failed: ") + err.message);
  }
  return out;
}

bool decode_impl(std::span<const std::uint8_t> bytes, GrayImage& out, PngErrorState& err) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_longjmp, png_warning_ignore);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  PngReadBuffer buf{bytes, 0};
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_set_read_fn(png, &buf, png_read_from_span);
  png_read_info(png, info);
  const auto width = static_cast<int>(png_get_image_width(png, info));
  const auto height = static_cast<int>(png_get_image_height(png, info));
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA || color == PNG_COLOR_TYPE_PALETTE) {
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  }
  png_read_update_info(png, info);
  if (png_get_channels(png, info) != 1) {
    std::snprintf(err.message, sizeof(err.message), "unsupported PNG channel layout");
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  out.width = width;
  out.height = height;
  out.pixels.resize(static_cast<std::size_t>(width) * height);
  for (int y = 0; y < height; ++y) png_read_row(png, out.pixels.data() + static_cast<std::size_t>(y) * width, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorKind::io, "cannot open for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) fail(ErrorKind::io, "write failed: " + path.string());
}

}  // namespace

std::vector<std::uint8_t> encode_png(const GrayImage& image) {
  return encode_raw(image.pixels.data(), image.width, image.height, PNG_COLOR_TYPE_GRAY, 1);
}

GrayImage decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) fail(ErrorKind::format, "not a PNG stream");
  GrayImage out;
  PngErrorState err;
  if (!decode_impl(bytes, out, err)) fail(ErrorKind::format, std::string("PNG decode failed: ") + err.message);
  return out;
}

void write_png(const std::filesystem::path& path, const GrayImage& image) { write_bytes(path, encode_png(image)); }

GrayImage read_png(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::io, "cannot open image: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  try {
    return decode_png(bytes);
  } catch (const Error& e) {
    fail(ErrorKind::format, path.string() + ": " + e.what());
  }
}

void RgbImage::set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  if (x < 0 || y < 0 || x >= width || y >= height) return;
  auto* p = pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  p[0] = r;
  p[1] = g;
  p[2] = b;
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  write_bytes(path, encode_raw(image.pixels.data(), image.width, image.height, PNG_COLOR_TYPE_RGB, 3));
}

}  // namespace inspectlab
