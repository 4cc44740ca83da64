#include "padis/png.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <vector>

namespace padis {

namespace {

// libpng reports errors by longjmp to png_jmpbuf; the message is kept for
// the exception thrown after the jump lands.
thread_local char last_error[256];

void on_error(png_structp png, png_const_charp msg) {
  std::snprintf(last_error, sizeof last_error, "%s", msg);
  png_longjmp(png, 1);
}

void on_warning(png_structp, png_const_charp) {}

void write_cb(png_structp png, png_bytep data, png_size_t n) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(data), n);
}

void flush_cb(png_structp) {}

struct Reader {
  const std::string* bytes;
  std::size_t pos = 0;
};

void read_cb(png_structp png, png_bytep data, png_size_t n) {
  auto* r = static_cast<Reader*>(png_get_io_ptr(png));
  if (r->pos + n > r->bytes->size()) png_error(png, "unexpected end of data");
  std::memcpy(data, r->bytes->data() + r->pos, n);
  r->pos += n;
}

}  // namespace

std::string encode_png16(const RealImage& img, double scale) {
  const auto h = static_cast<png_uint_32>(img.rows());
  const auto w = static_cast<png_uint_32>(img.cols());
  std::vector<png_byte> rows(2ull * h * w);
  for (png_uint_32 i = 0; i < h; ++i)
    for (png_uint_32 j = 0; j < w; ++j) {
      double v = scale > 0 ? img(i, j) / scale : 0.0;
      if (!std::isfinite(v)) v = 0.0;
      const auto q = static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * 65535.0));
      rows[2ull * (i * w + j)] = static_cast<png_byte>(q >> 8);
      rows[2ull * (i * w + j) + 1] = static_cast<png_byte>(q & 0xff);
    }

  std::string out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, on_error, on_warning);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw FormatError(std::string("png: ") + last_error);
  }
  {
    png_set_write_fn(png, &out, write_cb, flush_cb);
    png_set_IHDR(png, info, w, h, 16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (png_uint_32 i = 0; i < h; ++i) png_write_row(png, rows.data() + 2ull * i * w);
    png_write_end(png, nullptr);
  }
  png_destroy_write_struct(&png, &info);
  return out;
}

Eigen::Array<std::uint16_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> decode_png16(
    const std::string& bytes) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, on_error, on_warning);
  png_infop info = png_create_info_struct(png);
  Reader reader{&bytes};
  Eigen::Array<std::uint16_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> img;
  std::vector<png_byte> row;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(std::string("png: ") + last_error);
  }
  png_set_read_fn(png, &reader, read_cb);
  png_read_info(png, info);
  if (png_get_bit_depth(png, info) != 16 || png_get_color_type(png, info) != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("png: expected 16-bit grayscale");
  }
  {
    const auto h = png_get_image_height(png, info);
    const auto w = png_get_image_width(png, info);
    img.resize(h, w);
    row.resize(2ull * w);
    for (png_uint_32 i = 0; i < h; ++i) {
      png_read_row(png, row.data(), nullptr);
      for (png_uint_32 j = 0; j < w; ++j)
        img(i, j) = static_cast<std::uint16_t>((row[2 * j] << 8) | row[2 * j + 1]);
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

}  // namespace padis
