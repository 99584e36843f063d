// SPDX-License-Identifier: Apache-2.0
#include "cigan/image.hpp"

#include <jpeglib.h>
#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>
#include <vector>

namespace cigan::img {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::runtime_error(path + ": " + what);
}

Image from_u8(const std::vector<unsigned char>& pix, int channels, int h, int w) {
  Image out(1, channels, h, w);
  for (int c = 0; c < channels; ++c) {
    float* dst = out.plane(0, c);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        dst[static_cast<size_t>(y) * w + x] =
            pix[(static_cast<size_t>(y) * w + x) * channels + c] / 255.0f;
  }
  return out;
}

Image load_png(FILE* f, const std::string& path) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) fail(path, "libpng init failed");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(path, "corrupt PNG");
  }
  png_init_io(png, f);
  png_read_info(png, info);

  int bit_depth = png_get_bit_depth(png, info);
  int color_type = png_get_color_type(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) {
    png_set_palette_to_rgb(png);
    color_type = PNG_COLOR_TYPE_RGB;
  }
  if (bit_depth != 8) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(path, "unsupported bit depth " + std::to_string(bit_depth) + " (need 8)");
  }
  if (color_type != PNG_COLOR_TYPE_GRAY && color_type != PNG_COLOR_TYPE_RGB) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(path, "unsupported channel layout (need gray or RGB without alpha)");
  }
  int channels = color_type == PNG_COLOR_TYPE_GRAY ? 1 : 3;
  int w = static_cast<int>(png_get_image_width(png, info));
  int h = static_cast<int>(png_get_image_height(png, info));

  std::vector<unsigned char> pix(static_cast<size_t>(h) * w * channels);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = pix.data() + static_cast<size_t>(y) * w * channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return from_u8(pix, channels, h, w);
}

struct JpegErr {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
};

void jpeg_bail(j_common_ptr cinfo) {
  std::longjmp(reinterpret_cast<JpegErr*>(cinfo->err)->jump, 1);
}

Image load_jpeg(FILE* f, const std::string& path) {
  jpeg_decompress_struct cinfo;
  JpegErr err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_bail;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    fail(path, "corrupt JPEG");
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, f);
  jpeg_read_header(&cinfo, TRUE);
  if (cinfo.num_components != 1 && cinfo.num_components != 3) {
    jpeg_destroy_decompress(&cinfo);
    fail(path, "unsupported channel count " + std::to_string(cinfo.num_components));
  }
  cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&cinfo);
  int w = static_cast<int>(cinfo.output_width);
  int h = static_cast<int>(cinfo.output_height);
  int channels = cinfo.output_components;
  std::vector<unsigned char> pix(static_cast<size_t>(h) * w * channels);
  while (cinfo.output_scanline < cinfo.output_height) {
    unsigned char* row = pix.data() + static_cast<size_t>(cinfo.output_scanline) * w * channels;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return from_u8(pix, channels, h, w);
}

}  // namespace

Image load_image(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) fail(path, "cannot open file");
  unsigned char magic[8] = {};
  size_t got = std::fread(magic, 1, 8, f.get());
  std::rewind(f.get());
  if (got >= 8 && png_sig_cmp(magic, 0, 8) == 0) return load_png(f.get(), path);
  if (got >= 2 && magic[0] == 0xFF && magic[1] == 0xD8) return load_jpeg(f.get(), path);
  fail(path, "not a PNG or JPEG file");
}

void save_image(const Image& image, const std::string& path) {
  check(image.n() == 1, "save_image: batch must be 1");
  check(image.c() == 1 || image.c() == 3, "save_image: channels must be 1 or 3");
  int channels = image.c(), h = image.h(), w = image.w();

  std::vector<unsigned char> pix(static_cast<size_t>(h) * w * channels);
  for (int c = 0; c < channels; ++c) {
    const float* src = image.plane(0, c);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double v = src[static_cast<size_t>(y) * w + x];
        double q = std::floor(v * 255.0 + 0.5);  // round half up
        q = q < 0 ? 0 : (q > 255 ? 255 : q);
        pix[(static_cast<size_t>(y) * w + x) * channels + c] = static_cast<unsigned char>(q);
      }
  }

  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) fail(path, "cannot open for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) fail(path, "libpng init failed");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(path, "PNG write failed");
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, w, h, 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = pix.data() + static_cast<size_t>(y) * w * channels;
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

double mean_gray_luminance(const Image& image) {
  double acc = 0.0;
  size_t hw = static_cast<size_t>(image.h()) * image.w();
  for (int b = 0; b < image.n(); ++b) {
    for (size_t i = 0; i < hw; ++i) {
      double px = 0.0;
      for (int c = 0; c < image.c(); ++c) px += image.plane(b, c)[i];
      acc += px / image.c();
    }
  }
  return acc / (static_cast<double>(image.n()) * hw);
}

}  // namespace cigan::img
