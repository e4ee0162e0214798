#pragma once
// 8-bit RGB image IO: binary PPM (P6) and PNG (libpng).

#include <png.h>

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "mvt/tensor.hpp"

namespace mvt {

struct Image {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> rgb;  // row-major, 3 bytes per pixel
};

namespace detail {

struct FileHandle {
  std::FILE* f = nullptr;
  explicit FileHandle(std::FILE* fp) : f(fp) {}
  ~FileHandle() {
    if (f) std::fclose(f);
  }
  FileHandle(const FileHandle&) = delete;
  FileHandle& operator=(const FileHandle&) = delete;
};

inline int ppm_token(std::FILE* f) {  // next int, skipping whitespace/comments
  int c = std::fgetc(f);
  for (;;) {
    while (c == ' ' || c == '\t' || c == '\r' || c == '\n') c = std::fgetc(f);
    if (c == '#') {
      while (c != '\n' && c != EOF) c = std::fgetc(f);
      continue;
    }
    break;
  }
  int value = 0;
  bool any = false;
  while (c >= '0' && c <= '9') {
    value = value * 10 + (c - '0');
    any = true;
    c = std::fgetc(f);
  }
  check(any, "malformed PPM header");
  return value;
}

}  // namespace detail

inline Image read_ppm(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  check(f != nullptr, "cannot open '" + path + "'");
  detail::FileHandle guard(f);
  char magic[2];
  check(std::fread(magic, 1, 2, f) == 2 && magic[0] == 'P' && magic[1] == '6',
        "'" + path + "' is not a binary PPM (P6)");
  Image img;
  img.width = detail::ppm_token(f);
  img.height = detail::ppm_token(f);
  int maxval = detail::ppm_token(f);
  check(maxval == 255, "'" + path + "': only 8-bit PPM is supported");
  img.rgb.resize(static_cast<size_t>(img.width) * img.height * 3);
  check(std::fread(img.rgb.data(), 1, img.rgb.size(), f) == img.rgb.size(),
        "'" + path + "': truncated pixel data");
  return img;
}

inline void write_ppm(const std::string& path, const Image& img) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  check(f != nullptr, "cannot open '" + path + "' for writing");
  detail::FileHandle guard(f);
  std::fprintf(f, "P6\n%d %d\n255\n", img.width, img.height);
  std::fwrite(img.rgb.data(), 1, img.rgb.size(), f);
}

inline Image read_png(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  check(f != nullptr, "cannot open '" + path + "'");
  detail::FileHandle guard(f);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  check(png != nullptr, "libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    check(false, "libpng info init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::invalid_argument("'" + path + "' is not a readable PNG");
  }
  png_init_io(png, f);
  png_read_info(png, info);

  png_uint_32 width = png_get_image_width(png, info);
  png_uint_32 height = png_get_image_height(png, info);
  png_byte color = png_get_color_type(png, info);
  png_byte depth = png_get_bit_depth(png, info);

  // Normalize everything to 8-bit RGB.
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  Image img;
  img.width = static_cast<int>(width);
  img.height = static_cast<int>(height);
  img.rgb.resize(static_cast<size_t>(width) * height * 3);
  std::vector<png_bytep> rows(height);
  for (png_uint_32 y = 0; y < height; ++y)
    rows[y] = img.rgb.data() + static_cast<size_t>(y) * width * 3;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

inline void write_png(const std::string& path, const Image& img) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  check(f != nullptr, "cannot open '" + path + "' for writing");
  detail::FileHandle guard(f);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  check(png != nullptr, "libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    check(false, "libpng info init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::invalid_argument("PNG write failed for '" + path + "'");
  }
  png_init_io(png, f);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(static_cast<size_t>(img.height));
  for (int y = 0; y < img.height; ++y)
    rows[static_cast<size_t>(y)] =
        const_cast<png_bytep>(img.rgb.data() + static_cast<size_t>(y) * img.width * 3);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

inline Image read_image(const std::string& path) {
  if (ends_with(path, ".ppm") || ends_with(path, ".PPM")) return read_ppm(path);
  if (ends_with(path, ".png") || ends_with(path, ".PNG")) return read_png(path);
  throw std::invalid_argument("'" + path + "': unsupported image type (expected .png or .ppm)");
}

// [3,H,W] float tensor in [0,1].
inline Tensor image_to_tensor(const Image& img) {
  Tensor t({3, img.height, img.width});
  const int64_t plane = static_cast<int64_t>(img.height) * img.width;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      int64_t p = static_cast<int64_t>(y) * img.width + x;
      for (int c = 0; c < 3; ++c)
        t.data()[c * plane + p] = img.rgb[static_cast<size_t>(p * 3 + c)] / 255.0f;
    }
  return t;
}

inline Image tensor_to_image(const Tensor& t) {
  check(t.rank() == 3 && t.dim(0) == 3, "tensor_to_image: expects [3,H,W]");
  Image img;
  img.height = t.dim(1);
  img.width = t.dim(2);
  img.rgb.resize(static_cast<size_t>(img.width) * img.height * 3);
  const int64_t plane = static_cast<int64_t>(img.height) * img.width;
  for (int64_t p = 0; p < plane; ++p)
    for (int c = 0; c < 3; ++c) {
      float v = t[c * plane + p];
      v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
      img.rgb[static_cast<size_t>(p * 3 + c)] = static_cast<uint8_t>(v * 255.0f + 0.5f);
    }
  return img;
}

}  // namespace mvt
