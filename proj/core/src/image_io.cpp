#include "eid/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "eid/tensor_io.hpp"

namespace eid {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Tensor<float> load_image(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) fail_io("cannot open image " + path);

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) fail_io("libpng init failed for " + path);

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail_io("corrupt PNG file " + path);
  }
  png_init_io(png, fp.get());
  png_read_png(png, info, PNG_TRANSFORM_SWAP_ENDIAN, nullptr);

  const png_uint_32 width = png_get_image_width(png, info);
  const png_uint_32 height = png_get_image_height(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);
  const int channels =
      color_type == PNG_COLOR_TYPE_GRAY ? 1 : (color_type == PNG_COLOR_TYPE_RGB ? 3 : 0);
  if ((bit_depth != 8 && bit_depth != 16) || channels == 0) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail_io(detail::cat("unsupported PNG layout in ", path, " (bit depth ",
                        bit_depth, ", color type ", color_type,
                        "); need 8/16-bit gray or RGB"));
  }

  Tensor<float> out =
      Tensor<float>::zeros(Shape{1, channels, int64_t(height), int64_t(width)});
  auto v = out.values();
  const int64_t plane = int64_t(height) * int64_t(width);
  png_bytepp rows = png_get_rows(png, info);
  const float scale = bit_depth == 8 ? 1.0f / 255.0f : 1.0f / 65535.0f;
  for (png_uint_32 y = 0; y < height; ++y) {
    for (png_uint_32 x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) {
        uint32_t raw;
        if (bit_depth == 8) {
          raw = rows[y][x * channels + c];
        } else {
          const uint16_t* row16 = reinterpret_cast<const uint16_t*>(rows[y]);
          raw = row16[x * channels + c];
        }
        v[c * plane + int64_t(y) * width + x] = float(raw) * scale;
      }
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

void save_image(const std::string& path, const Tensor<float>& image,
                int bit_depth) {
  const Shape& s = image.shape();
  check(s.n == 1 && (s.c == 1 || s.c == 3),
        detail::cat("save_image needs 1x{1|3}xHxW, got ", s.str()));
  check(bit_depth == 8 || bit_depth == 16,
        detail::cat("save_image: bit depth must be 8 or 16, got ", bit_depth));

  const int channels = int(s.c);
  const int64_t plane = s.plane();
  const auto v = image.values();
  const double maxval = bit_depth == 8 ? 255.0 : 65535.0;
  const size_t row_bytes = size_t(s.w) * channels * (bit_depth / 8);
  std::vector<png_byte> buf(size_t(s.h) * row_bytes);
  std::vector<png_bytep> rows(size_t(s.h));
  for (int64_t y = 0; y < s.h; ++y) {
    rows[size_t(y)] = buf.data() + size_t(y) * row_bytes;
    for (int64_t x = 0; x < s.w; ++x) {
      for (int c = 0; c < channels; ++c) {
        const double val = std::clamp(double(v[c * plane + y * s.w + x]), 0.0, 1.0);
        const uint32_t q = uint32_t(std::lround(val * maxval));
        if (bit_depth == 8) {
          rows[size_t(y)][x * channels + c] = png_byte(q);
        } else {
          uint16_t* row16 = reinterpret_cast<uint16_t*>(rows[size_t(y)]);
          row16[x * channels + c] = uint16_t(q);
        }
      }
    }
  }

  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) fail_io("cannot open " + path + " for writing");
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) fail_io("libpng init failed for " + path);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail_io("failed writing PNG " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, png_uint_32(s.w), png_uint_32(s.h), bit_depth,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_set_rows(png, info, rows.data());
  png_write_png(png, info, PNG_TRANSFORM_SWAP_ENDIAN, nullptr);
  png_destroy_write_struct(&png, &info);
}

Tensor<double> load_depth(const std::string& path, double d_max) {
  check(d_max > 0, detail::cat("d_max must be positive, got ", d_max));
  {
    std::ifstream sniff(path, std::ios::binary);
    if (!sniff) fail_io("cannot open depth file " + path);
    char magic[8] = {};
    sniff.read(magic, 8);
    if (std::memcmp(magic, "EIDTNSR1", 8) == 0) {
      Tensor<double> t = load_tensor<double>(path);
      const Shape& s = t.shape();
      check(s.n == 1 && s.c == 1,
            detail::cat("depth tensor must be 1x1xHxW, got ", s.str(),
                        " in ", path));
      return t;
    }
  }
  const Tensor<float> img = load_image(path);
  const Shape& s = img.shape();
  check(s.c == 1, detail::cat("depth PNG must be grayscale, got ", s.c,
                              " channels in ", path));
  Tensor<double> out = Tensor<double>::zeros(s);
  auto dst = out.values();
  const auto src = img.values();
  for (size_t i = 0; i < dst.size(); ++i) dst[i] = double(src[i]) * d_max;
  return out;
}

std::vector<std::string> list_png_files(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) fail_io("not a directory: " + dir);
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".png")
      files.push_back(entry.path().string());
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace eid
