#include "stseg/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <vector>

#include "stseg/error.hpp"

namespace stseg {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_png(const std::string& path, int width, int height, int color_type, int channels,
               const std::vector<unsigned char>& pixels) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot open for writing: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encode failed: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, width, height, 8, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    png_write_row(png, pixels.data() + static_cast<std::size_t>(y) * width * channels);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fflush(fp.get()) != 0) throw IoError("write failed: " + path);
}

// Decodes to 8-bit samples with `out_channels` channels (1 = gray, 3 = RGB).
std::vector<unsigned char> read_png(const std::string& path, int out_channels, int& width, int& height) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open for reading: " + path);
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) throw IoError("not a PNG file: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("PNG decode failed: " + path);
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  width = static_cast<int>(png_get_image_width(png, info));
  height = static_cast<int>(png_get_image_height(png, info));
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  const bool is_gray = color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA;
  if (out_channels == 3 && is_gray) png_set_gray_to_rgb(png);
  if (out_channels == 1 && !is_gray) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("expected a single-channel label image: " + path);
  }
  png_read_update_info(png, info);
  if (static_cast<int>(png_get_channels(png, info)) != out_channels) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("unexpected channel layout in " + path);
  }
  std::vector<unsigned char> pixels(static_cast<std::size_t>(width) * height * out_channels);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = pixels.data() + static_cast<std::size_t>(y) * width * out_channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return pixels;
}

}  // namespace

void write_png_rgb(const std::string& path, const Tensor<float>& image) {
  if (image.batch() < 1 || image.channels() != 3) throw ValidationError("write_png_rgb: need [1,3,H,W], got " + image.shape().str());
  const int h = image.height();
  const int w = image.width();
  std::vector<unsigned char> px(static_cast<std::size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        px[(static_cast<std::size_t>(y) * w + x) * 3 + c] =
            static_cast<unsigned char>(std::lround(std::clamp(image(0, c, y, x), 0.0f, 1.0f) * 255.0f));
      }
    }
  }
  write_png(path, w, h, PNG_COLOR_TYPE_RGB, 3, px);
}

Tensor<float> read_png_rgb(const std::string& path) {
  int w = 0, h = 0;
  const auto px = read_png(path, 3, w, h);
  Tensor<float> out(1, 3, h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) out(0, c, y, x) = px[(static_cast<std::size_t>(y) * w + x) * 3 + c] / 255.0f;
    }
  }
  return out;
}

void write_png_labels(const std::string& path, const LabelMap& labels) {
  if (labels.batch < 1) throw ValidationError("write_png_labels: empty label map");
  std::vector<unsigned char> px(labels.plane());
  const auto src = labels.item(0);
  for (std::size_t i = 0; i < px.size(); ++i) {
    if (src[i] < 0 || src[i] > 255) throw ValidationError("write_png_labels: id out of 8-bit range");
    px[i] = static_cast<unsigned char>(src[i]);
  }
  write_png(path, labels.width, labels.height, PNG_COLOR_TYPE_GRAY, 1, px);
}

LabelMap read_png_labels(const std::string& path) {
  int w = 0, h = 0;
  const auto px = read_png(path, 1, w, h);
  LabelMap out(1, h, w);
  for (std::size_t i = 0; i < px.size(); ++i) out.ids[i] = px[i];
  return out;
}

}  // namespace stseg
