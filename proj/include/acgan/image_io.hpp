#pragma once

// 8-bit grayscale image files (PNG through libpng, binary/ASCII PGM) and the
// mapping between pixel bytes and the [-1, 1] range the networks consume.

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace acgan {

struct ImageIoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

inline GrayImage read_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw ImageIoError("cannot decode PNG " + path.string() + ": " + img.message);
  img.format = PNG_FORMAT_GRAY;
  GrayImage out;
  out.width = img.width;
  out.height = img.height;
  out.pixels.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw ImageIoError("cannot decode PNG " + path.string() + ": " + msg);
  }
  return out;
}

inline void write_png(const std::filesystem::path& path, const GrayImage& image) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.c_str(), 0, image.pixels.data(), 0, nullptr))
    throw ImageIoError("cannot write PNG " + path.string() + ": " + img.message);
}

namespace detail {

inline std::string next_pgm_token(std::istream& in) {
  std::string tok;
  while (in >> tok) {
    if (tok[0] != '#') return tok;
    std::string rest;
    std::getline(in, rest);
  }
  return {};
}

}  // namespace detail

// P5 (binary) or P2 (ASCII) with maxval <= 255; values are rescaled to 0..255.
inline GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageIoError("cannot open " + path.string());
  const std::string magic = detail::next_pgm_token(in);
  if (magic != "P5" && magic != "P2") throw ImageIoError("not a PGM file: " + path.string());
  GrayImage out;
  try {
    out.width = std::stoul(detail::next_pgm_token(in));
    out.height = std::stoul(detail::next_pgm_token(in));
    const unsigned long maxval = std::stoul(detail::next_pgm_token(in));
    if (maxval == 0 || maxval > 255 || out.width == 0 || out.height == 0) throw std::out_of_range("header");
    out.pixels.resize(out.width * out.height);
    if (magic == "P5") {
      in.get();  // single whitespace after the header
      in.read(reinterpret_cast<char*>(out.pixels.data()), static_cast<std::streamsize>(out.pixels.size()));
      if (in.gcount() != static_cast<std::streamsize>(out.pixels.size())) throw std::out_of_range("data");
    } else {
      for (auto& p : out.pixels) {
        const unsigned long v = std::stoul(detail::next_pgm_token(in));
        if (v > maxval) throw std::out_of_range("data");
        p = static_cast<std::uint8_t>(v);
      }
    }
    if (maxval != 255)
      for (auto& p : out.pixels)
        p = static_cast<std::uint8_t>(std::lround(255.0 * std::min<unsigned long>(p, maxval) / maxval));
  } catch (const std::logic_error&) {
    throw ImageIoError("corrupt PGM file: " + path.string());
  }
  return out;
}

inline void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw ImageIoError("cannot write PGM " + path.string());
}

inline bool is_image_file(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".pgm";
}

inline GrayImage read_image(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") return read_png(path);
  if (ext == ".pgm") return read_pgm(path);
  throw ImageIoError("unsupported image type: " + path.string());
}

// Bilinear resampling with half-pixel centres; same-size input is returned unchanged.
inline std::vector<float> resize_bilinear(const std::vector<float>& src, std::size_t w, std::size_t h,
                                          std::size_t out_w, std::size_t out_h) {
  if (w == out_w && h == out_h) return src;
  std::vector<float> out(out_w * out_h);
  const double sx = static_cast<double>(w) / out_w, sy = static_cast<double>(h) / out_h;
  for (std::size_t y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
    const std::size_t y0 = static_cast<std::size_t>(fy), y1 = std::min(y0 + 1, h - 1);
    const double wy = fy - y0;
    for (std::size_t x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
      const std::size_t x0 = static_cast<std::size_t>(fx), x1 = std::min(x0 + 1, w - 1);
      const double wx = fx - x0;
      const double top = src[y0 * w + x0] * (1 - wx) + src[y0 * w + x1] * wx;
      const double bot = src[y1 * w + x0] * (1 - wx) + src[y1 * w + x1] * wx;
      out[y * out_w + x] = static_cast<float>(top * (1 - wy) + bot * wy);
    }
  }
  return out;
}

// 0 -> -1, 255 -> +1.
inline float pixel_to_unit(std::uint8_t p) { return 2.0f * static_cast<float>(p) / 255.0f - 1.0f; }

inline std::uint8_t unit_to_pixel(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp((v + 1.0) * 0.5 * 255.0, 0.0, 255.0)));
}

}  // namespace acgan
