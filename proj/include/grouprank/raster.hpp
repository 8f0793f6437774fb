#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace grouprank {

// ---------------------------------------------------------------------------
// Core grid types. Intensities are kept as doubles end to end; every channel
// downstream (normalization, filtering, gradients) wants real arithmetic.
// ---------------------------------------------------------------------------

struct RasterImage {
  int width = 0;
  int height = 0;
  int channels = 1;  // 1 (gray) or 3 (rgb)
  std::vector<double> data;  // row-major, interleaved, values in [0, 255]

  double& at(int x, int y, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

struct RealGrid {
  int width = 0;
  int height = 0;
  std::vector<double> data;  // row-major

  RealGrid() = default;
  RealGrid(int w, int h, double fill = 0.0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  double& at(int x, int y) {
    return data[static_cast<std::size_t>(y) * width + x];
  }
  double at(int x, int y) const {
    return data[static_cast<std::size_t>(y) * width + x];
  }
};

enum class ImageFormat { pgm, ppm, png };

class DecodeError : public std::runtime_error {
 public:
  enum class Kind {
    malformed_header,
    truncated_payload,
    unsupported_depth,
    unsupported_color,     // palette or alpha layouts
    unsupported_interlace,
    bad_magic,
  };

  DecodeError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// ---------------------------------------------------------------------------
// Netpbm binary codecs (P5 / P6), 8-bit only.
// ---------------------------------------------------------------------------

namespace detail {

struct PnmCursor {
  const std::uint8_t* p;
  std::size_t n;
  std::size_t i = 0;
};

inline void pnm_skip_space(PnmCursor& c) {
  while (c.i < c.n) {
    const char ch = static_cast<char>(c.p[c.i]);
    if (ch == '#') {
      while (c.i < c.n && c.p[c.i] != '\n') ++c.i;
    } else if (ch == ' ' || ch == '\t' || ch == '\r' || ch == '\n') {
      ++c.i;
    } else {
      break;
    }
  }
}

inline long pnm_int(PnmCursor& c) {
  pnm_skip_space(c);
  if (c.i >= c.n || c.p[c.i] < '0' || c.p[c.i] > '9') {
    throw DecodeError(DecodeError::Kind::malformed_header,
                      "pnm: expected integer in header");
  }
  long v = 0;
  while (c.i < c.n && c.p[c.i] >= '0' && c.p[c.i] <= '9') {
    v = v * 10 + (c.p[c.i] - '0');
    if (v > 1 << 30) {
      throw DecodeError(DecodeError::Kind::malformed_header,
                        "pnm: header value out of range");
    }
    ++c.i;
  }
  return v;
}

inline RasterImage decode_pnm(const std::vector<std::uint8_t>& bytes,
                              int channels) {
  PnmCursor c{bytes.data(), bytes.size()};
  const char magic = channels == 1 ? '5' : '6';
  if (c.n < 2 || c.p[0] != 'P' || static_cast<char>(c.p[1]) != magic) {
    throw DecodeError(DecodeError::Kind::bad_magic, "pnm: wrong magic number");
  }
  c.i = 2;
  const long w = pnm_int(c);
  const long h = pnm_int(c);
  const long maxval = pnm_int(c);
  if (w <= 0 || h <= 0) {
    throw DecodeError(DecodeError::Kind::malformed_header,
                      "pnm: non-positive dimensions");
  }
  if (maxval > 255) {
    throw DecodeError(DecodeError::Kind::unsupported_depth,
                      "pnm: only 8-bit samples are supported");
  }
  if (maxval <= 0) {
    throw DecodeError(DecodeError::Kind::malformed_header, "pnm: bad maxval");
  }
  // Exactly one whitespace byte separates header and payload.
  if (c.i >= c.n) {
    throw DecodeError(DecodeError::Kind::truncated_payload,
                      "pnm: missing payload");
  }
  ++c.i;
  const std::size_t need =
      static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * channels;
  if (c.n - c.i < need) {
    throw DecodeError(DecodeError::Kind::truncated_payload,
                      "pnm: payload shorter than header promises");
  }
  RasterImage img;
  img.width = static_cast<int>(w);
  img.height = static_cast<int>(h);
  img.channels = channels;
  img.data.resize(need);
  for (std::size_t k = 0; k < need; ++k) {
    img.data[k] = static_cast<double>(c.p[c.i + k]);
  }
  return img;
}

inline std::vector<std::uint8_t> encode_pnm(const RasterImage& img) {
  const std::string header = "P" + std::string(img.channels == 1 ? "5" : "6") +
                             "\n" + std::to_string(img.width) + " " +
                             std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + img.data.size());
  for (double v : img.data) {
    const double c = std::clamp(v, 0.0, 255.0);
    out.push_back(static_cast<std::uint8_t>(std::lround(c)));
  }
  return out;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_pgm(const RasterImage& img) {
  if (img.channels != 1) {
    throw std::invalid_argument("encode_pgm: image must be single-channel");
  }
  return detail::encode_pnm(img);
}

inline std::vector<std::uint8_t> encode_ppm(const RasterImage& img) {
  if (img.channels != 3) {
    throw std::invalid_argument("encode_ppm: image must have 3 channels");
  }
  return detail::encode_pnm(img);
}

RasterImage decode_png(const std::vector<std::uint8_t>& bytes);  // png.hpp

inline RasterImage decode_image(const std::vector<std::uint8_t>& bytes,
                                ImageFormat format) {
  switch (format) {
    case ImageFormat::pgm:
      return detail::decode_pnm(bytes, 1);
    case ImageFormat::ppm:
      return detail::decode_pnm(bytes, 3);
    case ImageFormat::png:
      return decode_png(bytes);
  }
  throw std::invalid_argument("decode_image: unknown format");
}

// Sniffs the magic bytes; PGM, PPM and PNG are the supported containers.
inline RasterImage decode_image_auto(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') {
    return decode_image(bytes, ImageFormat::pgm);
  }
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') {
    return decode_image(bytes, ImageFormat::ppm);
  }
  if (bytes.size() >= 4 && bytes[0] == 0x89 && bytes[1] == 'P' &&
      bytes[2] == 'N' && bytes[3] == 'G') {
    return decode_image(bytes, ImageFormat::png);
  }
  throw DecodeError(DecodeError::Kind::bad_magic,
                    "decode_image: unrecognized file magic");
}

// ---------------------------------------------------------------------------
// Channel-independent raster operations.
// ---------------------------------------------------------------------------

inline RasterImage to_grayscale(const RasterImage& img) {
  if (img.channels == 1) return img;
  if (img.channels != 3) {
    throw std::invalid_argument("to_grayscale: expected 1 or 3 channels");
  }
  RasterImage out;
  out.width = img.width;
  out.height = img.height;
  out.channels = 1;
  out.data.resize(static_cast<std::size_t>(img.width) * img.height);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const double r = img.data[3 * i];
    const double g = img.data[3 * i + 1];
    const double b = img.data[3 * i + 2];
    out.data[i] = 0.299 * r + 0.587 * g + 0.114 * b;
  }
  return out;
}

inline RealGrid image_to_grid(const RasterImage& img) {
  if (img.channels != 1) {
    throw std::invalid_argument("image_to_grid: image must be grayscale");
  }
  RealGrid g(img.width, img.height);
  g.data = img.data;
  return g;
}

inline RasterImage grid_to_image(const RealGrid& grid) {
  RasterImage img;
  img.width = grid.width;
  img.height = grid.height;
  img.channels = 1;
  img.data.resize(grid.data.size());
  for (std::size_t i = 0; i < grid.data.size(); ++i) {
    img.data[i] = std::clamp(grid.data[i], 0.0, 255.0);
  }
  return img;
}

inline RealGrid downsample_half(const RealGrid& grid) {
  if (grid.width < 2 || grid.height < 2) {
    throw std::invalid_argument("downsample_half: need at least 2x2 input");
  }
  RealGrid out(grid.width / 2, grid.height / 2);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      const double s = grid.at(2 * x, 2 * y) + grid.at(2 * x + 1, 2 * y) +
                       grid.at(2 * x, 2 * y + 1) +
                       grid.at(2 * x + 1, 2 * y + 1);
      out.at(x, y) = s * 0.25;
    }
  }
  return out;
}

// Corner-aligned bilinear resampling. Output values are convex combinations
// of input cells, so they never leave the input's [min, max] range.
inline RealGrid resize_bilinear(const RealGrid& grid, int out_w, int out_h) {
  if (grid.width < 1 || grid.height < 1) {
    throw std::invalid_argument("resize_bilinear: empty input");
  }
  if (out_w < 1 || out_h < 1) {
    throw std::invalid_argument("resize_bilinear: zero output dimension");
  }
  RealGrid out(out_w, out_h);
  const double sx =
      out_w > 1 ? static_cast<double>(grid.width - 1) / (out_w - 1) : 0.0;
  const double sy =
      out_h > 1 ? static_cast<double>(grid.height - 1) / (out_h - 1) : 0.0;
  for (int y = 0; y < out_h; ++y) {
    const double fy = y * sy;
    const int y0 = std::min(static_cast<int>(fy), grid.height - 1);
    const int y1 = std::min(y0 + 1, grid.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = x * sx;
      const int x0 = std::min(static_cast<int>(fx), grid.width - 1);
      const int x1 = std::min(x0 + 1, grid.width - 1);
      const double wx = fx - x0;
      const double top =
          grid.at(x0, y0) + wx * (grid.at(x1, y0) - grid.at(x0, y0));
      const double bot =
          grid.at(x0, y1) + wx * (grid.at(x1, y1) - grid.at(x0, y1));
      out.at(x, y) = top + wy * (bot - top);
    }
  }
  return out;
}

namespace detail {

// Mirror indexing with the edge sample repeated: -1 -> 0, n -> n-1.
inline int reflect_index(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return i;
}

inline std::vector<double> gaussian_kernel_1d(int radius, double sigma) {
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;
  return k;
}

inline RealGrid filter_separable(const RealGrid& grid,
                                 const std::vector<double>& kernel) {
  const int radius = static_cast<int>(kernel.size() / 2);
  RealGrid tmp(grid.width, grid.height);
  for (int y = 0; y < grid.height; ++y) {
    for (int x = 0; x < grid.width; ++x) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        s += kernel[i + radius] * grid.at(reflect_index(x + i, grid.width), y);
      }
      tmp.at(x, y) = s;
    }
  }
  RealGrid out(grid.width, grid.height);
  for (int y = 0; y < grid.height; ++y) {
    for (int x = 0; x < grid.width; ++x) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        s += kernel[i + radius] * tmp.at(x, reflect_index(y + i, grid.height));
      }
      out.at(x, y) = s;
    }
  }
  return out;
}

}  // namespace detail

// Separable Gaussian blur with mirrored borders; sigma <= 0 is a copy.
inline RealGrid gaussian_blur(const RealGrid& grid, double sigma) {
  if (sigma <= 0.0) return grid;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  return detail::filter_separable(grid,
                                  detail::gaussian_kernel_1d(radius, sigma));
}

}  // namespace grouprank

#include "grouprank/png.hpp"  // defines decode_png declared above
