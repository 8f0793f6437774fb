#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "grouprank/raster.hpp"

namespace grouprank {

namespace detail {

inline std::uint32_t be32(const std::uint8_t* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) |
         (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | p[3];
}

inline int paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a);
  const int pb = std::abs(p - b);
  const int pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

}  // namespace detail

// Minimal PNG reader: 8-bit grayscale (color type 0) and truecolor (type 2),
// non-interlaced. Palette and alpha layouts are rejected with distinct
// errors rather than converted.
inline RasterImage decode_png(const std::vector<std::uint8_t>& bytes) {
  using Kind = DecodeError::Kind;
  static const std::uint8_t kSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a,
                                       '\n'};
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kSig, 8) != 0) {
    throw DecodeError(Kind::bad_magic, "png: bad signature");
  }

  std::size_t i = 8;
  bool have_header = false;
  std::uint32_t width = 0, height = 0;
  int channels = 0;
  std::vector<std::uint8_t> idat;

  while (i + 8 <= bytes.size()) {
    const std::uint32_t len = detail::be32(&bytes[i]);
    if (i + 12 + static_cast<std::size_t>(len) > bytes.size()) {
      throw DecodeError(Kind::truncated_payload, "png: chunk runs past EOF");
    }
    const char* type = reinterpret_cast<const char*>(&bytes[i + 4]);
    const std::uint8_t* data = &bytes[i + 8];

    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) {
        throw DecodeError(Kind::malformed_header, "png: IHDR length != 13");
      }
      width = detail::be32(data);
      height = detail::be32(data + 4);
      const int depth = data[8];
      const int color = data[9];
      const int interlace = data[12];
      if (width == 0 || height == 0 || data[10] != 0 || data[11] != 0) {
        throw DecodeError(Kind::malformed_header, "png: invalid IHDR fields");
      }
      if (depth != 8) {
        throw DecodeError(Kind::unsupported_depth,
                          "png: only 8-bit samples are supported, got depth " +
                              std::to_string(depth));
      }
      if (color == 0) {
        channels = 1;
      } else if (color == 2) {
        channels = 3;
      } else if (color == 4 || color == 6) {
        throw DecodeError(Kind::unsupported_color,
                          "png: alpha channels are not supported");
      } else {
        throw DecodeError(Kind::unsupported_color,
                          "png: unsupported color type " +
                              std::to_string(color));
      }
      if (interlace != 0) {
        throw DecodeError(Kind::unsupported_interlace,
                          "png: interlaced images are not supported");
      }
      have_header = true;
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      if (!have_header) {
        throw DecodeError(Kind::malformed_header, "png: IDAT before IHDR");
      }
      idat.insert(idat.end(), data, data + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    i += 12 + len;
  }

  if (!have_header) {
    throw DecodeError(Kind::malformed_header, "png: missing IHDR");
  }
  if (idat.empty()) {
    throw DecodeError(Kind::truncated_payload, "png: no IDAT data");
  }

  const std::size_t stride = static_cast<std::size_t>(width) * channels;
  const std::size_t raw_size = (stride + 1) * height;
  std::vector<std::uint8_t> raw(raw_size);
  uLongf dest_len = static_cast<uLongf>(raw_size);
  const int zrc = uncompress(raw.data(), &dest_len, idat.data(),
                             static_cast<uLong>(idat.size()));
  if (zrc != Z_OK || dest_len != raw_size) {
    throw DecodeError(Kind::truncated_payload,
                      "png: IDAT inflate failed or is short");
  }

  RasterImage img;
  img.width = static_cast<int>(width);
  img.height = static_cast<int>(height);
  img.channels = channels;
  img.data.resize(stride * height);

  std::vector<std::uint8_t> prev(stride, 0), cur(stride, 0);
  const int bpp = channels;  // bytes per pixel at depth 8
  for (std::uint32_t y = 0; y < height; ++y) {
    const std::uint8_t* line = &raw[(stride + 1) * y];
    const int filter = line[0];
    const std::uint8_t* src = line + 1;
    for (std::size_t x = 0; x < stride; ++x) {
      const int a = x >= static_cast<std::size_t>(bpp) ? cur[x - bpp] : 0;
      const int b = prev[x];
      const int c = x >= static_cast<std::size_t>(bpp) ? prev[x - bpp] : 0;
      int v = src[x];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: v += detail::paeth(a, b, c); break;
        default:
          throw DecodeError(Kind::truncated_payload,
                            "png: invalid scanline filter " +
                                std::to_string(filter));
      }
      cur[x] = static_cast<std::uint8_t>(v & 0xff);
    }
    for (std::size_t x = 0; x < stride; ++x) {
      img.data[stride * y + x] = static_cast<double>(cur[x]);
    }
    std::swap(prev, cur);
  }
  return img;
}

}  // namespace grouprank
