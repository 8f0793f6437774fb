#include "grouprank/raster.hpp"

#include <zlib.h>

#include <cstdint>
#include <vector>

#include "gtest/gtest.h"
#include "support.hpp"

using namespace grouprank;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& s) {
  return std::vector<std::uint8_t>(s.begin(), s.end());
}

// Builds a PNG from scratch per the public spec: signature, IHDR, one IDAT
// with zlib-compressed filtered scanlines, IEND. Independent of decode_png.
void push_be32(std::vector<std::uint8_t>& v, std::uint32_t x) {
  v.push_back((x >> 24) & 0xff);
  v.push_back((x >> 16) & 0xff);
  v.push_back((x >> 8) & 0xff);
  v.push_back(x & 0xff);
}

void push_chunk(std::vector<std::uint8_t>& png, const char type[5],
                const std::vector<std::uint8_t>& data) {
  push_be32(png, static_cast<std::uint32_t>(data.size()));
  std::vector<std::uint8_t> body(type, type + 4);
  body.insert(body.end(), data.begin(), data.end());
  png.insert(png.end(), body.begin(), body.end());
  push_be32(png, static_cast<std::uint32_t>(
                     crc32(0, body.data(), static_cast<uInt>(body.size()))));
}

std::vector<std::uint8_t> make_png(int w, int h, int color_type, int depth,
                                   int interlace,
                                   const std::vector<std::uint8_t>& raw,
                                   bool truncate_idat = false) {
  std::vector<std::uint8_t> png = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a,
                                   '\n'};
  std::vector<std::uint8_t> ihdr;
  push_be32(ihdr, static_cast<std::uint32_t>(w));
  push_be32(ihdr, static_cast<std::uint32_t>(h));
  ihdr.push_back(static_cast<std::uint8_t>(depth));
  ihdr.push_back(static_cast<std::uint8_t>(color_type));
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(static_cast<std::uint8_t>(interlace));
  push_chunk(png, "IHDR", ihdr);

  uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> comp(comp_len);
  EXPECT_EQ(Z_OK, compress(comp.data(), &comp_len, raw.data(),
                           static_cast<uLong>(raw.size())));
  comp.resize(truncate_idat ? comp_len / 2 : comp_len);
  push_chunk(png, "IDAT", comp);
  push_chunk(png, "IEND", {});
  return png;
}

// Scanlines with filter 0 on every row.
std::vector<std::uint8_t> raw_scanlines(int w, int h, int channels,
                                        const std::vector<std::uint8_t>& px) {
  std::vector<std::uint8_t> raw;
  for (int y = 0; y < h; ++y) {
    raw.push_back(0);
    raw.insert(raw.end(), px.begin() + static_cast<std::size_t>(y) * w * channels,
               px.begin() + static_cast<std::size_t>(y + 1) * w * channels);
  }
  return raw;
}

}  // namespace

TEST(RasterDecode, MinimalPgm) {
  auto bytes = bytes_of("P5\n2 2\n255\n");
  bytes.insert(bytes.end(), {0, 64, 128, 255});
  const RasterImage img = decode_image(bytes, ImageFormat::pgm);
  EXPECT_EQ(img.width, 2);
  EXPECT_EQ(img.height, 2);
  EXPECT_EQ(img.channels, 1);
  ASSERT_EQ(img.data.size(), 4u);
  EXPECT_EQ(img.data[0], 0.0);
  EXPECT_EQ(img.data[1], 64.0);
  EXPECT_EQ(img.data[2], 128.0);
  EXPECT_EQ(img.data[3], 255.0);
}

TEST(RasterDecode, MinimalPpm) {
  auto bytes = bytes_of("P6\n2 2\n255\n");
  for (int i = 0; i < 12; ++i) bytes.push_back(static_cast<std::uint8_t>(i));
  const RasterImage img = decode_image(bytes, ImageFormat::ppm);
  EXPECT_EQ(img.channels, 3);
  EXPECT_EQ(img.data.size(), 12u);
  EXPECT_EQ(img.data[7], 7.0);
}

TEST(RasterDecode, TruncatedPayload) {
  auto bytes = bytes_of("P5\n4 4\n255\n");
  for (int i = 0; i < 8; ++i) bytes.push_back(1);
  try {
    decode_image(bytes, ImageFormat::pgm);
    FAIL() << "expected DecodeError";
  } catch (const DecodeError& e) {
    EXPECT_EQ(e.kind(), DecodeError::Kind::truncated_payload);
  }
}

TEST(RasterDecode, MalformedHeaderAndDepth) {
  try {
    decode_image(bytes_of("P5\nabc\n"), ImageFormat::pgm);
    FAIL();
  } catch (const DecodeError& e) {
    EXPECT_EQ(e.kind(), DecodeError::Kind::malformed_header);
  }
  auto deep = bytes_of("P5\n2 2\n65535\n");
  deep.resize(deep.size() + 8, 0);
  try {
    decode_image(deep, ImageFormat::pgm);
    FAIL();
  } catch (const DecodeError& e) {
    EXPECT_EQ(e.kind(), DecodeError::Kind::unsupported_depth);
  }
  try {
    decode_image(bytes_of("P6\n1 1\n255\nxxx"), ImageFormat::pgm);
    FAIL();
  } catch (const DecodeError& e) {
    EXPECT_EQ(e.kind(), DecodeError::Kind::bad_magic);
  }
}

TEST(RasterDecode, PnmRoundTripBitIdentical) {
  Rng rng(7);
  for (int channels : {1, 3}) {
    RasterImage img;
    img.width = 9;
    img.height = 5;
    img.channels = channels;
    img.data.resize(static_cast<std::size_t>(9) * 5 * channels);
    for (double& v : img.data) {
      v = static_cast<double>(rng.index(256));
    }
    const auto bytes = channels == 1 ? encode_pgm(img) : encode_ppm(img);
    const RasterImage back = decode_image(
        bytes, channels == 1 ? ImageFormat::pgm : ImageFormat::ppm);
    EXPECT_EQ(back.width, img.width);
    EXPECT_EQ(back.height, img.height);
    EXPECT_EQ(back.data, img.data);
    // encode(decode(encode(x))) is also byte-stable
    const auto bytes2 =
        channels == 1 ? encode_pgm(back) : encode_ppm(back);
    EXPECT_EQ(bytes, bytes2);
  }
}

TEST(RasterDecode, PngGray) {
  const std::vector<std::uint8_t> px = {10, 20, 30, 40, 50, 60};
  const auto png = make_png(3, 2, 0, 8, 0, raw_scanlines(3, 2, 1, px));
  const RasterImage img = decode_image(png, ImageFormat::png);
  EXPECT_EQ(img.width, 3);
  EXPECT_EQ(img.height, 2);
  EXPECT_EQ(img.channels, 1);
  for (int i = 0; i < 6; ++i) EXPECT_EQ(img.data[i], px[i]);
}

TEST(RasterDecode, PngRgbAllFilters) {
  // 2x5 RGB with one scanline per filter type; expected pixels derived by
  // applying the filter definitions forward in the test itself.
  const int w = 2, h = 5, ch = 3;
  std::vector<std::uint8_t> px(static_cast<std::size_t>(w) * h * ch);
  for (std::size_t i = 0; i < px.size(); ++i) {
    px[i] = static_cast<std::uint8_t>((i * 37 + 11) % 256);
  }
  std::vector<std::uint8_t> raw;
  std::vector<std::uint8_t> prev(static_cast<std::size_t>(w) * ch, 0);
  auto paeth = [](int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
  };
  for (int y = 0; y < h; ++y) {
    const int filter = y % 5;
    raw.push_back(static_cast<std::uint8_t>(filter));
    std::vector<std::uint8_t> cur(px.begin() + static_cast<std::size_t>(y) * w * ch,
                                  px.begin() + static_cast<std::size_t>(y + 1) * w * ch);
    for (std::size_t x = 0; x < cur.size(); ++x) {
      const int a = x >= static_cast<std::size_t>(ch) ? cur[x - ch] : 0;
      const int b = prev[x];
      const int c = x >= static_cast<std::size_t>(ch) ? prev[x - ch] : 0;
      int enc = cur[x];
      switch (filter) {
        case 0: break;
        case 1: enc -= a; break;
        case 2: enc -= b; break;
        case 3: enc -= (a + b) / 2; break;
        case 4: enc -= paeth(a, b, c); break;
      }
      raw.push_back(static_cast<std::uint8_t>(enc & 0xff));
    }
    prev = cur;
  }
  const auto png = make_png(w, h, 2, 8, 0, raw);
  const RasterImage img = decode_image(png, ImageFormat::png);
  EXPECT_EQ(img.channels, 3);
  ASSERT_EQ(img.data.size(), px.size());
  for (std::size_t i = 0; i < px.size(); ++i) {
    EXPECT_EQ(img.data[i], static_cast<double>(px[i])) << "at " << i;
  }
}

TEST(RasterDecode, PngRejectsUnsupportedLayouts) {
  const std::vector<std::uint8_t> px = {1, 2, 3, 4};
  const auto raw = raw_scanlines(2, 2, 1, px);
  try {
    decode_image(make_png(2, 2, 4, 8, 0, raw), ImageFormat::png);
    FAIL();
  } catch (const DecodeError& e) {
    EXPECT_EQ(e.kind(), DecodeError::Kind::unsupported_color);
  }
  try {
    decode_image(make_png(2, 2, 0, 16, 0, raw), ImageFormat::png);
    FAIL();
  } catch (const DecodeError& e) {
    EXPECT_EQ(e.kind(), DecodeError::Kind::unsupported_depth);
  }
  try {
    decode_image(make_png(2, 2, 0, 8, 1, raw), ImageFormat::png);
    FAIL();
  } catch (const DecodeError& e) {
    EXPECT_EQ(e.kind(), DecodeError::Kind::unsupported_interlace);
  }
  try {
    decode_image(make_png(2, 2, 0, 8, 0, raw, /*truncate_idat=*/true),
                 ImageFormat::png);
    FAIL();
  } catch (const DecodeError& e) {
    EXPECT_EQ(e.kind(), DecodeError::Kind::truncated_payload);
  }
}

TEST(Grayscale, WeightsAndIdentity) {
  RasterImage rgb;
  rgb.width = 2;
  rgb.height = 1;
  rgb.channels = 3;
  rgb.data = {255, 255, 255, 255, 0, 0};
  const RasterImage gray = to_grayscale(rgb);
  EXPECT_DOUBLE_EQ(gray.data[0], 255.0);
  EXPECT_NEAR(gray.data[1], 76.245, 1e-12);

  RasterImage g1;
  g1.width = 2;
  g1.height = 2;
  g1.channels = 1;
  g1.data = {0.5, 100.25, 7, 255};
  const RasterImage g2 = to_grayscale(g1);
  EXPECT_EQ(g1.data, g2.data);
}

TEST(Grayscale, RangeProperty) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    RasterImage rgb;
    rgb.width = 4;
    rgb.height = 3;
    rgb.channels = 3;
    rgb.data.resize(36);
    for (double& v : rgb.data) v = rng.uniform(0.0, 255.0);
    const RasterImage gray = to_grayscale(rgb);
    for (double v : gray.data) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 255.0);
    }
  }
}

TEST(Downsample, BasicAndOracle) {
  RealGrid g(2, 2);
  g.data = {0, 2, 4, 6};
  const RealGrid half = downsample_half(g);
  EXPECT_EQ(half.width, 1);
  EXPECT_EQ(half.height, 1);
  EXPECT_DOUBLE_EQ(half.data[0], 3.0);

  RealGrid c(6, 4, 3.25);
  const RealGrid ch = downsample_half(c);
  for (double v : ch.data) EXPECT_DOUBLE_EQ(v, 3.25);

  // 4x4 ramp against independent block averaging.
  RealGrid ramp(4, 4);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) ramp.at(x, y) = y * 4 + x;
  }
  const RealGrid down = downsample_half(ramp);
  for (int y = 0; y < 2; ++y) {
    for (int x = 0; x < 2; ++x) {
      double mean = 0.0;
      for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) mean += ramp.at(2 * x + dx, 2 * y + dy);
      }
      EXPECT_DOUBLE_EQ(down.at(x, y), mean / 4.0);
    }
  }

  RealGrid tiny(1, 3, 0.0);
  EXPECT_THROW(downsample_half(tiny), std::invalid_argument);
}

TEST(Downsample, PreservesMeanOnEvenGrids) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    RealGrid g(8, 6);
    for (double& v : g.data) v = rng.uniform(-10.0, 10.0);
    const RealGrid half = downsample_half(g);
    double m1 = 0.0, m2 = 0.0;
    for (double v : g.data) m1 += v;
    for (double v : half.data) m2 += v;
    EXPECT_NEAR(m1 / g.data.size(), m2 / half.data.size(), 1e-9);
  }
}

TEST(Resize, IdentityConstantMidpoint) {
  Rng rng(5);
  RealGrid g(5, 4);
  for (double& v : g.data) v = rng.uniform(-3.0, 9.0);
  const RealGrid same = resize_bilinear(g, 5, 4);
  EXPECT_EQ(same.data, g.data);

  RealGrid c(3, 3, 2.5);
  const RealGrid big = resize_bilinear(c, 7, 2);
  for (double v : big.data) EXPECT_DOUBLE_EQ(v, 2.5);

  RealGrid two(2, 1);
  two.data = {0.0, 10.0};
  const RealGrid three = resize_bilinear(two, 3, 1);
  ASSERT_EQ(three.data.size(), 3u);
  EXPECT_DOUBLE_EQ(three.data[0], 0.0);
  EXPECT_DOUBLE_EQ(three.data[1], 5.0);
  EXPECT_DOUBLE_EQ(three.data[2], 10.0);

  EXPECT_THROW(resize_bilinear(g, 0, 4), std::invalid_argument);
}

TEST(Resize, StaysWithinInputRange) {
  Rng rng(13);
  for (int trial = 0; trial < 30; ++trial) {
    RealGrid g(3 + static_cast<int>(rng.index(6)),
               2 + static_cast<int>(rng.index(6)));
    double lo = 1e300, hi = -1e300;
    for (double& v : g.data) {
      v = rng.uniform(-50.0, 50.0);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const RealGrid r = resize_bilinear(g, 1 + static_cast<int>(rng.index(9)),
                                       1 + static_cast<int>(rng.index(9)));
    for (double v : r.data) {
      EXPECT_GE(v, lo - 1e-12);
      EXPECT_LE(v, hi + 1e-12);
    }
  }
}
