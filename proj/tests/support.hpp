#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "grouprank/raster.hpp"
#include "grouprank/rng.hpp"

namespace testsupport {

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    dir_ = std::filesystem::temp_directory_path() /
           ("grouprank_" + tag + "_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    std::filesystem::create_directories(dir_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(dir_, ec);
  }
  const std::filesystem::path& path() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

inline void write_file(const std::filesystem::path& p,
                       const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(p, std::ios::binary);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(f),
                                   std::istreambuf_iterator<char>());
}

// ---------------------------------------------------------------------------
// Independent MSCN oracle: direct O(n k^2) convolution with the same
// mirrored border rule, no separability shortcut.
// ---------------------------------------------------------------------------

inline grouprank::RealGrid mscn_oracle(const grouprank::RealGrid& img) {
  const int radius = 3;
  const double sigma = 7.0 / 6.0;
  std::vector<std::vector<double>> kernel(2 * radius + 1,
                                          std::vector<double>(2 * radius + 1));
  double sum = 0.0;
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      const double v =
          std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      kernel[dy + radius][dx + radius] = v;
      sum += v;
    }
  }
  for (auto& row : kernel) {
    for (double& v : row) v /= sum;
  }
  auto reflect = [](int i, int n) {
    while (i < 0 || i >= n) {
      if (i < 0) i = -i - 1;
      if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
  };
  grouprank::RealGrid out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double mu = 0.0, musq = 0.0;
      for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
          const double w = kernel[dy + radius][dx + radius];
          const double v =
              img.at(reflect(x + dx, img.width), reflect(y + dy, img.height));
          mu += w * v;
          musq += w * v * v;
        }
      }
      const double sigma_local = std::sqrt(std::abs(musq - mu * mu));
      out.at(x, y) = (img.at(x, y) - mu) / (sigma_local + 1.0);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Seeded samplers for known distributions (moment-fit ground truth).
// ---------------------------------------------------------------------------

inline double sample_gamma(grouprank::Rng& rng, double shape) {
  // Marsaglia-Tsang, with the boost trick below 1.
  if (shape < 1.0) {
    const double u = rng.uniform();
    return sample_gamma(rng, shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

// Draws from a zero-mean generalized Gaussian with the given shape and unit
// scale parameter.
inline std::vector<double> sample_ggd(std::uint64_t seed, double shape,
                                      std::size_t n) {
  grouprank::Rng rng(seed);
  std::vector<double> out(n);
  for (auto& v : out) {
    const double g = sample_gamma(rng, 1.0 / shape);
    const double mag = std::pow(g, 1.0 / shape);
    v = rng.uniform() < 0.5 ? -mag : mag;
  }
  return out;
}

inline std::vector<double> sample_laplace(std::uint64_t seed, std::size_t n) {
  grouprank::Rng rng(seed);
  std::vector<double> out(n);
  for (auto& v : out) {
    const double u = rng.uniform() - 0.5;
    v = -(u < 0 ? -1.0 : 1.0) * std::log(1.0 - 2.0 * std::abs(u));
  }
  return out;
}

inline std::vector<double> sample_normal(std::uint64_t seed, std::size_t n,
                                         double sigma = 1.0) {
  grouprank::Rng rng(seed);
  std::vector<double> out(n);
  for (auto& v : out) v = rng.normal(0.0, sigma);
  return out;
}

// ---------------------------------------------------------------------------
// Central finite differences over a parameter view.
// ---------------------------------------------------------------------------

inline std::vector<double> finite_difference(
    const std::vector<double*>& params, const std::function<double()>& loss,
    double h = 1e-5) {
  std::vector<double> g(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = *params[i];
    *params[i] = saved + h;
    const double up = loss();
    *params[i] = saved - h;
    const double down = loss();
    *params[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// Relative error with an absolute floor for near-zero gradients.
inline double grad_rel_error(double analytic, double numeric,
                             double abs_floor = 1e-7) {
  const double denom =
      std::max({std::abs(analytic), std::abs(numeric), abs_floor});
  return std::abs(analytic - numeric) / denom;
}

}  // namespace testsupport
