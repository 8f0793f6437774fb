#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "grouprank/gamma.hpp"
#include "grouprank/raster.hpp"
#include "grouprank/rng.hpp"
#include "grouprank/serialize.hpp"

namespace grouprank {

// ---------------------------------------------------------------------------
// No-reference quality channel: natural-scene statistics of locally
// normalized luminance, generalized-Gaussian moment fits, and a linear
// epsilon-insensitive regressor over the resulting 36 features.
// ---------------------------------------------------------------------------

struct MscnMap {
  RealGrid mscn;
  RealGrid horizontal;      // mscn(x, y) * mscn(x+1, y)
  RealGrid vertical;        // mscn(x, y) * mscn(x, y+1)
  RealGrid diag_main;       // mscn(x, y) * mscn(x+1, y+1)
  RealGrid diag_secondary;  // mscn(x+1, y) * mscn(x, y+1)
};

struct GgdFit {
  double shape = 0.0;
  double variance = 0.0;
};

struct AggdFit {
  double shape = 0.0;
  double sigma_left = 0.0;
  double sigma_right = 0.0;
  double mean_offset = 0.0;
};

struct QualityFeatures {
  std::array<double, 36> values{};
};

namespace detail {

constexpr int kMscnWindowRadius = 3;       // 7x7 window
constexpr double kMscnSigma = 7.0 / 6.0;   // window spread
constexpr double kMscnC = 1.0;             // saturation constant
constexpr double kShapeGridLo = 0.05;
constexpr double kShapeGridHi = 10.0;
constexpr double kShapeGridStep = 0.001;

// r(beta) = gamma(1/b) gamma(3/b) / gamma(2/b)^2, precomputed over the
// search grid once; both moment fits index into it.
inline const std::vector<double>& shape_ratio_grid() {
  static const std::vector<double> grid = [] {
    std::vector<double> g;
    const int n = static_cast<int>(
        std::round((kShapeGridHi - kShapeGridLo) / kShapeGridStep)) + 1;
    g.reserve(n);
    for (int i = 0; i < n; ++i) {
      const double b = kShapeGridLo + i * kShapeGridStep;
      const double g1 = lanczos_gamma(1.0 / b);
      const double g2 = lanczos_gamma(2.0 / b);
      const double g3 = lanczos_gamma(3.0 / b);
      g.push_back(g1 * g3 / (g2 * g2));
    }
    return g;
  }();
  return grid;
}

inline double shape_at(int idx) { return kShapeGridLo + idx * kShapeGridStep; }

inline int best_shape_index(double target_ratio) {
  const auto& grid = shape_ratio_grid();
  int best = 0;
  double best_err = std::abs(grid[0] - target_ratio);
  for (int i = 1; i < static_cast<int>(grid.size()); ++i) {
    const double err = std::abs(grid[i] - target_ratio);
    if (err < best_err) {
      best_err = err;
      best = i;
    }
  }
  return best;
}

}  // namespace detail

// MSCN of a luminance grid: (I - mu) / (sigma + C), mu and sigma taken under
// a unit-sum 7x7 Gaussian window, plus the four neighbor-product grids.
inline MscnMap compute_mscn_grid(const RealGrid& grid) {
  if (grid.width < 2 * detail::kMscnWindowRadius + 1 ||
      grid.height < 2 * detail::kMscnWindowRadius + 1) {
    throw std::invalid_argument(
        "compute_mscn: image smaller than the 7x7 window");
  }
  const auto kernel = detail::gaussian_kernel_1d(detail::kMscnWindowRadius,
                                                 detail::kMscnSigma);
  const RealGrid mu = detail::filter_separable(grid, kernel);
  RealGrid sq(grid.width, grid.height);
  for (std::size_t i = 0; i < grid.data.size(); ++i) {
    sq.data[i] = grid.data[i] * grid.data[i];
  }
  const RealGrid musq = detail::filter_separable(sq, kernel);

  MscnMap map;
  map.mscn = RealGrid(grid.width, grid.height);
  for (std::size_t i = 0; i < grid.data.size(); ++i) {
    const double var = musq.data[i] - mu.data[i] * mu.data[i];
    const double sigma = std::sqrt(std::abs(var));
    map.mscn.data[i] = (grid.data[i] - mu.data[i]) / (sigma + detail::kMscnC);
  }

  const int w = grid.width, h = grid.height;
  map.horizontal = RealGrid(w - 1, h);
  map.vertical = RealGrid(w, h - 1);
  map.diag_main = RealGrid(w - 1, h - 1);
  map.diag_secondary = RealGrid(w - 1, h - 1);
  const RealGrid& m = map.mscn;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x + 1 < w; ++x) {
      map.horizontal.at(x, y) = m.at(x, y) * m.at(x + 1, y);
    }
  }
  for (int y = 0; y + 1 < h; ++y) {
    for (int x = 0; x < w; ++x) {
      map.vertical.at(x, y) = m.at(x, y) * m.at(x, y + 1);
    }
  }
  for (int y = 0; y + 1 < h; ++y) {
    for (int x = 0; x + 1 < w; ++x) {
      map.diag_main.at(x, y) = m.at(x, y) * m.at(x + 1, y + 1);
      map.diag_secondary.at(x, y) = m.at(x + 1, y) * m.at(x, y + 1);
    }
  }
  return map;
}

inline MscnMap compute_mscn(const RasterImage& img) {
  if (img.channels != 1) {
    throw std::invalid_argument("compute_mscn: image must be grayscale");
  }
  return compute_mscn_grid(image_to_grid(img));
}

// Symmetric generalized-Gaussian moment fit. The shape comes from matching
// E[x^2]/E[|x|]^2 against r(beta) over a fixed grid; the variance is the
// second moment itself.
inline GgdFit fit_ggd(std::span<const double> samples) {
  if (samples.empty()) {
    throw std::invalid_argument("fit_ggd: empty sample set");
  }
  double m1 = 0.0, m2 = 0.0;
  double lo = samples[0], hi = samples[0];
  for (double x : samples) {
    m1 += std::abs(x);
    m2 += x * x;
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  m1 /= static_cast<double>(samples.size());
  m2 /= static_cast<double>(samples.size());
  if (hi == lo) {
    throw std::invalid_argument("fit_ggd: degenerate (all-equal) samples");
  }
  const double ratio = m2 / (m1 * m1);
  GgdFit fit;
  fit.shape = detail::shape_at(detail::best_shape_index(ratio));
  fit.variance = m2;
  return fit;
}

// Asymmetric fit: per-side second moments, shape from the gamma-corrected
// moment ratio, and the analytic mean offset of the fitted density.
inline AggdFit fit_aggd(std::span<const double> samples) {
  if (samples.empty()) {
    throw std::invalid_argument("fit_aggd: empty sample set");
  }
  double neg_sq = 0.0, pos_sq = 0.0;
  std::size_t n_neg = 0, n_pos = 0;
  double m1 = 0.0, m2 = 0.0;
  for (double x : samples) {
    if (x < 0.0) {
      neg_sq += x * x;
      ++n_neg;
    } else if (x > 0.0) {
      pos_sq += x * x;
      ++n_pos;
    }
    m1 += std::abs(x);
    m2 += x * x;
  }
  if (n_neg == 0 || n_pos == 0) {
    throw std::invalid_argument(
        "fit_aggd: one-sided samples (need both signs)");
  }
  m1 /= static_cast<double>(samples.size());
  m2 /= static_cast<double>(samples.size());

  AggdFit fit;
  fit.sigma_left = std::sqrt(neg_sq / static_cast<double>(n_neg));
  fit.sigma_right = std::sqrt(pos_sq / static_cast<double>(n_pos));
  const double g = fit.sigma_left / fit.sigma_right;
  const double rhat = (m1 * m1) / m2;
  const double rhat_norm =
      rhat * (g * g * g + 1.0) * (g + 1.0) / ((g * g + 1.0) * (g * g + 1.0));
  // The grid stores r = 1/R, so match the reciprocal.
  const int idx = detail::best_shape_index(1.0 / rhat_norm);
  fit.shape = detail::shape_at(idx);
  const double a = fit.shape;
  fit.mean_offset = (fit.sigma_right - fit.sigma_left) *
                    lanczos_gamma(2.0 / a) /
                    std::sqrt(lanczos_gamma(1.0 / a) * lanczos_gamma(3.0 / a));
  return fit;
}

namespace detail {

inline void append_scale_features(const MscnMap& map, double* out) {
  const GgdFit ggd = fit_ggd(map.mscn.data);
  out[0] = ggd.shape;
  out[1] = ggd.variance;
  const RealGrid* products[4] = {&map.horizontal, &map.vertical,
                                 &map.diag_main, &map.diag_secondary};
  for (int p = 0; p < 4; ++p) {
    const AggdFit fit = fit_aggd(products[p]->data);
    out[2 + 4 * p + 0] = fit.shape;
    out[2 + 4 * p + 1] = fit.mean_offset;
    out[2 + 4 * p + 2] = fit.sigma_left * fit.sigma_left;
    out[2 + 4 * p + 3] = fit.sigma_right * fit.sigma_right;
  }
}

}  // namespace detail

// 36 features: 18 per scale (GGD shape and variance of the MSCN map, then
// AGGD shape / mean offset / left variance / right variance for each of the
// four neighbor products), at full and half resolution.
inline QualityFeatures extract_features(const RasterImage& gray) {
  if (gray.channels != 1) {
    throw std::invalid_argument("extract_features: image must be grayscale");
  }
  if (std::min(gray.width, gray.height) < 14) {
    throw std::invalid_argument(
        "extract_features: need at least 14 pixels per side for two scales");
  }
  QualityFeatures f;
  RealGrid grid = image_to_grid(gray);
  detail::append_scale_features(compute_mscn_grid(grid), f.values.data());
  grid = downsample_half(grid);
  detail::append_scale_features(compute_mscn_grid(grid), f.values.data() + 18);
  for (double v : f.values) {
    if (!std::isfinite(v)) {
      throw std::runtime_error("extract_features: non-finite feature value");
    }
  }
  return f;
}

// ---------------------------------------------------------------------------
// Linear epsilon-insensitive regressor over min-max normalized features.
// ---------------------------------------------------------------------------

struct SvrConfig {
  double epsilon = 0.1;
  double lambda = 1e-3;   // L2 penalty
  double learning_rate = 0.3;
  int epochs = 400;
  std::uint64_t seed = 1;
};

struct QualityModel {
  std::array<double, 36> weights{};
  double bias = 0.0;
  std::array<double, 36> feature_min{};
  std::array<double, 36> feature_max{};
  double score_lo = 0.0;  // raw-score bounds seen on the training set
  double score_hi = 1.0;
  bool trained = false;
};

namespace detail {

inline std::array<double, 36> normalize_features(const QualityModel& m,
                                                 const QualityFeatures& f) {
  std::array<double, 36> out{};
  for (int i = 0; i < 36; ++i) {
    const double range = m.feature_max[i] - m.feature_min[i];
    out[i] = range > 0.0
                 ? -1.0 + 2.0 * (f.values[i] - m.feature_min[i]) / range
                 : 0.0;
  }
  return out;
}

}  // namespace detail

inline double predict_quality_raw(const QualityModel& model,
                                  const QualityFeatures& f) {
  const auto x = detail::normalize_features(model, f);
  double s = model.bias;
  for (int i = 0; i < 36; ++i) s += model.weights[i] * x[i];
  return s;
}

// Channel score in [0, 1]: raw score min-max normalized with the bounds
// recorded at training time, clamped for out-of-range inputs.
inline double predict_quality(const QualityModel& model,
                              const QualityFeatures& f) {
  const double raw = predict_quality_raw(model, f);
  const double range = model.score_hi - model.score_lo;
  if (range <= 0.0) return 0.5;
  return std::clamp((raw - model.score_lo) / range, 0.0, 1.0);
}

inline QualityModel train_quality_model(
    const std::vector<QualityFeatures>& features,
    const std::vector<double>& scores, const SvrConfig& cfg = {}) {
  if (features.empty() || features.size() != scores.size()) {
    throw std::invalid_argument(
        "train_quality_model: empty or mismatched training set");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) {
      throw std::invalid_argument("train_quality_model: non-finite score");
    }
  }
  QualityModel model;
  model.feature_min = features[0].values;
  model.feature_max = features[0].values;
  for (const auto& f : features) {
    for (int i = 0; i < 36; ++i) {
      model.feature_min[i] = std::min(model.feature_min[i], f.values[i]);
      model.feature_max[i] = std::max(model.feature_max[i], f.values[i]);
    }
  }

  std::vector<std::array<double, 36>> x;
  x.reserve(features.size());
  for (const auto& f : features) {
    x.push_back(detail::normalize_features(model, f));
  }

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(x.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Harmonic decay lets the sign subgradient settle inside the tube.
    const double lr = cfg.learning_rate / (1.0 + epoch);
    rng.shuffle(order);
    for (std::size_t idx : order) {
      double pred = model.bias;
      for (int i = 0; i < 36; ++i) pred += model.weights[i] * x[idx][i];
      const double err = pred - scores[idx];
      const double g = std::abs(err) > cfg.epsilon ? (err > 0 ? 1.0 : -1.0)
                                                   : 0.0;
      for (int i = 0; i < 36; ++i) {
        model.weights[i] -=
            lr * (g * x[idx][i] + 2.0 * cfg.lambda * model.weights[i]);
      }
      model.bias -= lr * g;
    }
  }

  model.score_lo = predict_quality_raw(model, features[0]);
  model.score_hi = model.score_lo;
  for (const auto& f : features) {
    const double raw = predict_quality_raw(model, f);
    model.score_lo = std::min(model.score_lo, raw);
    model.score_hi = std::max(model.score_hi, raw);
  }
  model.trained = true;
  return model;
}

// ---------------------------------------------------------------------------
// Model file: version tag, 36 min bounds, 36 max bounds, 37 weights (36 +
// bias), score bounds; one value per line at full precision.
// ---------------------------------------------------------------------------

inline std::string quality_model_to_string(const QualityModel& m) {
  ModelWriter w("quality-svr");
  w.comment("feature order, repeated at full and half scale:");
  w.comment("ggd shape, ggd variance, then for each neighbor product");
  w.comment("(horizontal, vertical, main diagonal, secondary diagonal):");
  w.comment("aggd shape, mean offset, left variance, right variance");
  w.block("feature_min",
          std::vector<double>(m.feature_min.begin(), m.feature_min.end()));
  w.block("feature_max",
          std::vector<double>(m.feature_max.begin(), m.feature_max.end()));
  std::vector<double> weights(m.weights.begin(), m.weights.end());
  weights.push_back(m.bias);
  w.block("weights", weights);
  w.block("score_bounds", {m.score_lo, m.score_hi});
  return w.str();
}

inline void save_quality_model(const QualityModel& m,
                               const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw SerializationError("cannot write " + path.string());
  f << quality_model_to_string(m);
}

inline QualityModel load_quality_model(const std::filesystem::path& path) {
  ModelReader r = ModelReader::from_file(path, "quality-svr");
  QualityModel m;
  const auto mins = r.block("feature_min");
  const auto maxs = r.block("feature_max");
  const auto weights = r.block("weights");
  const auto bounds = r.block("score_bounds");
  if (mins.size() != 36 || maxs.size() != 36 || weights.size() != 37 ||
      bounds.size() != 2) {
    throw SerializationError("quality model: wrong block sizes");
  }
  std::copy(mins.begin(), mins.end(), m.feature_min.begin());
  std::copy(maxs.begin(), maxs.end(), m.feature_max.begin());
  std::copy(weights.begin(), weights.begin() + 36, m.weights.begin());
  m.bias = weights[36];
  m.score_lo = bounds[0];
  m.score_hi = bounds[1];
  m.trained = true;
  return m;
}

}  // namespace grouprank
