#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "grouprank/cnn.hpp"
#include "grouprank/raster.hpp"
#include "grouprank/rng.hpp"
#include "grouprank/scnn.hpp"
#include "grouprank/serialize.hpp"

namespace grouprank {

// ---------------------------------------------------------------------------
// Aesthetics channel. Same backbone family as the emotion network, trained
// in siamese fashion: both towers share one parameter set, and the batch
// loss is the regression error over all images plus a margin hinge over
// each labeled pair:
//
//   L = L_reg + lambda2 / (2N) * sum_pairs max(0, alpha - d(yi,yj)(pi - pj))
// ---------------------------------------------------------------------------

struct AestheticsConfig {
  CnnConfig net;
  double lambda2 = 1.0;  // ranking-loss weight
  double alpha = 0.5;    // margin
  double eta = 1e-4;
  int batch_pairs = 5;
  int epochs = 20;
  std::uint64_t seed = 1;
};

struct AestheticsModel {
  AestheticsConfig config;
  Cnn net;
  double raw_lo = 0.0;  // raw-score bounds over the training set
  double raw_hi = 1.0;
  bool trained = false;
};

struct AestheticPair {
  RasterImage image_a;
  RasterImage image_b;
  double score_a = 0.0;
  double score_b = 0.0;
};

struct PreparedPair {
  RealGrid a;
  RealGrid b;
  double score_a = 0.0;
  double score_b = 0.0;
};

inline AestheticsModel make_aesthetics(const AestheticsConfig& cfg) {
  if (cfg.alpha < 0.0 || cfg.lambda2 < 0.0 || cfg.eta <= 0.0 ||
      cfg.batch_pairs < 1) {
    throw std::invalid_argument("make_aesthetics: bad hyperparameters");
  }
  return AestheticsModel{cfg, make_cnn(cfg.net, cfg.seed)};
}

// Order indicator: +1 when the first label is at least the second.
inline int aesthetics_delta(double y_i, double y_j) {
  return y_i >= y_j ? 1 : -1;
}

inline double pair_loss(double pred_i, double pred_j, double y_i, double y_j,
                        double alpha) {
  const double v =
      alpha - aesthetics_delta(y_i, y_j) * (pred_i - pred_j);
  return v > 0.0 ? v : 0.0;
}

inline PreparedPair prepare_pair(const AestheticPair& p,
                                 const CnnConfig& cfg) {
  return PreparedPair{preprocess_image(p.image_a, cfg.input_size),
                      preprocess_image(p.image_b, cfg.input_size), p.score_a,
                      p.score_b};
}

inline std::vector<PreparedPair> prepare_pairs(
    std::span<const AestheticPair> pairs, const CnnConfig& cfg) {
  std::vector<PreparedPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(prepare_pair(p, cfg));
  return out;
}

// All unordered pairs of a labeled image group, the ordering unit being a
// photo set. Orientation within the pair is irrelevant: the delta function
// reads the labels.
inline std::vector<AestheticPair> make_pairs_exhaustive(
    std::span<const RasterImage> images, std::span<const double> scores) {
  if (images.size() != scores.size()) {
    throw std::invalid_argument("make_pairs_exhaustive: size mismatch");
  }
  std::vector<AestheticPair> out;
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (std::size_t j = i + 1; j < images.size(); ++j) {
      out.push_back({images[i], images[j], scores[i], scores[j]});
    }
  }
  return out;
}

inline double aesthetics_batch_loss(const AestheticsModel& model,
                                    std::span<const PreparedPair> pairs) {
  if (pairs.empty()) {
    throw std::invalid_argument("aesthetics_batch_loss: empty batch");
  }
  const double two_n = 2.0 * static_cast<double>(pairs.size());
  double l_reg = 0.0, l_rank = 0.0;
  for (const auto& p : pairs) {
    const double pa = cnn_forward(model.net, p.a).prediction;
    const double pb = cnn_forward(model.net, p.b).prediction;
    l_reg += (pa - p.score_a) * (pa - p.score_a) +
             (pb - p.score_b) * (pb - p.score_b);
    l_rank += pair_loss(pa, pb, p.score_a, p.score_b, model.config.alpha);
  }
  return l_reg / two_n + model.config.lambda2 / two_n * l_rank;
}

struct AestheticsBatchGradients {
  CnnGradients grads;
  double loss = 0.0;
};

inline AestheticsBatchGradients aesthetics_batch_gradients(
    const AestheticsModel& model, std::span<const PreparedPair> pairs) {
  if (pairs.empty()) {
    throw std::invalid_argument("aesthetics_batch_gradients: empty batch");
  }
  const double two_n = 2.0 * static_cast<double>(pairs.size());
  const double lambda2 = model.config.lambda2;
  AestheticsBatchGradients out;
  out.grads = CnnGradients::zeros_like(model.net);

  double l_reg = 0.0, l_rank = 0.0;
  for (const auto& p : pairs) {
    const CnnTrace ta = cnn_forward(model.net, p.a);
    const CnnTrace tb = cnn_forward(model.net, p.b);
    const double ea = ta.prediction - p.score_a;
    const double eb = tb.prediction - p.score_b;
    l_reg += ea * ea + eb * eb;

    double dLda = 2.0 * ea / two_n;
    double dLdb = 2.0 * eb / two_n;
    const int d = aesthetics_delta(p.score_a, p.score_b);
    const double hinge =
        model.config.alpha - d * (ta.prediction - tb.prediction);
    if (hinge > 0.0) {
      l_rank += hinge;
      dLda += lambda2 / two_n * (-d);
      dLdb += lambda2 / two_n * d;
    }
    out.grads.add_scaled(cnn_backward(model.net, ta, dLda), 1.0);
    out.grads.add_scaled(cnn_backward(model.net, tb, dLdb), 1.0);
  }
  out.loss = l_reg / two_n + lambda2 / two_n * l_rank;
  if (!std::isfinite(out.loss)) {
    throw TrainingError("aesthetics training diverged: non-finite loss");
  }
  return out;
}

// Seeded SGD over pair batches; records per-epoch mean batch loss and the
// raw-score bounds of the training images for channel normalization.
inline std::vector<double> train_aesthetics(
    AestheticsModel& model, std::span<const PreparedPair> pairs) {
  if (pairs.empty()) {
    throw std::invalid_argument("train_aesthetics: no training pairs");
  }
  const AestheticsConfig& cfg = model.config;
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<double> epoch_loss;
  std::vector<PreparedPair> batch;
  for (int e = 0; e < cfg.epochs; ++e) {
    rng.shuffle(order);
    double total = 0.0;
    int batches = 0;
    for (std::size_t i = 0; i < order.size();) {
      batch.clear();
      for (int b = 0; b < cfg.batch_pairs && i < order.size(); ++b, ++i) {
        batch.push_back(pairs[order[i]]);
      }
      const auto bg = aesthetics_batch_gradients(model, batch);
      cnn_apply_gradients(model.net, bg.grads, cfg.eta);
      total += bg.loss;
      ++batches;
    }
    epoch_loss.push_back(total / batches);
  }

  model.raw_lo = std::numeric_limits<double>::infinity();
  model.raw_hi = -std::numeric_limits<double>::infinity();
  for (const auto& p : pairs) {
    for (const RealGrid* g : {&p.a, &p.b}) {
      const double s = cnn_forward(model.net, *g).prediction;
      model.raw_lo = std::min(model.raw_lo, s);
      model.raw_hi = std::max(model.raw_hi, s);
    }
  }
  model.trained = true;
  return epoch_loss;
}

inline std::vector<double> train_aesthetics_images(
    AestheticsModel& model, std::span<const AestheticPair> pairs) {
  const auto prepared = prepare_pairs(pairs, model.config.net);
  return train_aesthetics(model, prepared);
}

inline double predict_aesthetics_raw(const AestheticsModel& model,
                                     const RasterImage& img) {
  return cnn_forward(model.net,
                     preprocess_image(img, model.config.net.input_size))
      .prediction;
}

// Channel score in [0, 1] through the min-max bounds recorded over the
// training set; out-of-range raw scores clamp to the endpoints.
inline double predict_aesthetics(const AestheticsModel& model,
                                 const RasterImage& img) {
  const double raw = predict_aesthetics_raw(model, img);
  const double range = model.raw_hi - model.raw_lo;
  if (range <= 0.0) return 0.5;
  return std::clamp((raw - model.raw_lo) / range, 0.0, 1.0);
}

inline std::string aesthetics_to_string(const AestheticsModel& m) {
  ModelWriter w("aesthetics-siamese");
  w.scalar("lambda2", m.config.lambda2);
  w.scalar("alpha", m.config.alpha);
  w.scalar("eta", m.config.eta);
  w.scalar_int("batch_pairs", m.config.batch_pairs);
  w.scalar_int("epochs", m.config.epochs);
  w.scalar_int("seed", static_cast<long long>(m.config.seed));
  w.block("raw_bounds", {m.raw_lo, m.raw_hi});
  detail::write_cnn(w, m.net);
  return w.str();
}

inline void save_aesthetics(const AestheticsModel& m,
                            const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw SerializationError("cannot write " + path.string());
  f << aesthetics_to_string(m);
}

inline AestheticsModel load_aesthetics(const std::filesystem::path& path) {
  ModelReader r = ModelReader::from_file(path, "aesthetics-siamese");
  AestheticsModel m;
  m.config.lambda2 = r.scalar("lambda2");
  m.config.alpha = r.scalar("alpha");
  m.config.eta = r.scalar("eta");
  m.config.batch_pairs = static_cast<int>(r.scalar_int("batch_pairs"));
  m.config.epochs = static_cast<int>(r.scalar_int("epochs"));
  m.config.seed = static_cast<std::uint64_t>(r.scalar_int("seed"));
  const auto bounds = r.block("raw_bounds");
  if (bounds.size() != 2) {
    throw SerializationError("aesthetics model: bad raw_bounds block");
  }
  m.raw_lo = bounds[0];
  m.raw_hi = bounds[1];
  m.net = detail::read_cnn(r);
  m.config.net = m.net.config;
  m.trained = true;
  return m;
}

}  // namespace grouprank
