#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "grouprank/cnn.hpp"
#include "grouprank/raster.hpp"
#include "grouprank/rng.hpp"
#include "grouprank/serialize.hpp"

namespace grouprank {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Group-happiness channel: a small convolutional regressor whose conv stack
// is additionally pulled toward an externally supplied saliency map. The
// attention map is the ReLU of the gradient-weighted sum of the last conv
// layer's feature maps; the weight of each map is the spatial mean of the
// exact gradient of the prediction w.r.t. that map.
//
// Update rule per step: conv parameters descend on L_reg + lambda1 * L_sal,
// dense parameters descend on L_reg alone.
// ---------------------------------------------------------------------------

struct ScnnConfig {
  CnnConfig net;
  double eta = 1e-4;       // learning rate
  double lambda1 = 1e-3;   // saliency-loss weight
  int batch_size = 5;
  int epochs_phase1 = 20;  // regression-only phase
  int epochs_phase2 = 20;  // dual-loss phase
  std::uint64_t seed = 1;
};

struct ScnnModel {
  ScnnConfig config;
  Cnn net;
};

struct TrainingSample {
  RasterImage image;
  double label = 0.0;  // group-happiness intensity in [0, 5]
  std::optional<RasterImage> saliency;  // grayscale, same scene
};

// A sample after preprocessing: grayscale, resized to the network input,
// scaled to [0, 1]; the saliency target is resized to the attention map's
// resolution once, up front.
struct PreparedSample {
  RealGrid input;
  double label = 0.0;
  bool has_saliency = false;
  RealGrid saliency;  // attention-map resolution, values in [0, 1]
};

inline ScnnModel make_scnn(const ScnnConfig& cfg) {
  if (cfg.eta <= 0.0 || cfg.lambda1 < 0.0 || cfg.batch_size < 1) {
    throw std::invalid_argument("make_scnn: bad hyperparameters");
  }
  return ScnnModel{cfg, make_cnn(cfg.net, cfg.seed)};
}

// Spatial size of the attention map (the last conv layer's output).
inline std::pair<int, int> attention_resolution(const CnnConfig& cfg) {
  int h = cfg.input_size, w = cfg.input_size;
  for (std::size_t i = 0; i < cfg.conv.size(); ++i) {
    h = detail::conv_out_dim(h, cfg.conv[i].kernel, cfg.conv[i].stride);
    w = detail::conv_out_dim(w, cfg.conv[i].kernel, cfg.conv[i].stride);
    if (i + 1 < cfg.conv.size()) {
      h /= 2;
      w /= 2;
    }
  }
  return {h, w};
}

inline RealGrid preprocess_image(const RasterImage& img, int input_size) {
  RealGrid g = image_to_grid(to_grayscale(img));
  g = resize_bilinear(g, input_size, input_size);
  for (double& v : g.data) v /= 255.0;
  return g;
}

inline PreparedSample prepare_sample(const TrainingSample& s,
                                     const CnnConfig& cfg) {
  PreparedSample p;
  p.input = preprocess_image(s.image, cfg.input_size);
  p.label = s.label;
  if (s.saliency) {
    const auto [ah, aw] = attention_resolution(cfg);
    RealGrid sal = image_to_grid(to_grayscale(*s.saliency));
    for (double& v : sal.data) v /= 255.0;
    p.saliency = resize_bilinear(sal, aw, ah);
    p.has_saliency = true;
  }
  return p;
}

inline std::vector<PreparedSample> prepare_samples(
    std::span<const TrainingSample> samples, const CnnConfig& cfg) {
  std::vector<PreparedSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(prepare_sample(s, cfg));
  return out;
}

inline CnnTrace scnn_forward(const ScnnModel& model, const RasterImage& img) {
  return cnn_forward(model.net,
                     preprocess_image(img, model.config.net.input_size));
}

// Per-map weights w_k: spatial mean of d(prediction)/dA_k.
inline std::vector<double> attention_weights(const Cnn& net,
                                             const CnnTrace& trace) {
  const Tensor3 g = cnn_prediction_grad_final_maps(net, trace);
  std::vector<double> w(g.channels, 0.0);
  const double inv_area = 1.0 / (static_cast<double>(g.height) * g.width);
  for (int k = 0; k < g.channels; ++k) {
    double s = 0.0;
    for (int y = 0; y < g.height; ++y) {
      for (int x = 0; x < g.width; ++x) s += g.at(k, y, x);
    }
    w[k] = s * inv_area;
  }
  return w;
}

namespace detail {

constexpr double kFlatMapEps = 1e-12;

struct AttentionMap {
  RealGrid combined;    // Z = sum_k w_k A_k
  RealGrid normalized;  // ReLU(Z) min-max scaled to [0, 1]
  int argmax = -1;      // flat cell indices into the post-ReLU map
  int argmin = -1;
  double range = 0.0;   // max - min of the post-ReLU map
};

inline AttentionMap build_attention(const Tensor3& maps,
                                    std::span<const double> w) {
  AttentionMap am;
  am.combined = RealGrid(maps.width, maps.height);
  for (int k = 0; k < maps.channels; ++k) {
    if (w[k] == 0.0) continue;
    for (int y = 0; y < maps.height; ++y) {
      for (int x = 0; x < maps.width; ++x) {
        am.combined.at(x, y) += w[k] * maps.at(k, y, x);
      }
    }
  }
  RealGrid relu(maps.width, maps.height);
  for (std::size_t i = 0; i < am.combined.data.size(); ++i) {
    relu.data[i] = am.combined.data[i] > 0.0 ? am.combined.data[i] : 0.0;
  }
  am.argmax = 0;
  am.argmin = 0;
  double hi = relu.data[0];
  double lo = relu.data[0];
  for (std::size_t i = 1; i < relu.data.size(); ++i) {
    if (relu.data[i] > hi) {
      hi = relu.data[i];
      am.argmax = static_cast<int>(i);
    }
    if (relu.data[i] < lo) {
      lo = relu.data[i];
      am.argmin = static_cast<int>(i);
    }
  }
  am.range = hi - lo;
  am.normalized = RealGrid(maps.width, maps.height);
  if (am.range > kFlatMapEps) {
    for (std::size_t i = 0; i < relu.data.size(); ++i) {
      am.normalized.data[i] = (relu.data[i] - lo) / am.range;
    }
  }
  return am;
}

// Mean squared per-cell difference between the normalized attention map and
// the saliency target.
inline double saliency_loss_value(const AttentionMap& am,
                                  const RealGrid& target) {
  double s = 0.0;
  for (std::size_t i = 0; i < am.normalized.data.size(); ++i) {
    const double d = am.normalized.data[i] - target.data[i];
    s += d * d;
  }
  return s / static_cast<double>(am.normalized.data.size());
}

// d(saliency loss)/dA_k with the map weights treated as constants. The
// min-max normalization is differentiated exactly: the selected extremum
// cells pick up the correction terms.
inline Tensor3 saliency_loss_inject(const Tensor3& maps,
                                    std::span<const double> w,
                                    const AttentionMap& am,
                                    const RealGrid& target) {
  const std::size_t cells = am.normalized.data.size();
  std::vector<double> dM(cells, 0.0);
  if (am.range > kFlatMapEps) {
    const double inv_cells = 1.0 / static_cast<double>(cells);
    double sum_g = 0.0, sum_gs = 0.0;
    std::vector<double> g(cells);
    for (std::size_t i = 0; i < cells; ++i) {
      g[i] = 2.0 * (am.normalized.data[i] - target.data[i]) * inv_cells;
      sum_g += g[i];
      sum_gs += g[i] * am.normalized.data[i];
    }
    const double inv_range = 1.0 / am.range;
    for (std::size_t i = 0; i < cells; ++i) dM[i] = g[i] * inv_range;
    dM[am.argmax] -= sum_gs * inv_range;
    dM[am.argmin] += (sum_gs - sum_g) * inv_range;
  }
  Tensor3 inject(maps.channels, maps.height, maps.width);
  for (std::size_t i = 0; i < cells; ++i) {
    if (am.combined.data[i] <= 0.0) dM[i] = 0.0;  // ReLU gate
  }
  for (int k = 0; k < maps.channels; ++k) {
    if (w[k] == 0.0) continue;
    for (std::size_t i = 0; i < cells; ++i) {
      inject.v[static_cast<std::size_t>(k) * cells + i] = w[k] * dM[i];
    }
  }
  return inject;
}

}  // namespace detail

// The normalized attention map for a forward trace.
inline RealGrid attention_map(const Cnn& net, const CnnTrace& trace) {
  const std::vector<double> w = attention_weights(net, trace);
  return detail::build_attention(trace.final_maps(), w).normalized;
}

// Attention map with externally supplied per-map weights. The training step
// treats the weights as constants, and the finite-difference harness must
// evaluate the same function it differentiates.
inline RealGrid attention_map_with_weights(const CnnTrace& trace,
                                           std::span<const double> w) {
  return detail::build_attention(trace.final_maps(), w).normalized;
}

struct ScnnLosses {
  double l_reg = 0.0;
  double l_sal = 0.0;
};

// Batch losses with live attention weights.
inline ScnnLosses scnn_losses(const ScnnModel& model,
                              std::span<const PreparedSample> batch,
                              bool with_saliency) {
  if (batch.empty()) {
    throw std::invalid_argument("scnn_losses: empty batch");
  }
  ScnnLosses out;
  for (const auto& s : batch) {
    const CnnTrace t = cnn_forward(model.net, s.input);
    const double e = t.prediction - s.label;
    out.l_reg += e * e;
    if (with_saliency) {
      if (!s.has_saliency) {
        throw TrainingError("scnn_losses: sample is missing a saliency map");
      }
      const auto w = attention_weights(model.net, t);
      const auto am = detail::build_attention(t.final_maps(), w);
      out.l_sal += detail::saliency_loss_value(am, s.saliency);
    }
  }
  out.l_reg /= static_cast<double>(batch.size());
  out.l_sal /= static_cast<double>(batch.size());
  return out;
}

// L_reg + lambda1 * L_sal where the attention map of sample i is built with
// the provided frozen weights. This is the exact function one training step
// descends on, and the one gradient checks difference.
inline double scnn_batch_loss_frozen(
    const ScnnModel& model, std::span<const PreparedSample> batch,
    const std::vector<std::vector<double>>& frozen_w, double lambda1) {
  double l_reg = 0.0, l_sal = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const CnnTrace t = cnn_forward(model.net, batch[i].input);
    const double e = t.prediction - batch[i].label;
    l_reg += e * e;
    if (lambda1 != 0.0) {
      if (!batch[i].has_saliency) {
        throw TrainingError("scnn_batch_loss_frozen: missing saliency map");
      }
      const auto am = detail::build_attention(t.final_maps(), frozen_w[i]);
      l_sal += detail::saliency_loss_value(am, batch[i].saliency);
    }
  }
  const double n = static_cast<double>(batch.size());
  return l_reg / n + lambda1 * (l_sal / n);
}

struct ScnnBatchGradients {
  CnnGradients grads;  // conv entries: d(L_reg + lambda1 L_sal); dense: dL_reg
  ScnnLosses losses;
  std::vector<std::vector<double>> attention_weights;  // per sample
};

inline ScnnBatchGradients scnn_batch_gradients(
    const ScnnModel& model, std::span<const PreparedSample> batch, int phase) {
  if (batch.empty()) {
    throw std::invalid_argument("scnn_batch_gradients: empty batch");
  }
  if (phase != 1 && phase != 2) {
    throw std::invalid_argument("scnn_batch_gradients: phase must be 1 or 2");
  }
  const double n = static_cast<double>(batch.size());
  const double lambda1 = model.config.lambda1;
  ScnnBatchGradients out;
  out.grads = CnnGradients::zeros_like(model.net);

  for (const auto& s : batch) {
    const CnnTrace t = cnn_forward(model.net, s.input);
    const double err = t.prediction - s.label;
    out.losses.l_reg += err * err;
    const double dLdy = 2.0 * err / n;

    Tensor3 inject;
    const Tensor3* inject_ptr = nullptr;
    if (phase == 2) {
      if (!s.has_saliency) {
        throw TrainingError(
            "scnn phase 2: sample is missing a saliency map");
      }
      auto w = attention_weights(model.net, t);
      const auto am = detail::build_attention(t.final_maps(), w);
      const double l_sal_i = detail::saliency_loss_value(am, s.saliency);
      out.losses.l_sal += l_sal_i;
      inject = detail::saliency_loss_inject(t.final_maps(), w, am, s.saliency);
      if (lambda1 != 0.0) {
        const double scale = lambda1 / n;
        for (double& v : inject.v) v *= scale;
        inject_ptr = &inject;
      }
      out.attention_weights.push_back(std::move(w));
    }
    const CnnGradients g = cnn_backward(model.net, t, dLdy, inject_ptr);
    out.grads.add_scaled(g, 1.0);
  }
  out.losses.l_reg /= n;
  out.losses.l_sal /= n;
  if (!std::isfinite(out.losses.l_reg) || !std::isfinite(out.losses.l_sal)) {
    throw TrainingError("scnn training diverged: non-finite loss");
  }
  return out;
}

// One SGD step; returns the batch losses measured before the update.
inline ScnnLosses scnn_train_step(ScnnModel& model,
                                  std::span<const PreparedSample> batch,
                                  int phase) {
  ScnnBatchGradients bg = scnn_batch_gradients(model, batch, phase);
  cnn_apply_gradients(model.net, bg.grads, model.config.eta);
  return bg.losses;
}

struct EpochStats {
  int epoch = 0;
  int phase = 1;
  double l_reg = 0.0;
  double l_sal = 0.0;
};

// Two-phase training: epochs_phase1 on L_reg alone, then epochs_phase2 with
// the saliency branch switched on. Deterministic under a fixed seed.
inline std::vector<EpochStats> scnn_train(
    ScnnModel& model, std::span<const PreparedSample> samples) {
  if (samples.empty()) {
    throw std::invalid_argument("scnn_train: empty dataset");
  }
  const ScnnConfig& cfg = model.config;
  if (cfg.epochs_phase2 > 0) {
    for (const auto& s : samples) {
      if (!s.has_saliency) {
        throw TrainingError(
            "scnn_train: phase 2 requested but a sample lacks a saliency map");
      }
    }
  }
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<EpochStats> history;
  int epoch_no = 0;
  for (int phase : {1, 2}) {
    const int epochs = phase == 1 ? cfg.epochs_phase1 : cfg.epochs_phase2;
    for (int e = 0; e < epochs; ++e) {
      rng.shuffle(order);
      EpochStats stats;
      stats.epoch = epoch_no++;
      stats.phase = phase;
      int batches = 0;
      std::vector<PreparedSample> batch;
      for (std::size_t i = 0; i < order.size();) {
        batch.clear();
        for (int b = 0; b < cfg.batch_size && i < order.size(); ++b, ++i) {
          batch.push_back(samples[order[i]]);
        }
        const ScnnLosses l = scnn_train_step(model, batch, phase);
        stats.l_reg += l.l_reg;
        stats.l_sal += l.l_sal;
        ++batches;
      }
      stats.l_reg /= batches;
      stats.l_sal /= batches;
      history.push_back(stats);
    }
  }
  return history;
}

inline std::vector<EpochStats> scnn_train_images(
    ScnnModel& model, std::span<const TrainingSample> samples) {
  const auto prepared = prepare_samples(samples, model.config.net);
  return scnn_train(model, prepared);
}

// Channel score in [0, 1]: prediction on the 0-5 happiness scale divided by
// 5 and clamped.
inline double predict_emotion(const ScnnModel& model, const RasterImage& img) {
  const CnnTrace t = scnn_forward(model, img);
  return std::clamp(t.prediction / 5.0, 0.0, 1.0);
}

inline double evaluate_mae(const ScnnModel& model,
                           std::span<const TrainingSample> samples) {
  if (samples.empty()) {
    throw std::invalid_argument("evaluate_mae: empty dataset");
  }
  double s = 0.0;
  for (const auto& sample : samples) {
    const CnnTrace t = scnn_forward(model, sample.image);
    s += std::abs(t.prediction - sample.label);
  }
  return s / static_cast<double>(samples.size());
}

// ---------------------------------------------------------------------------
// Serialization: config first, then parameters layer by layer.
// ---------------------------------------------------------------------------

namespace detail {

inline void write_cnn(ModelWriter& w, const Cnn& net) {
  w.scalar_int("input_size", net.config.input_size);
  w.scalar_int("conv_layers", static_cast<long long>(net.config.conv.size()));
  for (const auto& spec : net.config.conv) {
    w.text("conv", std::to_string(spec.filters) + " " +
                       std::to_string(spec.kernel) + " " +
                       std::to_string(spec.stride));
  }
  w.scalar_int("dense_layers",
               static_cast<long long>(net.config.dense.size()));
  for (int d : net.config.dense) w.scalar_int("dense", d);
  for (std::size_t i = 0; i < net.conv.size(); ++i) {
    w.block("conv" + std::to_string(i) + "_weights", net.conv[i].weights);
    w.block("conv" + std::to_string(i) + "_bias", net.conv[i].bias);
  }
  for (std::size_t i = 0; i < net.dense.size(); ++i) {
    w.block("dense" + std::to_string(i) + "_weights", net.dense[i].weights);
    w.block("dense" + std::to_string(i) + "_bias", net.dense[i].bias);
  }
}

inline Cnn read_cnn(ModelReader& r) {
  CnnConfig cfg;
  cfg.input_size = static_cast<int>(r.scalar_int("input_size"));
  const int n_conv = static_cast<int>(r.scalar_int("conv_layers"));
  cfg.conv.clear();
  for (int i = 0; i < n_conv; ++i) {
    const std::string line = r.text("conv");
    ConvSpec spec;
    if (std::sscanf(line.c_str(), "%d %d %d", &spec.filters, &spec.kernel,
                    &spec.stride) != 3) {
      throw SerializationError("bad conv spec line: " + line);
    }
    cfg.conv.push_back(spec);
  }
  const int n_dense = static_cast<int>(r.scalar_int("dense_layers"));
  cfg.dense.clear();
  for (int i = 0; i < n_dense; ++i) {
    cfg.dense.push_back(static_cast<int>(r.scalar_int("dense")));
  }
  Cnn net = make_cnn(cfg, 0);
  for (std::size_t i = 0; i < net.conv.size(); ++i) {
    auto w = r.block("conv" + std::to_string(i) + "_weights");
    auto b = r.block("conv" + std::to_string(i) + "_bias");
    if (w.size() != net.conv[i].weights.size() ||
        b.size() != net.conv[i].bias.size()) {
      throw SerializationError("conv parameter block size mismatch");
    }
    net.conv[i].weights = std::move(w);
    net.conv[i].bias = std::move(b);
  }
  for (std::size_t i = 0; i < net.dense.size(); ++i) {
    auto w = r.block("dense" + std::to_string(i) + "_weights");
    auto b = r.block("dense" + std::to_string(i) + "_bias");
    if (w.size() != net.dense[i].weights.size() ||
        b.size() != net.dense[i].bias.size()) {
      throw SerializationError("dense parameter block size mismatch");
    }
    net.dense[i].weights = std::move(w);
    net.dense[i].bias = std::move(b);
  }
  return net;
}

}  // namespace detail

inline std::string scnn_to_string(const ScnnModel& m) {
  ModelWriter w("emotion-scnn");
  w.scalar("eta", m.config.eta);
  w.scalar("lambda1", m.config.lambda1);
  w.scalar_int("batch_size", m.config.batch_size);
  w.scalar_int("epochs_phase1", m.config.epochs_phase1);
  w.scalar_int("epochs_phase2", m.config.epochs_phase2);
  w.scalar_int("seed", static_cast<long long>(m.config.seed));
  detail::write_cnn(w, m.net);
  return w.str();
}

inline void save_scnn(const ScnnModel& m, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw SerializationError("cannot write " + path.string());
  f << scnn_to_string(m);
}

inline ScnnModel load_scnn(const std::filesystem::path& path) {
  ModelReader r = ModelReader::from_file(path, "emotion-scnn");
  ScnnModel m;
  m.config.eta = r.scalar("eta");
  m.config.lambda1 = r.scalar("lambda1");
  m.config.batch_size = static_cast<int>(r.scalar_int("batch_size"));
  m.config.epochs_phase1 = static_cast<int>(r.scalar_int("epochs_phase1"));
  m.config.epochs_phase2 = static_cast<int>(r.scalar_int("epochs_phase2"));
  m.config.seed = static_cast<std::uint64_t>(r.scalar_int("seed"));
  m.net = detail::read_cnn(r);
  m.config.net = m.net.config;
  return m;
}

}  // namespace grouprank
