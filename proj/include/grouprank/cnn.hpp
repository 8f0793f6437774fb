#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "grouprank/raster.hpp"
#include "grouprank/rng.hpp"

namespace grouprank {

// ---------------------------------------------------------------------------
// Small dense/conv stack with exact backpropagation. Everything is kept in
// doubles and every intermediate needed for gradients or attention maps is
// retained in the forward trace, so finite-difference checks can hold the
// implementation to 1e-4 relative error.
// ---------------------------------------------------------------------------

struct Tensor3 {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> v;

  Tensor3() = default;
  Tensor3(int c, int h, int w)
      : channels(c), height(h), width(w),
        v(static_cast<std::size_t>(c) * h * w, 0.0) {}

  double& at(int c, int y, int x) {
    return v[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  double at(int c, int y, int x) const {
    return v[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  std::size_t size() const { return v.size(); }
};

struct ConvSpec {
  int filters = 8;
  int kernel = 3;
  int stride = 1;
};

struct CnnConfig {
  int input_size = 64;                  // square input, values in [0, 1]
  std::vector<ConvSpec> conv = {{8, 3, 1}, {8, 3, 1}};
  std::vector<int> dense = {32, 1};     // widths, last must be 1
};

struct ConvLayer {
  int in_channels = 0;
  int filters = 0;
  int kernel = 0;
  int stride = 1;
  std::vector<double> weights;  // [filter][in_channel][ky][kx]
  std::vector<double> bias;     // [filter]

  double& w(int f, int c, int ky, int kx) {
    return weights[((static_cast<std::size_t>(f) * in_channels + c) * kernel +
                    ky) * kernel + kx];
  }
  double w(int f, int c, int ky, int kx) const {
    return weights[((static_cast<std::size_t>(f) * in_channels + c) * kernel +
                    ky) * kernel + kx];
  }
};

struct DenseLayer {
  int inputs = 0;
  int outputs = 0;
  std::vector<double> weights;  // [output][input]
  std::vector<double> bias;     // [output]

  double& w(int o, int i) {
    return weights[static_cast<std::size_t>(o) * inputs + i];
  }
  double w(int o, int i) const {
    return weights[static_cast<std::size_t>(o) * inputs + i];
  }
};

struct Cnn {
  CnnConfig config;
  std::vector<ConvLayer> conv;
  std::vector<DenseLayer> dense;

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : conv) n += l.weights.size() + l.bias.size();
    for (const auto& l : dense) n += l.weights.size() + l.bias.size();
    return n;
  }
};

namespace detail {

inline int conv_out_dim(int in, int kernel, int stride) {
  return (in - kernel) / stride + 1;
}

}  // namespace detail

// Validates the layer geometry and seeds Xavier-uniform weights.
inline Cnn make_cnn(const CnnConfig& cfg, std::uint64_t seed) {
  if (cfg.input_size < 1) {
    throw std::invalid_argument("make_cnn: input_size must be positive");
  }
  if (cfg.conv.empty()) {
    throw std::invalid_argument("make_cnn: need at least one conv layer");
  }
  if (cfg.dense.empty() || cfg.dense.back() != 1) {
    throw std::invalid_argument("make_cnn: dense widths must end in 1");
  }

  Cnn net;
  net.config = cfg;
  Rng rng(seed);

  int c = 1, h = cfg.input_size, w = cfg.input_size;
  for (const ConvSpec& spec : cfg.conv) {
    if (spec.filters < 1 || spec.kernel < 1 || spec.stride < 1) {
      throw std::invalid_argument("make_cnn: bad conv spec");
    }
    ConvLayer layer;
    layer.in_channels = c;
    layer.filters = spec.filters;
    layer.kernel = spec.kernel;
    layer.stride = spec.stride;
    layer.weights.resize(static_cast<std::size_t>(spec.filters) * c *
                         spec.kernel * spec.kernel);
    layer.bias.assign(spec.filters, 0.0);
    const double fan_in = static_cast<double>(c) * spec.kernel * spec.kernel;
    const double fan_out =
        static_cast<double>(spec.filters) * spec.kernel * spec.kernel;
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& x : layer.weights) x = rng.uniform(-limit, limit);
    net.conv.push_back(std::move(layer));

    h = detail::conv_out_dim(h, spec.kernel, spec.stride);
    w = detail::conv_out_dim(w, spec.kernel, spec.stride);
    if (h < 1 || w < 1) {
      throw std::invalid_argument("make_cnn: conv shrinks input below 1x1");
    }
    c = spec.filters;
    h /= 2;  // 2x2 max-pool after every conv block
    w /= 2;
    if (h < 1 || w < 1) {
      throw std::invalid_argument("make_cnn: pool shrinks input below 1x1");
    }
  }

  int in = c * h * w;
  for (int width_i : cfg.dense) {
    if (width_i < 1) {
      throw std::invalid_argument("make_cnn: bad dense width");
    }
    DenseLayer layer;
    layer.inputs = in;
    layer.outputs = width_i;
    layer.weights.resize(static_cast<std::size_t>(width_i) * in);
    layer.bias.assign(width_i, 0.0);
    const double limit = std::sqrt(6.0 / (in + width_i));
    for (double& x : layer.weights) x = rng.uniform(-limit, limit);
    net.dense.push_back(std::move(layer));
    in = width_i;
  }
  return net;
}

struct CnnTrace {
  Tensor3 input;
  std::vector<Tensor3> conv_pre;             // pre-activation per conv layer
  std::vector<Tensor3> conv_act;             // relu output per conv layer
  std::vector<Tensor3> pool_out;             // 2x2 max-pool output
  std::vector<std::vector<int>> pool_argmax;  // flat index into conv_act
  std::vector<std::vector<double>> dense_pre;
  std::vector<std::vector<double>> dense_act;  // relu output, hidden only
  double prediction = 0.0;

  // Feature maps the attention branch reads: last conv layer, post-ReLU.
  const Tensor3& final_maps() const { return conv_act.back(); }
};

inline CnnTrace cnn_forward(const Cnn& net, const RealGrid& input01) {
  if (input01.width != net.config.input_size ||
      input01.height != net.config.input_size) {
    throw std::invalid_argument(
        "cnn_forward: input is " + std::to_string(input01.width) + "x" +
        std::to_string(input01.height) + ", config wants " +
        std::to_string(net.config.input_size) + " square");
  }
  CnnTrace t;
  t.input = Tensor3(1, input01.height, input01.width);
  t.input.v = input01.data;

  const Tensor3* x = &t.input;
  for (const ConvLayer& layer : net.conv) {
    const int oh = detail::conv_out_dim(x->height, layer.kernel, layer.stride);
    const int ow = detail::conv_out_dim(x->width, layer.kernel, layer.stride);
    Tensor3 pre(layer.filters, oh, ow);
    for (int f = 0; f < layer.filters; ++f) {
      for (int y = 0; y < oh; ++y) {
        for (int xx = 0; xx < ow; ++xx) {
          double s = layer.bias[f];
          for (int c = 0; c < layer.in_channels; ++c) {
            for (int ky = 0; ky < layer.kernel; ++ky) {
              for (int kx = 0; kx < layer.kernel; ++kx) {
                s += layer.w(f, c, ky, kx) *
                     x->at(c, y * layer.stride + ky, xx * layer.stride + kx);
              }
            }
          }
          pre.at(f, y, xx) = s;
        }
      }
    }
    Tensor3 act = pre;
    for (double& v : act.v) v = v > 0.0 ? v : 0.0;

    const int ph = act.height / 2;
    const int pw = act.width / 2;
    Tensor3 pooled(act.channels, ph, pw);
    std::vector<int> argmax(pooled.size());
    for (int c = 0; c < act.channels; ++c) {
      for (int y = 0; y < ph; ++y) {
        for (int xx = 0; xx < pw; ++xx) {
          int best_idx = -1;
          double best = -1.0;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const int sy = 2 * y + dy, sx = 2 * xx + dx;
              const double v = act.at(c, sy, sx);
              if (best_idx < 0 || v > best) {
                best = v;
                best_idx = (c * act.height + sy) * act.width + sx;
              }
            }
          }
          pooled.at(c, y, xx) = best;
          argmax[(static_cast<std::size_t>(c) * ph + y) * pw + xx] = best_idx;
        }
      }
    }

    t.conv_pre.push_back(std::move(pre));
    t.conv_act.push_back(std::move(act));
    t.pool_out.push_back(std::move(pooled));
    t.pool_argmax.push_back(std::move(argmax));
    x = &t.pool_out.back();
  }

  std::vector<double> a(x->v);
  for (std::size_t i = 0; i < net.dense.size(); ++i) {
    const DenseLayer& layer = net.dense[i];
    if (static_cast<int>(a.size()) != layer.inputs) {
      throw std::logic_error("cnn_forward: dense input size mismatch");
    }
    std::vector<double> z(layer.outputs);
    for (int o = 0; o < layer.outputs; ++o) {
      double s = layer.bias[o];
      for (int in = 0; in < layer.inputs; ++in) s += layer.w(o, in) * a[in];
      z[o] = s;
    }
    t.dense_pre.push_back(z);
    if (i + 1 < net.dense.size()) {
      for (double& v : z) v = v > 0.0 ? v : 0.0;
      t.dense_act.push_back(z);
      a = std::move(z);
    } else {
      a = z;
    }
  }
  t.prediction = a[0];
  return t;
}

struct CnnGradients {
  std::vector<std::vector<double>> conv_weights;
  std::vector<std::vector<double>> conv_bias;
  std::vector<std::vector<double>> dense_weights;
  std::vector<std::vector<double>> dense_bias;

  static CnnGradients zeros_like(const Cnn& net) {
    CnnGradients g;
    for (const auto& l : net.conv) {
      g.conv_weights.emplace_back(l.weights.size(), 0.0);
      g.conv_bias.emplace_back(l.bias.size(), 0.0);
    }
    for (const auto& l : net.dense) {
      g.dense_weights.emplace_back(l.weights.size(), 0.0);
      g.dense_bias.emplace_back(l.bias.size(), 0.0);
    }
    return g;
  }

  void add_scaled(const CnnGradients& o, double s) {
    for (std::size_t i = 0; i < conv_weights.size(); ++i) {
      for (std::size_t j = 0; j < conv_weights[i].size(); ++j)
        conv_weights[i][j] += s * o.conv_weights[i][j];
      for (std::size_t j = 0; j < conv_bias[i].size(); ++j)
        conv_bias[i][j] += s * o.conv_bias[i][j];
    }
    for (std::size_t i = 0; i < dense_weights.size(); ++i) {
      for (std::size_t j = 0; j < dense_weights[i].size(); ++j)
        dense_weights[i][j] += s * o.dense_weights[i][j];
      for (std::size_t j = 0; j < dense_bias[i].size(); ++j)
        dense_bias[i][j] += s * o.dense_bias[i][j];
    }
  }
};

namespace detail {

// Backward through one conv layer: fills weight/bias grads and returns the
// delta w.r.t. the layer input.
inline Tensor3 conv_backward(const ConvLayer& layer, const Tensor3& input,
                             const Tensor3& delta_out,
                             std::vector<double>& grad_w,
                             std::vector<double>& grad_b) {
  Tensor3 delta_in(input.channels, input.height, input.width);
  for (int f = 0; f < layer.filters; ++f) {
    for (int y = 0; y < delta_out.height; ++y) {
      for (int x = 0; x < delta_out.width; ++x) {
        const double d = delta_out.at(f, y, x);
        if (d == 0.0) continue;
        grad_b[f] += d;
        for (int c = 0; c < layer.in_channels; ++c) {
          for (int ky = 0; ky < layer.kernel; ++ky) {
            for (int kx = 0; kx < layer.kernel; ++kx) {
              const int sy = y * layer.stride + ky;
              const int sx = x * layer.stride + kx;
              grad_w[((static_cast<std::size_t>(f) * layer.in_channels + c) *
                          layer.kernel + ky) * layer.kernel + kx] +=
                  d * input.at(c, sy, sx);
              delta_in.at(c, sy, sx) += d * layer.w(f, c, ky, kx);
            }
          }
        }
      }
    }
  }
  return delta_in;
}

// Scatter pooled deltas back to the argmax cells of the pre-pool tensor.
inline Tensor3 pool_backward(const Tensor3& act, const Tensor3& delta_pooled,
                             const std::vector<int>& argmax) {
  Tensor3 delta(act.channels, act.height, act.width);
  for (std::size_t i = 0; i < delta_pooled.v.size(); ++i) {
    delta.v[argmax[i]] += delta_pooled.v[i];
  }
  return delta;
}

// Backward from the prediction through the dense stack; returns the delta
// at the flattened conv output. Optionally accumulates parameter grads.
inline std::vector<double> dense_backward(const Cnn& net, const CnnTrace& t,
                                          double dLdy, CnnGradients* grads) {
  std::vector<double> delta = {dLdy};
  for (int i = static_cast<int>(net.dense.size()) - 1; i >= 0; --i) {
    const DenseLayer& layer = net.dense[i];
    const std::vector<double>& a_in =
        i == 0 ? t.pool_out.back().v : t.dense_act[i - 1];
    if (grads) {
      for (int o = 0; o < layer.outputs; ++o) {
        if (delta[o] == 0.0) continue;
        grads->dense_bias[i][o] += delta[o];
        for (int in = 0; in < layer.inputs; ++in) {
          grads->dense_weights[i][static_cast<std::size_t>(o) * layer.inputs +
                                  in] += delta[o] * a_in[in];
        }
      }
    }
    std::vector<double> delta_in(layer.inputs, 0.0);
    for (int o = 0; o < layer.outputs; ++o) {
      if (delta[o] == 0.0) continue;
      for (int in = 0; in < layer.inputs; ++in) {
        delta_in[in] += delta[o] * layer.w(o, in);
      }
    }
    if (i > 0) {
      for (int in = 0; in < layer.inputs; ++in) {
        if (t.dense_pre[i - 1][in] <= 0.0) delta_in[in] = 0.0;
      }
    }
    delta = std::move(delta_in);
  }
  return delta;
}

}  // namespace detail

// d(prediction)/dA for the last conv layer's post-ReLU feature maps. Walks
// only the dense stack and the final pool, leaving parameters untouched.
inline Tensor3 cnn_prediction_grad_final_maps(const Cnn& net,
                                              const CnnTrace& t) {
  const std::vector<double> flat_delta =
      detail::dense_backward(net, t, 1.0, nullptr);
  const Tensor3& pooled = t.pool_out.back();
  Tensor3 delta_pooled(pooled.channels, pooled.height, pooled.width);
  delta_pooled.v = flat_delta;
  return detail::pool_backward(t.conv_act.back(), delta_pooled,
                               t.pool_argmax.back());
}

// Full backward pass. dLdy seeds the prediction path; inject_final_act, when
// present, is added to the delta on the last conv layer's post-ReLU maps
// (the attention branch joins there). Dense parameter grads only ever see
// the dLdy path.
inline CnnGradients cnn_backward(const Cnn& net, const CnnTrace& t,
                                 double dLdy,
                                 const Tensor3* inject_final_act = nullptr) {
  CnnGradients grads = CnnGradients::zeros_like(net);
  const std::vector<double> flat_delta =
      detail::dense_backward(net, t, dLdy, &grads);

  const int last = static_cast<int>(net.conv.size()) - 1;
  const Tensor3& last_pool = t.pool_out[last];
  Tensor3 delta_pooled(last_pool.channels, last_pool.height, last_pool.width);
  delta_pooled.v = flat_delta;
  Tensor3 delta_act =
      detail::pool_backward(t.conv_act[last], delta_pooled,
                            t.pool_argmax[last]);
  if (inject_final_act) {
    if (inject_final_act->v.size() != delta_act.v.size()) {
      throw std::invalid_argument("cnn_backward: inject tensor shape mismatch");
    }
    for (std::size_t i = 0; i < delta_act.v.size(); ++i) {
      delta_act.v[i] += inject_final_act->v[i];
    }
  }

  for (int i = last; i >= 0; --i) {
    // ReLU mask, then conv backward to the block input.
    for (std::size_t j = 0; j < delta_act.v.size(); ++j) {
      if (t.conv_pre[i].v[j] <= 0.0) delta_act.v[j] = 0.0;
    }
    const Tensor3& input = i == 0 ? t.input : t.pool_out[i - 1];
    Tensor3 delta_in = detail::conv_backward(net.conv[i], input, delta_act,
                                             grads.conv_weights[i],
                                             grads.conv_bias[i]);
    if (i > 0) {
      delta_act = detail::pool_backward(t.conv_act[i - 1], delta_in,
                                        t.pool_argmax[i - 1]);
    }
  }
  return grads;
}

inline void cnn_apply_gradients(Cnn& net, const CnnGradients& g, double lr) {
  for (std::size_t i = 0; i < net.conv.size(); ++i) {
    for (std::size_t j = 0; j < net.conv[i].weights.size(); ++j)
      net.conv[i].weights[j] -= lr * g.conv_weights[i][j];
    for (std::size_t j = 0; j < net.conv[i].bias.size(); ++j)
      net.conv[i].bias[j] -= lr * g.conv_bias[i][j];
  }
  for (std::size_t i = 0; i < net.dense.size(); ++i) {
    for (std::size_t j = 0; j < net.dense[i].weights.size(); ++j)
      net.dense[i].weights[j] -= lr * g.dense_weights[i][j];
    for (std::size_t j = 0; j < net.dense[i].bias.size(); ++j)
      net.dense[i].bias[j] -= lr * g.dense_bias[i][j];
  }
}

// Flat views used by serialization and the finite-difference harness.
inline std::vector<double*> cnn_parameter_view(Cnn& net) {
  std::vector<double*> out;
  out.reserve(net.parameter_count());
  for (auto& l : net.conv) {
    for (double& v : l.weights) out.push_back(&v);
    for (double& v : l.bias) out.push_back(&v);
  }
  for (auto& l : net.dense) {
    for (double& v : l.weights) out.push_back(&v);
    for (double& v : l.bias) out.push_back(&v);
  }
  return out;
}

inline std::vector<double> cnn_gradient_flat(const Cnn& net,
                                             const CnnGradients& g) {
  std::vector<double> out;
  out.reserve(net.parameter_count());
  for (std::size_t i = 0; i < net.conv.size(); ++i) {
    out.insert(out.end(), g.conv_weights[i].begin(), g.conv_weights[i].end());
    out.insert(out.end(), g.conv_bias[i].begin(), g.conv_bias[i].end());
  }
  for (std::size_t i = 0; i < net.dense.size(); ++i) {
    out.insert(out.end(), g.dense_weights[i].begin(),
               g.dense_weights[i].end());
    out.insert(out.end(), g.dense_bias[i].begin(), g.dense_bias[i].end());
  }
  return out;
}

}  // namespace grouprank
