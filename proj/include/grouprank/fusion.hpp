#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "grouprank/rng.hpp"
#include "grouprank/scnn.hpp"  // TrainingError
#include "grouprank/serialize.hpp"

namespace grouprank {

// ---------------------------------------------------------------------------
// Channel fusion: each normalized channel score is paired with its square,
// giving the 6-dim vector [e, e^2, a, a^2, q, q^2] the rankers consume.
// ---------------------------------------------------------------------------

struct ChannelScores {
  double emotion = 0.0;
  double aesthetics = 0.0;
  double quality = 0.0;
};

using FusionVector = std::array<double, 6>;

inline FusionVector fuse(const ChannelScores& s) {
  for (double v : {s.emotion, s.aesthetics, s.quality}) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw std::invalid_argument(
          "fuse: channel scores must lie in [0, 1], got " +
          format_double(v));
    }
  }
  return {s.emotion,    s.emotion * s.emotion,
          s.aesthetics, s.aesthetics * s.aesthetics,
          s.quality,    s.quality * s.quality};
}

// Rank positions (1 = best) from per-image scores, sorted descending; equal
// scores resolve in input order so every output is a strict permutation.
inline std::vector<int> ranks_from_scores(std::span<const double> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  std::vector<int> ranks(scores.size());
  for (std::size_t pos = 0; pos < idx.size(); ++pos) {
    ranks[idx[pos]] = static_cast<int>(pos) + 1;
  }
  return ranks;
}

enum class PoolMode { mean, max };

inline double pooled_score(const ChannelScores& s, PoolMode mode) {
  if (mode == PoolMode::mean) {
    return (s.emotion + s.aesthetics + s.quality) / 3.0;
  }
  return std::max({s.emotion, s.aesthetics, s.quality});
}

inline std::vector<int> pool_rank(std::span<const ChannelScores> set_scores,
                                  PoolMode mode) {
  if (set_scores.size() < 2) {
    throw std::invalid_argument("pool_rank: need at least 2 images");
  }
  std::vector<double> s;
  s.reserve(set_scores.size());
  for (const auto& c : set_scores) s.push_back(pooled_score(c, mode));
  return ranks_from_scores(s);
}

// ---------------------------------------------------------------------------
// rankSVM: linear scorer trained on the pairwise hinge reduction
//   sum max(0, 1 - w . (k_pref - k_other)) + reg_lambda ||w||^2
// ---------------------------------------------------------------------------

struct RankSvmConfig {
  double reg_lambda = 1e-3;
  double learning_rate = 0.1;
  int epochs = 200;
  std::uint64_t seed = 1;
};

struct RankSvmModel {
  FusionVector weights{};
  RankSvmConfig config;
  bool trained = false;
};

inline double ranksvm_score(const RankSvmModel& m, const FusionVector& k) {
  double s = 0.0;
  for (int i = 0; i < 6; ++i) s += m.weights[i] * k[i];
  return s;
}

// Pairs are (preferred, other).
using RankPair = std::pair<FusionVector, FusionVector>;

inline RankSvmModel train_ranksvm(
    std::span<const RankPair> pairs, const RankSvmConfig& cfg = {},
    const std::optional<FusionVector>& init = std::nullopt) {
  if (pairs.empty()) {
    throw std::invalid_argument("train_ranksvm: no training pairs");
  }
  RankSvmModel m;
  m.config = cfg;
  if (init) m.weights = *init;
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  for (int e = 0; e < cfg.epochs; ++e) {
    const double lr = cfg.learning_rate / (1.0 + 0.1 * e);
    rng.shuffle(order);
    for (std::size_t idx : order) {
      const auto& [pref, other] = pairs[idx];
      FusionVector diff{};
      for (int i = 0; i < 6; ++i) diff[i] = pref[i] - other[i];
      double margin = 0.0;
      for (int i = 0; i < 6; ++i) margin += m.weights[i] * diff[i];
      for (int i = 0; i < 6; ++i) {
        double g = 2.0 * cfg.reg_lambda * m.weights[i];
        if (margin < 1.0) g -= diff[i];
        m.weights[i] -= lr * g;
      }
    }
  }
  for (double w : m.weights) {
    if (!std::isfinite(w)) {
      throw TrainingError("train_ranksvm diverged: non-finite weights");
    }
  }
  m.trained = true;
  return m;
}

// ---------------------------------------------------------------------------
// rankNet: linear(in -> 3), ReLU, linear(3 -> 1), ReLU; scored per image and
// trained in siamese fashion on max(0, alpha - (s_pref - s_other)). The
// input is the 6-dim fused vector by default, with a 3-dim mode that feeds
// the raw channel scores instead.
// ---------------------------------------------------------------------------

struct RankNetConfig {
  int input_dim = 6;  // 6 = fused vector, 3 = raw channel scores
  double alpha = 0.5;
  double learning_rate = 1e-5;
  int epochs = 100;
  int batch_pairs = 5;
  std::uint64_t seed = 1;
};

struct RankNetModel {
  RankNetConfig config;
  std::vector<double> w1;  // [3][input_dim]
  std::array<double, 3> b1{};
  std::array<double, 3> w2{};
  double b2 = 0.0;
  bool trained = false;
};

// Positive initialization keeps the output ReLU live at the start.
inline RankNetModel make_ranknet(const RankNetConfig& cfg) {
  if (cfg.input_dim != 6 && cfg.input_dim != 3) {
    throw std::invalid_argument("make_ranknet: input_dim must be 3 or 6");
  }
  RankNetModel m;
  m.config = cfg;
  m.w1.resize(static_cast<std::size_t>(3) * cfg.input_dim);
  Rng rng(cfg.seed);
  for (double& v : m.w1) v = rng.uniform(0.01, 0.1);
  for (double& v : m.b1) v = 0.1;
  for (double& v : m.w2) v = rng.uniform(0.01, 0.1);
  m.b2 = 0.1;
  return m;
}

inline double ranknet_forward(const RankNetModel& m,
                              std::span<const double> kappa) {
  if (static_cast<int>(kappa.size()) != m.config.input_dim) {
    throw std::invalid_argument("ranknet_forward: input dimension mismatch");
  }
  double out = m.b2;
  for (int h = 0; h < 3; ++h) {
    double z = m.b1[h];
    for (int i = 0; i < m.config.input_dim; ++i) {
      z += m.w1[static_cast<std::size_t>(h) * m.config.input_dim + i] *
           kappa[i];
    }
    out += m.w2[h] * (z > 0.0 ? z : 0.0);
  }
  return out > 0.0 ? out : 0.0;
}

namespace detail {

struct RankNetGrads {
  std::vector<double> w1;
  std::array<double, 3> b1{};
  std::array<double, 3> w2{};
  double b2 = 0.0;
};

// d(score)/d(params) for one tower, scaled by `scale`.
inline void ranknet_tower_backward(const RankNetModel& m,
                                   std::span<const double> kappa, double scale,
                                   RankNetGrads& g) {
  const int in = m.config.input_dim;
  double out_pre = m.b2;
  std::array<double, 3> z{}, h{};
  for (int j = 0; j < 3; ++j) {
    z[j] = m.b1[j];
    for (int i = 0; i < in; ++i) {
      z[j] += m.w1[static_cast<std::size_t>(j) * in + i] * kappa[i];
    }
    h[j] = z[j] > 0.0 ? z[j] : 0.0;
    out_pre += m.w2[j] * h[j];
  }
  if (out_pre <= 0.0) return;  // final ReLU gate
  g.b2 += scale;
  for (int j = 0; j < 3; ++j) {
    g.w2[j] += scale * h[j];
    if (z[j] <= 0.0) continue;
    const double dz = scale * m.w2[j];
    g.b1[j] += dz;
    for (int i = 0; i < in; ++i) {
      g.w1[static_cast<std::size_t>(j) * in + i] += dz * kappa[i];
    }
  }
}

}  // namespace detail

// Gradient of max(0, alpha - (s_pref - s_other)) w.r.t. the shared
// parameters; returns the pair loss. Exposed flat for gradient checks.
inline double ranknet_pair_gradients(const RankNetModel& m,
                                     std::span<const double> pref,
                                     std::span<const double> other,
                                     std::vector<double>& flat_grads) {
  detail::RankNetGrads g;
  g.w1.assign(m.w1.size(), 0.0);
  const double sp = ranknet_forward(m, pref);
  const double so = ranknet_forward(m, other);
  const double loss = std::max(0.0, m.config.alpha - (sp - so));
  if (loss > 0.0) {
    detail::ranknet_tower_backward(m, pref, -1.0, g);
    detail::ranknet_tower_backward(m, other, 1.0, g);
  }
  flat_grads.clear();
  flat_grads.insert(flat_grads.end(), g.w1.begin(), g.w1.end());
  flat_grads.insert(flat_grads.end(), g.b1.begin(), g.b1.end());
  flat_grads.insert(flat_grads.end(), g.w2.begin(), g.w2.end());
  flat_grads.push_back(g.b2);
  return loss;
}

inline std::vector<double*> ranknet_parameter_view(RankNetModel& m) {
  std::vector<double*> out;
  for (double& v : m.w1) out.push_back(&v);
  for (double& v : m.b1) out.push_back(&v);
  for (double& v : m.w2) out.push_back(&v);
  out.push_back(&m.b2);
  return out;
}

// Pairs hold the ranker inputs directly (6- or 3-dim per config).
using RankNetPair = std::pair<std::vector<double>, std::vector<double>>;

inline RankNetModel train_ranknet(std::span<const RankNetPair> pairs,
                                  const RankNetConfig& cfg = {}) {
  if (pairs.empty()) {
    throw std::invalid_argument("train_ranknet: no training pairs");
  }
  RankNetModel m = make_ranknet(cfg);
  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> flat;
  for (int e = 0; e < cfg.epochs; ++e) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size();
         start += cfg.batch_pairs) {
      detail::RankNetGrads acc;
      acc.w1.assign(m.w1.size(), 0.0);
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_pairs));
      for (std::size_t i = start; i < end; ++i) {
        const auto& [pref, other] = pairs[order[i]];
        const double sp = ranknet_forward(m, pref);
        const double so = ranknet_forward(m, other);
        if (cfg.alpha - (sp - so) > 0.0) {
          detail::ranknet_tower_backward(m, pref, -1.0, acc);
          detail::ranknet_tower_backward(m, other, 1.0, acc);
        }
      }
      const double lr = cfg.learning_rate;
      for (std::size_t i = 0; i < m.w1.size(); ++i) m.w1[i] -= lr * acc.w1[i];
      for (int i = 0; i < 3; ++i) m.b1[i] -= lr * acc.b1[i];
      for (int i = 0; i < 3; ++i) m.w2[i] -= lr * acc.w2[i];
      m.b2 -= lr * acc.b2;
    }
  }
  for (double v : m.w1) {
    if (!std::isfinite(v)) {
      throw TrainingError("train_ranknet diverged: non-finite weights");
    }
  }
  m.trained = true;
  return m;
}

// ---------------------------------------------------------------------------
// Uniform ranking interface over the four predictors.
// ---------------------------------------------------------------------------

using Ranker = std::variant<PoolMode, RankSvmModel, RankNetModel>;

inline std::vector<double> ranker_input(const ChannelScores& s,
                                        int input_dim) {
  if (input_dim == 3) return {s.emotion, s.aesthetics, s.quality};
  const FusionVector k = fuse(s);
  return {k.begin(), k.end()};
}

inline double ranker_image_score(const Ranker& ranker,
                                 const ChannelScores& s) {
  if (const auto* mode = std::get_if<PoolMode>(&ranker)) {
    return pooled_score(s, *mode);
  }
  if (const auto* svm = std::get_if<RankSvmModel>(&ranker)) {
    if (!svm->trained) {
      throw std::logic_error("ranker_image_score: rankSVM model not trained");
    }
    return ranksvm_score(*svm, fuse(s));
  }
  const auto& net = std::get<RankNetModel>(ranker);
  if (!net.trained) {
    throw std::logic_error("ranker_image_score: rankNet model not trained");
  }
  return ranknet_forward(net, ranker_input(s, net.config.input_dim));
}

inline std::vector<int> rank_set(const Ranker& ranker,
                                 std::span<const ChannelScores> set_scores) {
  if (set_scores.size() < 2) {
    throw std::invalid_argument("rank_set: need at least 2 images");
  }
  std::vector<double> scores;
  scores.reserve(set_scores.size());
  for (const auto& s : set_scores) {
    scores.push_back(ranker_image_score(ranker, s));
  }
  return ranks_from_scores(scores);
}

// ---------------------------------------------------------------------------
// Score-level dataset: per-set channel scores plus ground-truth ranks. This
// is the unit the rankers train on and the evaluation harness consumes.
// ---------------------------------------------------------------------------

struct ScoreSet {
  std::string id;
  std::vector<ChannelScores> images;
  std::vector<int> true_ranks;  // may be empty when only ranking is needed
};

struct ScoreDataset {
  std::vector<ScoreSet> sets;
};

struct ChannelBounds {
  double e_lo = 0.0, e_hi = 1.0;
  double a_lo = 0.0, a_hi = 1.0;
  double q_lo = 0.0, q_hi = 1.0;
};

inline ChannelBounds compute_channel_bounds(std::span<const ScoreSet> sets) {
  ChannelBounds b;
  bool first = true;
  for (const auto& s : sets) {
    for (const auto& c : s.images) {
      if (first) {
        b = {c.emotion, c.emotion, c.aesthetics,
             c.aesthetics, c.quality, c.quality};
        first = false;
      } else {
        b.e_lo = std::min(b.e_lo, c.emotion);
        b.e_hi = std::max(b.e_hi, c.emotion);
        b.a_lo = std::min(b.a_lo, c.aesthetics);
        b.a_hi = std::max(b.a_hi, c.aesthetics);
        b.q_lo = std::min(b.q_lo, c.quality);
        b.q_hi = std::max(b.q_hi, c.quality);
      }
    }
  }
  return b;
}

inline ChannelScores normalize_channel_scores(const ChannelBounds& b,
                                              const ChannelScores& s) {
  auto norm = [](double v, double lo, double hi) {
    if (hi - lo <= 0.0) return 0.5;
    return std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
  };
  return {norm(s.emotion, b.e_lo, b.e_hi), norm(s.aesthetics, b.a_lo, b.a_hi),
          norm(s.quality, b.q_lo, b.q_hi)};
}

// Preference pairs from every in-set unordered image pair: the image with
// the lower (better) ground-truth rank is preferred.
inline std::vector<RankPair> make_rank_pairs(std::span<const ScoreSet> sets,
                                             const ChannelBounds& bounds) {
  std::vector<RankPair> out;
  for (const auto& s : sets) {
    if (s.true_ranks.size() != s.images.size()) {
      throw std::invalid_argument("make_rank_pairs: set '" + s.id +
                                  "' lacks ground-truth ranks");
    }
    for (std::size_t i = 0; i < s.images.size(); ++i) {
      for (std::size_t j = i + 1; j < s.images.size(); ++j) {
        const FusionVector ki =
            fuse(normalize_channel_scores(bounds, s.images[i]));
        const FusionVector kj =
            fuse(normalize_channel_scores(bounds, s.images[j]));
        if (s.true_ranks[i] < s.true_ranks[j]) {
          out.emplace_back(ki, kj);
        } else {
          out.emplace_back(kj, ki);
        }
      }
    }
  }
  return out;
}

inline std::vector<RankNetPair> to_ranknet_pairs(
    std::span<const RankPair> pairs, int input_dim) {
  std::vector<RankNetPair> out;
  out.reserve(pairs.size());
  for (const auto& [pref, other] : pairs) {
    if (input_dim == 3) {
      out.emplace_back(std::vector<double>{pref[0], pref[2], pref[4]},
                       std::vector<double>{other[0], other[2], other[4]});
    } else {
      out.emplace_back(std::vector<double>(pref.begin(), pref.end()),
                       std::vector<double>(other.begin(), other.end()));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ranker model files and the per-image score file the CLI stages exchange.
// ---------------------------------------------------------------------------

inline std::string ranksvm_to_string(const RankSvmModel& m) {
  ModelWriter w("ranksvm");
  w.scalar("reg_lambda", m.config.reg_lambda);
  w.scalar("learning_rate", m.config.learning_rate);
  w.scalar_int("epochs", m.config.epochs);
  w.scalar_int("seed", static_cast<long long>(m.config.seed));
  w.block("weights", std::vector<double>(m.weights.begin(), m.weights.end()));
  return w.str();
}

inline void save_ranksvm(const RankSvmModel& m,
                         const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw SerializationError("cannot write " + path.string());
  f << ranksvm_to_string(m);
}

inline RankSvmModel load_ranksvm(const std::filesystem::path& path) {
  ModelReader r = ModelReader::from_file(path, "ranksvm");
  RankSvmModel m;
  m.config.reg_lambda = r.scalar("reg_lambda");
  m.config.learning_rate = r.scalar("learning_rate");
  m.config.epochs = static_cast<int>(r.scalar_int("epochs"));
  m.config.seed = static_cast<std::uint64_t>(r.scalar_int("seed"));
  const auto w = r.block("weights");
  if (w.size() != 6) throw SerializationError("ranksvm: want 6 weights");
  std::copy(w.begin(), w.end(), m.weights.begin());
  m.trained = true;
  return m;
}

inline std::string ranknet_to_string(const RankNetModel& m) {
  ModelWriter w("ranknet");
  w.scalar_int("input_dim", m.config.input_dim);
  w.scalar("alpha", m.config.alpha);
  w.scalar("learning_rate", m.config.learning_rate);
  w.scalar_int("epochs", m.config.epochs);
  w.scalar_int("batch_pairs", m.config.batch_pairs);
  w.scalar_int("seed", static_cast<long long>(m.config.seed));
  w.block("w1", m.w1);
  w.block("b1", std::vector<double>(m.b1.begin(), m.b1.end()));
  w.block("w2", std::vector<double>(m.w2.begin(), m.w2.end()));
  w.block("b2", {m.b2});
  return w.str();
}

inline void save_ranknet(const RankNetModel& m,
                         const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw SerializationError("cannot write " + path.string());
  f << ranknet_to_string(m);
}

inline RankNetModel load_ranknet(const std::filesystem::path& path) {
  ModelReader r = ModelReader::from_file(path, "ranknet");
  RankNetConfig cfg;
  cfg.input_dim = static_cast<int>(r.scalar_int("input_dim"));
  cfg.alpha = r.scalar("alpha");
  cfg.learning_rate = r.scalar("learning_rate");
  cfg.epochs = static_cast<int>(r.scalar_int("epochs"));
  cfg.batch_pairs = static_cast<int>(r.scalar_int("batch_pairs"));
  cfg.seed = static_cast<std::uint64_t>(r.scalar_int("seed"));
  RankNetModel m = make_ranknet(cfg);
  m.w1 = r.block("w1");
  const auto b1 = r.block("b1");
  const auto w2 = r.block("w2");
  const auto b2 = r.block("b2");
  if (m.w1.size() != static_cast<std::size_t>(3 * cfg.input_dim) ||
      b1.size() != 3 || w2.size() != 3 || b2.size() != 1) {
    throw SerializationError("ranknet: bad parameter block sizes");
  }
  std::copy(b1.begin(), b1.end(), m.b1.begin());
  std::copy(w2.begin(), w2.end(), m.w2.begin());
  m.b2 = b2[0];
  m.trained = true;
  return m;
}

// Score file: one record per image, keyed by set and image index.
struct ScoreRecord {
  std::string set_id;
  int image_index = 0;
  ChannelScores scores;
};

inline std::string scores_to_string(std::span<const ScoreRecord> records) {
  std::ostringstream out;
  out << "grouprank-scores v1\n";
  for (const auto& r : records) {
    const FusionVector k = fuse(r.scores);
    out << "score " << r.set_id << " " << r.image_index << " "
        << format_double(r.scores.emotion) << " "
        << format_double(r.scores.aesthetics) << " "
        << format_double(r.scores.quality);
    for (double v : k) out << " " << format_double(v);
    out << "\n";
  }
  return out.str();
}

inline void save_scores(std::span<const ScoreRecord> records,
                        const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw SerializationError("cannot write " + path.string());
  f << scores_to_string(records);
}

inline std::vector<ScoreRecord> load_scores(
    const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw SerializationError("cannot open score file: " + path.string());
  std::string line;
  if (!std::getline(f, line) || line != "grouprank-scores v1") {
    throw SerializationError("bad score file header in " + path.string());
  }
  std::vector<ScoreRecord> out;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string tag;
    ScoreRecord r;
    double k[6];
    ss >> tag >> r.set_id >> r.image_index >> r.scores.emotion >>
        r.scores.aesthetics >> r.scores.quality >> k[0] >> k[1] >> k[2] >>
        k[3] >> k[4] >> k[5];
    if (!ss || tag != "score") {
      throw SerializationError("bad score record: " + line);
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace grouprank
