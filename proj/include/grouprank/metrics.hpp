#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "grouprank/fusion.hpp"
#include "grouprank/rng.hpp"

namespace grouprank {

// ---------------------------------------------------------------------------
// Ranking metrics over sets of images. Ranks use 1 = best; both rank
// sequences of a set must be permutations of {1..n}, n >= 2.
// ---------------------------------------------------------------------------

struct RankedSet {
  std::string set_id;
  std::vector<int> true_ranks;
  std::vector<int> predicted_ranks;
};

inline bool is_permutation_1_to_n(std::span<const int> ranks) {
  std::vector<bool> seen(ranks.size(), false);
  for (int r : ranks) {
    if (r < 1 || r > static_cast<int>(ranks.size()) || seen[r - 1]) {
      return false;
    }
    seen[r - 1] = true;
  }
  return true;
}

inline void validate_ranked_set(const RankedSet& s) {
  if (s.true_ranks.size() < 2 ||
      s.true_ranks.size() != s.predicted_ranks.size()) {
    throw std::invalid_argument("ranked set '" + s.set_id +
                                "': need matching rank lists of length >= 2");
  }
  if (!is_permutation_1_to_n(s.true_ranks) ||
      !is_permutation_1_to_n(s.predicted_ranks)) {
    throw std::invalid_argument("ranked set '" + s.set_id +
                                "': ranks are not a permutation of 1..n");
  }
}

// Best image match: the percentage of sets whose predicted rank-1 image is
// the ground-truth rank-1 image.
inline double bim(std::span<const RankedSet> sets) {
  if (sets.empty()) throw std::invalid_argument("bim: no sets");
  int hits = 0;
  for (const auto& s : sets) {
    validate_ranked_set(s);
    const auto top = [](std::span<const int> r) {
      return std::distance(r.begin(), std::min_element(r.begin(), r.end()));
    };
    if (top(s.true_ranks) == top(s.predicted_ranks)) ++hits;
  }
  return 100.0 * hits / static_cast<double>(sets.size());
}

// Percentage of swapped pairs: image pairs whose predicted relative order
// contradicts the ground truth, over all within-set pairs.
inline double psp(std::span<const RankedSet> sets) {
  if (sets.empty()) throw std::invalid_argument("psp: no sets");
  long long swapped = 0, total = 0;
  for (const auto& s : sets) {
    validate_ranked_set(s);
    const std::size_t n = s.true_ranks.size();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const bool true_before = s.true_ranks[i] < s.true_ranks[j];
        const bool pred_before = s.predicted_ranks[i] < s.predicted_ranks[j];
        if (true_before != pred_before) ++swapped;
        ++total;
      }
    }
  }
  return 100.0 * static_cast<double>(swapped) / static_cast<double>(total);
}

// Spearman rho per set (no ties by construction), averaged over sets.
inline double spearman_rho(std::span<const RankedSet> sets) {
  if (sets.empty()) throw std::invalid_argument("spearman_rho: no sets");
  double sum = 0.0;
  for (const auto& s : sets) {
    validate_ranked_set(s);
    const double n = static_cast<double>(s.true_ranks.size());
    double d2 = 0.0;
    for (std::size_t i = 0; i < s.true_ranks.size(); ++i) {
      const double d = s.true_ranks[i] - s.predicted_ranks[i];
      d2 += d * d;
    }
    sum += 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
  }
  return sum / static_cast<double>(sets.size());
}

struct EvalReport {
  double bim = 0.0;
  double psp = 0.0;
  double rho = 0.0;
  int n_sets = 0;
};

inline EvalReport evaluate_rankings(std::span<const RankedSet> sets) {
  return {bim(sets), psp(sets), spearman_rho(sets),
          static_cast<int>(sets.size())};
}

// ---------------------------------------------------------------------------
// Seeded k-fold split over set indices: shuffle, then contiguous near-equal
// parts (sizes differ by at most one). Splitting is by set, never by image.
// ---------------------------------------------------------------------------

inline std::vector<std::vector<std::size_t>> kfold_split(std::size_t n_sets,
                                                         int k,
                                                         std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("kfold_split: k must be >= 2");
  if (static_cast<std::size_t>(k) > n_sets) {
    throw std::invalid_argument("kfold_split: more folds than sets");
  }
  std::vector<std::size_t> idx(n_sets);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  rng.shuffle(idx);
  std::vector<std::vector<std::size_t>> folds(k);
  const std::size_t base = n_sets / k;
  const std::size_t extra = n_sets % k;
  std::size_t pos = 0;
  for (int f = 0; f < k; ++f) {
    const std::size_t size = base + (static_cast<std::size_t>(f) < extra);
    folds[f].assign(idx.begin() + pos, idx.begin() + pos + size);
    pos += size;
  }
  return folds;
}

// ---------------------------------------------------------------------------
// Cross-validation of a ranker over a score-level dataset. Per fold, the
// channel normalization bounds and (for learned rankers) the model are fit
// on the training sets and frozen for the held-out sets.
// ---------------------------------------------------------------------------

enum class RankerKind { mean, max, ranksvm, ranknet };

inline std::string ranker_kind_name(RankerKind k) {
  switch (k) {
    case RankerKind::mean: return "mean";
    case RankerKind::max: return "max";
    case RankerKind::ranksvm: return "ranksvm";
    case RankerKind::ranknet: return "ranknet";
  }
  return "?";
}

struct CrossValConfig {
  RankerKind kind = RankerKind::ranknet;
  int folds = 5;
  std::uint64_t seed = 1;
  RankSvmConfig svm;
  RankNetConfig net;
};

inline EvalReport cross_validate(const ScoreDataset& data,
                                 const CrossValConfig& cfg) {
  for (const auto& s : data.sets) {
    if (s.true_ranks.size() != s.images.size() || s.images.size() < 2) {
      throw std::invalid_argument("cross_validate: set '" + s.id +
                                  "' lacks usable ground truth");
    }
  }
  const auto folds = kfold_split(data.sets.size(), cfg.folds, cfg.seed);
  std::vector<RankedSet> ranked;
  ranked.reserve(data.sets.size());

  for (std::size_t f = 0; f < folds.size(); ++f) {
    std::vector<ScoreSet> train_sets;
    for (std::size_t g = 0; g < folds.size(); ++g) {
      if (g == f) continue;
      for (std::size_t idx : folds[g]) train_sets.push_back(data.sets[idx]);
    }
    const ChannelBounds bounds = compute_channel_bounds(train_sets);

    Ranker ranker = PoolMode::mean;
    switch (cfg.kind) {
      case RankerKind::mean:
        ranker = PoolMode::mean;
        break;
      case RankerKind::max:
        ranker = PoolMode::max;
        break;
      case RankerKind::ranksvm: {
        const auto pairs = make_rank_pairs(train_sets, bounds);
        RankSvmConfig svm_cfg = cfg.svm;
        svm_cfg.seed = cfg.svm.seed + f;
        ranker = train_ranksvm(pairs, svm_cfg);
        break;
      }
      case RankerKind::ranknet: {
        const auto pairs = make_rank_pairs(train_sets, bounds);
        RankNetConfig net_cfg = cfg.net;
        net_cfg.seed = cfg.net.seed + f;
        ranker = train_ranknet(to_ranknet_pairs(pairs, net_cfg.input_dim),
                               net_cfg);
        break;
      }
    }

    for (std::size_t idx : folds[f]) {
      const ScoreSet& s = data.sets[idx];
      std::vector<ChannelScores> normalized;
      normalized.reserve(s.images.size());
      for (const auto& c : s.images) {
        normalized.push_back(normalize_channel_scores(bounds, c));
      }
      RankedSet r;
      r.set_id = s.id;
      r.true_ranks = s.true_ranks;
      r.predicted_ranks = rank_set(ranker, normalized);
      ranked.push_back(std::move(r));
    }
  }

  // Merge in dataset order so fold scheduling cannot reorder the report.
  std::sort(ranked.begin(), ranked.end(),
            [](const RankedSet& a, const RankedSet& b) {
              return a.set_id < b.set_id;
            });
  return evaluate_rankings(ranked);
}

}  // namespace grouprank
