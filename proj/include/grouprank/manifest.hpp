#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "grouprank/fusion.hpp"
#include "grouprank/metrics.hpp"
#include "grouprank/rng.hpp"

namespace grouprank {

// ---------------------------------------------------------------------------
// Dataset manifest: one UTF-8 line-oriented file describing sets of
// co-captured images, per-annotator rankings, and aggregated ground truth.
//
//   set <id>
//   image <index> <path> [saliency <path>] [label <real>]
//   annotation <annotator> <rank-list> [feature <name>]
//   groundtruth <rank-list>
//
// rank-list is comma-separated integers, a permutation of 1..n over the
// set's images in image-index order. Blank lines and lines starting with
// '#' are ignored. Paths are relative to the manifest file.
// ---------------------------------------------------------------------------

class ManifestError : public std::runtime_error {
 public:
  enum class Kind {
    parse,
    missing_file,
    duplicate_set,
    invalid_permutation,
    too_few_annotations,
  };

  ManifestError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// The eight features annotators could cite for a ranking decision. Stored
// verbatim; they drive no computation.
inline const std::array<std::string, 8>& annotation_feature_names() {
  static const std::array<std::string, 8> names = {
      "group_happiness", "occlusion", "motion_blur", "group_pose",
      "image_quality",   "face_size", "face_pose",   "eyes"};
  return names;
}

struct AnnotationRecord {
  std::string annotator;
  std::vector<int> ranks;
  std::string feature;  // empty when the optional question was skipped
};

struct GroundTruth {
  std::vector<int> ranks;
  std::vector<int> vote_counts;  // rank-1 votes per image
  bool tie_broken = false;
  bool index_tie_break = false;  // fell through to the image-index rule
};

struct ManifestImage {
  std::string path;
  std::string saliency_path;  // empty when absent
  bool has_label = false;
  double label = 0.0;
};

struct PhotoSet {
  std::string id;
  std::vector<ManifestImage> images;
  std::vector<AnnotationRecord> annotations;
  std::optional<GroundTruth> ground_truth;
};

struct Dataset {
  std::filesystem::path base_dir;
  std::vector<PhotoSet> sets;
};

namespace detail {

inline std::vector<int> parse_rank_list(const std::string& s,
                                        std::size_t n_images, int line_no) {
  std::vector<int> ranks;
  std::istringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      ranks.push_back(std::stoi(tok));
    } catch (const std::exception&) {
      throw ManifestError(ManifestError::Kind::parse,
                          "manifest line " + std::to_string(line_no) +
                              ": bad rank list '" + s + "'");
    }
  }
  if (ranks.size() != n_images || !is_permutation_1_to_n(ranks)) {
    throw ManifestError(ManifestError::Kind::invalid_permutation,
                        "manifest line " + std::to_string(line_no) +
                            ": ranks '" + s + "' are not a permutation of 1.." +
                            std::to_string(n_images));
  }
  return ranks;
}

inline void finish_set(const PhotoSet& set, int line_no) {
  if (set.images.size() < 2) {
    throw ManifestError(ManifestError::Kind::parse,
                        "set '" + set.id + "' (ending line " +
                            std::to_string(line_no) +
                            "): needs at least 2 images");
  }
  std::set<std::string> paths;
  for (const auto& img : set.images) {
    if (!paths.insert(img.path).second) {
      throw ManifestError(ManifestError::Kind::parse,
                          "set '" + set.id + "': duplicate image path '" +
                              img.path + "'");
    }
  }
}

}  // namespace detail

inline Dataset parse_manifest(std::istream& in,
                              const std::filesystem::path& base_dir,
                              bool check_files = true) {
  Dataset ds;
  ds.base_dir = base_dir;
  std::set<std::string> ids;
  PhotoSet* cur = nullptr;
  std::string line;
  int line_no = 0;

  auto require_set = [&](const char* what) -> PhotoSet& {
    if (!cur) {
      throw ManifestError(ManifestError::Kind::parse,
                          "manifest line " + std::to_string(line_no) + ": " +
                              what + " before any 'set' line");
    }
    return *cur;
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;

    if (tag == "set") {
      if (cur) detail::finish_set(*cur, line_no);
      std::string id;
      ss >> id;
      if (id.empty()) {
        throw ManifestError(ManifestError::Kind::parse,
                            "manifest line " + std::to_string(line_no) +
                                ": set needs an id");
      }
      if (!ids.insert(id).second) {
        throw ManifestError(ManifestError::Kind::duplicate_set,
                            "duplicate set id '" + id + "' at line " +
                                std::to_string(line_no));
      }
      ds.sets.emplace_back();
      cur = &ds.sets.back();
      cur->id = id;
    } else if (tag == "image") {
      PhotoSet& set = require_set("image");
      if (!set.annotations.empty() || set.ground_truth) {
        throw ManifestError(ManifestError::Kind::parse,
                            "manifest line " + std::to_string(line_no) +
                                ": images must precede annotations");
      }
      int index = -1;
      std::string path;
      ss >> index >> path;
      if (!ss || path.empty() ||
          index != static_cast<int>(set.images.size())) {
        throw ManifestError(ManifestError::Kind::parse,
                            "manifest line " + std::to_string(line_no) +
                                ": image lines need sequential indices from 0");
      }
      ManifestImage img;
      img.path = path;
      std::string key;
      while (ss >> key) {
        if (key == "saliency") {
          ss >> img.saliency_path;
        } else if (key == "label") {
          ss >> img.label;
          img.has_label = true;
        } else {
          throw ManifestError(ManifestError::Kind::parse,
                              "manifest line " + std::to_string(line_no) +
                                  ": unknown image attribute '" + key + "'");
        }
        if (!ss) {
          throw ManifestError(ManifestError::Kind::parse,
                              "manifest line " + std::to_string(line_no) +
                                  ": bad value for '" + key + "'");
        }
      }
      set.images.push_back(std::move(img));
    } else if (tag == "annotation") {
      PhotoSet& set = require_set("annotation");
      AnnotationRecord rec;
      std::string rank_list;
      ss >> rec.annotator >> rank_list;
      if (!ss) {
        throw ManifestError(ManifestError::Kind::parse,
                            "manifest line " + std::to_string(line_no) +
                                ": annotation needs annotator and ranks");
      }
      rec.ranks =
          detail::parse_rank_list(rank_list, set.images.size(), line_no);
      std::string key;
      if (ss >> key) {
        if (key != "feature") {
          throw ManifestError(ManifestError::Kind::parse,
                              "manifest line " + std::to_string(line_no) +
                                  ": unknown annotation attribute '" + key +
                                  "'");
        }
        ss >> rec.feature;
        const auto& names = annotation_feature_names();
        if (std::find(names.begin(), names.end(), rec.feature) ==
            names.end()) {
          throw ManifestError(ManifestError::Kind::parse,
                              "manifest line " + std::to_string(line_no) +
                                  ": unknown feature '" + rec.feature + "'");
        }
      }
      set.annotations.push_back(std::move(rec));
    } else if (tag == "groundtruth") {
      PhotoSet& set = require_set("groundtruth");
      if (set.ground_truth) {
        throw ManifestError(ManifestError::Kind::parse,
                            "manifest line " + std::to_string(line_no) +
                                ": set '" + set.id +
                                "' already has ground truth");
      }
      std::string rank_list;
      ss >> rank_list;
      GroundTruth gt;
      gt.ranks =
          detail::parse_rank_list(rank_list, set.images.size(), line_no);
      set.ground_truth = std::move(gt);
    } else {
      throw ManifestError(ManifestError::Kind::parse,
                          "manifest line " + std::to_string(line_no) +
                              ": unknown directive '" + tag + "'");
    }
  }
  if (cur) detail::finish_set(*cur, line_no);

  if (check_files) {
    for (const auto& set : ds.sets) {
      for (std::size_t i = 0; i < set.images.size(); ++i) {
        const auto img_path = base_dir / set.images[i].path;
        if (!std::filesystem::exists(img_path)) {
          throw ManifestError(ManifestError::Kind::missing_file,
                              "set '" + set.id + "' image " +
                                  std::to_string(i) + ": missing file " +
                                  img_path.string());
        }
        if (!set.images[i].saliency_path.empty() &&
            !std::filesystem::exists(base_dir / set.images[i].saliency_path)) {
          throw ManifestError(ManifestError::Kind::missing_file,
                              "set '" + set.id + "' image " +
                                  std::to_string(i) + ": missing saliency " +
                                  set.images[i].saliency_path);
        }
      }
    }
  }
  return ds;
}

inline Dataset load_manifest(const std::filesystem::path& path,
                             bool check_files = true) {
  std::ifstream f(path, std::ios::binary);
  if (!f) {
    throw ManifestError(ManifestError::Kind::missing_file,
                        "cannot open manifest: " + path.string());
  }
  return parse_manifest(f, path.parent_path(), check_files);
}

inline std::string manifest_to_string(const Dataset& ds) {
  std::ostringstream out;
  for (const auto& set : ds.sets) {
    out << "set " << set.id << "\n";
    for (std::size_t i = 0; i < set.images.size(); ++i) {
      const auto& img = set.images[i];
      out << "image " << i << " " << img.path;
      if (!img.saliency_path.empty()) out << " saliency " << img.saliency_path;
      if (img.has_label) out << " label " << format_double(img.label);
      out << "\n";
    }
    for (const auto& a : set.annotations) {
      out << "annotation " << a.annotator << " ";
      for (std::size_t i = 0; i < a.ranks.size(); ++i) {
        out << (i ? "," : "") << a.ranks[i];
      }
      if (!a.feature.empty()) out << " feature " << a.feature;
      out << "\n";
    }
    if (set.ground_truth) {
      out << "groundtruth ";
      for (std::size_t i = 0; i < set.ground_truth->ranks.size(); ++i) {
        out << (i ? "," : "") << set.ground_truth->ranks[i];
      }
      out << "\n";
    }
  }
  return out.str();
}

inline void save_manifest(const Dataset& ds,
                          const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) {
    throw std::runtime_error("cannot write manifest: " + path.string());
  }
  f << manifest_to_string(ds);
}

// ---------------------------------------------------------------------------
// Majority-vote rank aggregation. Round r: every annotation votes for its
// best remaining image; the image with the most votes takes rank r and
// leaves the pool. Vote ties fall back to the lower mean annotated rank,
// then the lower image index; any vote tie sets tie_broken.
// ---------------------------------------------------------------------------

inline GroundTruth aggregate_ground_truth(
    std::span<const AnnotationRecord> annotations, int min_annotations = 5) {
  if (annotations.empty() ||
      static_cast<int>(annotations.size()) < min_annotations) {
    throw ManifestError(
        ManifestError::Kind::too_few_annotations,
        "aggregate_ground_truth: need at least " +
            std::to_string(min_annotations) + " annotations, got " +
            std::to_string(annotations.size()));
  }
  const std::size_t n = annotations.front().ranks.size();
  for (const auto& a : annotations) {
    if (a.ranks.size() != n || !is_permutation_1_to_n(a.ranks)) {
      throw ManifestError(ManifestError::Kind::invalid_permutation,
                          "aggregate_ground_truth: annotation by '" +
                              a.annotator + "' is not a valid permutation");
    }
  }

  std::vector<double> mean_rank(n, 0.0);
  for (const auto& a : annotations) {
    for (std::size_t i = 0; i < n; ++i) mean_rank[i] += a.ranks[i];
  }
  for (double& m : mean_rank) m /= static_cast<double>(annotations.size());

  GroundTruth gt;
  gt.ranks.assign(n, 0);
  std::vector<bool> taken(n, false);
  for (std::size_t round = 1; round <= n; ++round) {
    std::vector<int> votes(n, 0);
    for (const auto& a : annotations) {
      std::size_t best = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (taken[i]) continue;
        if (best == n || a.ranks[i] < a.ranks[best]) best = i;
      }
      ++votes[best];
    }
    if (round == 1) gt.vote_counts = votes;

    int max_votes = -1;
    for (std::size_t i = 0; i < n; ++i) {
      if (!taken[i]) max_votes = std::max(max_votes, votes[i]);
    }
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < n; ++i) {
      if (!taken[i] && votes[i] == max_votes) candidates.push_back(i);
    }
    std::size_t winner = candidates.front();
    if (candidates.size() > 1) {
      gt.tie_broken = true;
      double best_mean = mean_rank[winner];
      for (std::size_t c : candidates) {
        if (mean_rank[c] < best_mean) {
          best_mean = mean_rank[c];
          winner = c;
        }
      }
      int at_best = 0;
      for (std::size_t c : candidates) {
        if (mean_rank[c] == best_mean) ++at_best;
      }
      if (at_best > 1) gt.index_tie_break = true;  // lowest index wins
    }
    gt.ranks[winner] = static_cast<int>(round);
    taken[winner] = true;
  }
  return gt;
}

// Ground truth for a set: the stored permutation when present, otherwise
// aggregated from the set's annotations.
inline GroundTruth resolve_ground_truth(const PhotoSet& set,
                                        int min_annotations = 5) {
  if (set.ground_truth) return *set.ground_truth;
  return aggregate_ground_truth(set.annotations, min_annotations);
}

// ---------------------------------------------------------------------------
// Score-level augmentation: each set is replicated with per-channel Gaussian
// jitter on the channel scores, re-clamped to [0, 1]; ground truth ranks are
// copied unchanged.
// ---------------------------------------------------------------------------

inline ScoreDataset augment_dataset(const ScoreDataset& data, int factor,
                                    std::uint64_t seed, double sigma = 0.02) {
  if (factor < 1) {
    throw std::invalid_argument("augment_dataset: factor must be >= 1");
  }
  ScoreDataset out;
  Rng rng(seed);
  for (const auto& set : data.sets) {
    out.sets.push_back(set);
    for (int r = 1; r < factor; ++r) {
      ScoreSet copy = set;
      copy.id = set.id + "#aug" + std::to_string(r);
      for (auto& img : copy.images) {
        img.emotion = std::clamp(img.emotion + rng.normal(0.0, sigma), 0.0,
                                 1.0);
        img.aesthetics =
            std::clamp(img.aesthetics + rng.normal(0.0, sigma), 0.0, 1.0);
        img.quality =
            std::clamp(img.quality + rng.normal(0.0, sigma), 0.0, 1.0);
      }
      out.sets.push_back(std::move(copy));
    }
  }
  return out;
}

}  // namespace grouprank
