#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "grouprank/brisque.hpp"
#include "grouprank/manifest.hpp"
#include "grouprank/raster.hpp"
#include "grouprank/rng.hpp"

namespace grouprank {

// ---------------------------------------------------------------------------
// Procedural stand-ins for the unavailable photo databases. Scenes are flat
// renders of a few disk "faces" over a textured gradient; per image the
// generator injects a smile intensity, an exposure offset, and a sharpness
// level, and the latent appeal is a fixed blend of the three. Ground-truth
// ranks follow latent appeal, optionally perturbed by noise.
// ---------------------------------------------------------------------------

struct SyntheticConfig {
  int n_sets = 12;
  int images_per_set = 3;
  double noise = 0.0;  // std-dev of the appeal perturbation before ranking
  std::uint64_t seed = 1;
  int canvas = 96;
  int annotators = 5;
  double weight_emotion = 0.3;     // smile
  double weight_aesthetics = 0.2;  // exposure balance
  double weight_quality = 0.5;     // sharpness
};

struct SceneFace {
  double cx = 0.0;
  double cy = 0.0;
  double radius = 10.0;
};

struct SceneAttributes {
  double smile = 0.5;      // [0, 1]
  double balance = 1.0;    // 1 at neutral exposure
  double sharpness = 1.0;  // 1 = crisp
};

inline RasterImage render_scene(const std::vector<SceneFace>& faces,
                                const SceneAttributes& attrs, int canvas,
                                Rng& texture_rng) {
  RealGrid g(canvas, canvas);
  for (int y = 0; y < canvas; ++y) {
    const double base = 70.0 + 60.0 * y / std::max(1, canvas - 1);
    for (int x = 0; x < canvas; ++x) {
      g.at(x, y) = base + texture_rng.uniform(-6.0, 6.0);
    }
  }
  for (const SceneFace& f : faces) {
    const int r = static_cast<int>(std::ceil(f.radius));
    for (int dy = -r; dy <= r; ++dy) {
      for (int dx = -r; dx <= r; ++dx) {
        const int x = static_cast<int>(f.cx) + dx;
        const int y = static_cast<int>(f.cy) + dy;
        if (x < 0 || x >= canvas || y < 0 || y >= canvas) continue;
        if (dx * dx + dy * dy > f.radius * f.radius) continue;
        g.at(x, y) = 180.0;
      }
    }
    // Eyes: two dark dots. Mouth: a bar whose brightness tracks the smile.
    const int ex = static_cast<int>(f.radius / 3.0);
    const int ey = static_cast<int>(f.radius / 4.0);
    const double mouth_v = 60.0 + 195.0 * attrs.smile;
    for (int s : {-1, 1}) {
      const int x = static_cast<int>(f.cx) + s * ex;
      const int y = static_cast<int>(f.cy) - ey;
      if (x >= 0 && x + 1 < canvas && y >= 0 && y + 1 < canvas) {
        g.at(x, y) = 40.0;
        g.at(x + 1, y) = 40.0;
        g.at(x, y + 1) = 40.0;
      }
    }
    const int my = static_cast<int>(f.cy + f.radius / 2.5);
    const int half = static_cast<int>(f.radius / 2.0);
    for (int dx = -half; dx <= half; ++dx) {
      const int x = static_cast<int>(f.cx) + dx;
      if (x < 0 || x >= canvas || my < 0 || my + 1 >= canvas) continue;
      g.at(x, my) = mouth_v;
      g.at(x, my + 1) = mouth_v;
    }
  }

  const double exposure = (1.0 - attrs.balance) * 50.0;
  // Balance only encodes the magnitude; the texture rng decides the sign.
  const double signed_offset =
      texture_rng.uniform() < 0.5 ? exposure : -exposure;
  for (double& v : g.data) v += signed_offset;

  const double blur_sigma = (1.0 - attrs.sharpness) * 2.2;
  if (blur_sigma > 0.0) g = gaussian_blur(g, blur_sigma);
  return grid_to_image(g);
}

inline RasterImage render_saliency(const std::vector<SceneFace>& faces,
                                   int canvas) {
  RealGrid g(canvas, canvas);
  for (const SceneFace& f : faces) {
    const double s2 = 2.0 * f.radius * f.radius;
    for (int y = 0; y < canvas; ++y) {
      for (int x = 0; x < canvas; ++x) {
        const double dx = x - f.cx, dy = y - f.cy;
        g.at(x, y) += std::exp(-(dx * dx + dy * dy) / s2);
      }
    }
  }
  double hi = 0.0;
  for (double v : g.data) hi = std::max(hi, v);
  if (hi > 0.0) {
    for (double& v : g.data) v = v / hi * 255.0;
  }
  return grid_to_image(g);
}

// ---------------------------------------------------------------------------
// Distortions for the quality channel's severity-supervised corpus.
// ---------------------------------------------------------------------------

inline RasterImage distort_blur(const RasterImage& gray, double sigma) {
  if (sigma <= 0.0) return gray;
  return grid_to_image(gaussian_blur(image_to_grid(gray), sigma));
}

inline RasterImage distort_noise(const RasterImage& gray, double sigma,
                                 std::uint64_t seed) {
  if (sigma <= 0.0) return gray;
  RasterImage out = gray;
  Rng rng(seed);
  for (double& v : out.data) {
    v = std::clamp(v + rng.normal(0.0, sigma), 0.0, 255.0);
  }
  return out;
}

inline const std::array<double, 5>& blur_severity_sigmas() {
  static const std::array<double, 5> s = {0.0, 1.0, 2.0, 3.0, 4.0};
  return s;
}

inline const std::array<double, 5>& noise_severity_sigmas() {
  static const std::array<double, 5> s = {0.0, 5.0, 10.0, 20.0, 40.0};
  return s;
}

struct DistortionCorpus {
  std::vector<QualityFeatures> features;
  std::vector<double> scores;  // 1 = pristine .. 0 = worst severity
};

// Severity rank is the supervisory signal: each image contributes its
// pristine form plus the four blur and four noise severities.
inline DistortionCorpus build_distortion_corpus(
    std::span<const RasterImage> gray_images, std::uint64_t seed) {
  DistortionCorpus corpus;
  std::uint64_t salt = 0;
  for (const RasterImage& img : gray_images) {
    corpus.features.push_back(extract_features(img));
    corpus.scores.push_back(1.0);
    for (int sev = 1; sev <= 4; ++sev) {
      corpus.features.push_back(
          extract_features(distort_blur(img, blur_severity_sigmas()[sev])));
      corpus.scores.push_back(1.0 - sev / 4.0);
    }
    for (int sev = 1; sev <= 4; ++sev) {
      corpus.features.push_back(extract_features(
          distort_noise(img, noise_severity_sigmas()[sev], seed + salt)));
      corpus.scores.push_back(1.0 - sev / 4.0);
      ++salt;
    }
  }
  return corpus;
}

// Contrast/sharpness composite standing in for human aesthetics ratings.
inline double synthetic_aesthetics_score(const RasterImage& img) {
  const RasterImage gray = to_grayscale(img);
  double mean = 0.0;
  for (double v : gray.data) mean += v;
  mean /= static_cast<double>(gray.data.size());
  double var = 0.0;
  for (double v : gray.data) var += (v - mean) * (v - mean);
  var /= static_cast<double>(gray.data.size());
  double grad = 0.0;
  std::size_t count = 0;
  for (int y = 0; y < gray.height; ++y) {
    for (int x = 0; x + 1 < gray.width; ++x) {
      grad += std::abs(gray.at(x + 1, y) - gray.at(x, y));
      ++count;
    }
  }
  for (int y = 0; y + 1 < gray.height; ++y) {
    for (int x = 0; x < gray.width; ++x) {
      grad += std::abs(gray.at(x, y + 1) - gray.at(x, y));
      ++count;
    }
  }
  grad /= static_cast<double>(count);
  const double contrast = std::clamp(std::sqrt(var) / 64.0, 0.0, 1.0);
  const double sharpness = std::clamp(grad / 10.0, 0.0, 1.0);
  return 0.5 * contrast + 0.5 * sharpness;
}

// ---------------------------------------------------------------------------
// Full image-level generation: renders every set, writes images, saliency
// maps and the manifest under out_dir, and reports the latent appeal that
// produced the ground truth.
// ---------------------------------------------------------------------------

struct SyntheticResult {
  Dataset dataset;
  std::filesystem::path manifest_path;
  std::vector<std::vector<double>> appeal;  // [set][image]
};

inline SyntheticResult generate_synthetic(const SyntheticConfig& cfg,
                                          const std::filesystem::path& out_dir) {
  if (cfg.n_sets < 1 || cfg.images_per_set < 2) {
    throw std::invalid_argument(
        "generate_synthetic: need n_sets >= 1 and images_per_set >= 2");
  }
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "images");
  fs::create_directories(out_dir / "saliency");

  Rng rng(cfg.seed);
  Dataset ds;
  ds.base_dir = out_dir;
  SyntheticResult result;

  for (int s = 0; s < cfg.n_sets; ++s) {
    const std::string set_id =
        "set" + std::string(s < 10 ? "0" : "") + std::to_string(s);
    PhotoSet set;
    set.id = set_id;

    const int n_faces = 2 + static_cast<int>(rng.index(3));
    std::vector<SceneFace> faces;
    for (int f = 0; f < n_faces; ++f) {
      SceneFace face;
      face.radius = rng.uniform(8.0, 12.0);
      face.cx = rng.uniform(face.radius + 2.0, cfg.canvas - face.radius - 2.0);
      face.cy = rng.uniform(face.radius + 2.0, cfg.canvas - face.radius - 2.0);
      faces.push_back(face);
    }
    const RasterImage saliency = render_saliency(faces, cfg.canvas);

    std::vector<double> appeal(cfg.images_per_set);
    for (int i = 0; i < cfg.images_per_set; ++i) {
      SceneAttributes attrs;
      attrs.smile = rng.uniform();
      attrs.balance = rng.uniform();
      attrs.sharpness = rng.uniform();
      appeal[i] = cfg.weight_emotion * attrs.smile +
                  cfg.weight_aesthetics * attrs.balance +
                  cfg.weight_quality * attrs.sharpness;

      const RasterImage img = render_scene(faces, attrs, cfg.canvas, rng);
      const std::string img_rel =
          "images/" + set_id + "_" + std::to_string(i) + ".pgm";
      const std::string sal_rel =
          "saliency/" + set_id + "_" + std::to_string(i) + ".pgm";
      {
        const auto bytes = encode_pgm(img);
        std::ofstream f(out_dir / img_rel, std::ios::binary);
        f.write(reinterpret_cast<const char*>(bytes.data()),
                static_cast<std::streamsize>(bytes.size()));
      }
      {
        const auto bytes = encode_pgm(saliency);
        std::ofstream f(out_dir / sal_rel, std::ios::binary);
        f.write(reinterpret_cast<const char*>(bytes.data()),
                static_cast<std::streamsize>(bytes.size()));
      }
      ManifestImage mi;
      mi.path = img_rel;
      mi.saliency_path = sal_rel;
      mi.has_label = true;
      mi.label = attrs.smile * 5.0;  // happiness on the 0-5 scale
      set.images.push_back(std::move(mi));
    }

    // Perturbed appeal decides the ground truth; annotators see the clean
    // appeal through a small personal jitter.
    std::vector<double> noisy(appeal);
    for (double& v : noisy) v += cfg.noise > 0.0 ? rng.normal(0.0, cfg.noise) : 0.0;
    GroundTruth gt;
    gt.ranks = ranks_from_scores(noisy);
    for (int a = 0; a < cfg.annotators; ++a) {
      AnnotationRecord rec;
      rec.annotator = "synth" + std::to_string(a);
      std::vector<double> seen(appeal);
      for (double& v : seen) v += rng.normal(0.0, 0.05);
      rec.ranks = ranks_from_scores(seen);
      if (a == 0) rec.feature = "group_happiness";
      set.annotations.push_back(std::move(rec));
    }
    set.ground_truth = std::move(gt);
    ds.sets.push_back(std::move(set));
    result.appeal.push_back(std::move(appeal));
  }

  const fs::path manifest_path = out_dir / "manifest.txt";
  save_manifest(ds, manifest_path);
  result.dataset = std::move(ds);
  result.manifest_path = manifest_path;
  return result;
}

// ---------------------------------------------------------------------------
// Score-level generation: channel scores are the injected attributes
// themselves, so ranker experiments see exactly the latent structure.
// ---------------------------------------------------------------------------

struct ScoreSetWeights {
  double emotion = 0.2;
  double aesthetics = 0.1;
  double quality = 0.7;
};

inline ScoreDataset generate_score_sets(int n_sets, int images_per_set,
                                        const ScoreSetWeights& w, double noise,
                                        std::uint64_t seed) {
  if (n_sets < 1 || images_per_set < 2) {
    throw std::invalid_argument("generate_score_sets: bad shape");
  }
  Rng rng(seed);
  ScoreDataset out;
  for (int s = 0; s < n_sets; ++s) {
    ScoreSet set;
    set.id = "sset" + std::to_string(s);
    std::vector<double> appeal(images_per_set);
    for (int i = 0; i < images_per_set; ++i) {
      ChannelScores c{rng.uniform(), rng.uniform(), rng.uniform()};
      appeal[i] = w.emotion * c.emotion + w.aesthetics * c.aesthetics +
                  w.quality * c.quality;
      if (noise > 0.0) appeal[i] += rng.normal(0.0, noise);
      set.images.push_back(c);
    }
    set.true_ranks = ranks_from_scores(appeal);
    out.sets.push_back(std::move(set));
  }
  return out;
}

}  // namespace grouprank
