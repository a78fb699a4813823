#pragma once

// Seeded synthetic long-tailed dataset generator. Class popularity follows a
// Zipf law over class ranks, and a co-occurrence knob plants head-class
// objects into images that contain tail classes, reproducing the structure
// that makes image-level resampling spill over onto frequent classes.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "tailsampler/dataset.hpp"
#include "tailsampler/rng.hpp"
#include "tailsampler/types.hpp"

namespace tailsampler {

struct SynthConfig {
  std::int64_t num_classes = 200;
  std::int64_t num_images = 5000;
  double zipf_exponent = 1.4;   // weight(rank k) ~ k^-s, ranks 1-based
  std::int64_t min_objects = 1; // base object draws per image
  std::int64_t max_objects = 8;
  // Probability that an image containing a tail class also receives at least
  // one head-class object. Head = top 5% of ranks (at least one class).
  double cooccurrence_bias = 0.7;
  std::uint64_t seed = 7;
};

struct SynthResult {
  std::vector<ImageRecord> records;
  DatasetIndex index;
  std::int64_t num_head_classes = 0;  // class ids 1..num_head_classes
};

namespace detail {

inline void validate(const SynthConfig& cfg) {
  if (cfg.num_classes < 3) throw ValidationError("num_classes must be >= 3");
  if (cfg.num_images < 1) throw ValidationError("num_images must be >= 1");
  if (cfg.zipf_exponent <= 0) {
    throw ValidationError("zipf_exponent must be > 0");
  }
  if (cfg.min_objects < 1 || cfg.max_objects < cfg.min_objects) {
    throw ValidationError("objects_per_image bounds require 1 <= min <= max");
  }
  if (cfg.cooccurrence_bias < 0 || cfg.cooccurrence_bias > 1) {
    throw ValidationError("cooccurrence_bias must lie in [0, 1]");
  }
  if (cfg.num_classes > cfg.num_images * cfg.max_objects) {
    throw ValidationError(
        "infeasible config: num_classes exceeds num_images * max_objects (" +
        std::to_string(cfg.num_classes) + " > " +
        std::to_string(cfg.num_images * cfg.max_objects) + ")");
  }
}

// Inverse-CDF draw over cumulative weights.
inline std::size_t draw_rank(std::span<const double> cumulative,
                             SplitMix64& gen) {
  const double u = gen.next_double() * cumulative.back();
  std::size_t lo = 0, hi = cumulative.size() - 1;
  while (lo < hi) {
    const std::size_t mid = (lo + hi) / 2;
    if (cumulative[mid] <= u) {
      lo = mid + 1;
    } else {
      hi = mid;
    }
  }
  return lo;
}

// Uniform position, log-uniform size in [8, 128] px on a 640x480 canvas.
// Geometry only exercises the data path; no analysis depends on it.
inline Box draw_box(SplitMix64& gen, int width, int height) {
  const double w = std::exp(gen.uniform_real(std::log(8.0), std::log(128.0)));
  const double h = std::exp(gen.uniform_real(std::log(8.0), std::log(128.0)));
  const double x = gen.uniform_real(0.0, width - w);
  const double y = gen.uniform_real(0.0, height - h);
  return Box{x, y, w, h};
}

}  // namespace detail

// Generates the dataset. Class ids are 1..num_classes, id == popularity rank.
// The same config (including seed) always produces the identical dataset.
//
// Passes, in order:
//   1. per image, draw uniform_int(min, max) objects with Zipf classes;
//   2. coverage: any class with no instances gets one object appended to
//      image ((id - 1) mod num_images) + 1, so no class has image_count 0;
//   3. co-occurrence: images holding a tail-class object but no head-class
//      object receive one Zipf-weighted head object with probability
//      cooccurrence_bias.
// Passes 2 and 3 may push an image past max_objects.
inline SynthResult generate(const SynthConfig& cfg) {
  detail::validate(cfg);
  constexpr int kImageW = 640;
  constexpr int kImageH = 480;

  const auto num_classes = static_cast<std::size_t>(cfg.num_classes);
  std::vector<double> cumulative(num_classes);
  double acc = 0;
  for (std::size_t k = 0; k < num_classes; ++k) {
    acc += std::pow(static_cast<double>(k + 1), -cfg.zipf_exponent);
    cumulative[k] = acc;
  }
  const std::int64_t num_head = std::max<std::int64_t>(
      1, static_cast<std::int64_t>(
             std::ceil(0.05 * static_cast<double>(cfg.num_classes))));
  std::vector<double> head_cumulative(
      cumulative.begin(), cumulative.begin() + static_cast<std::size_t>(num_head));

  SplitMix64 gen(derive_key(cfg.seed, {0x53594e5448ull}));  // "SYNTH"
  SynthResult result;
  result.num_head_classes = num_head;
  result.records.resize(static_cast<std::size_t>(cfg.num_images));
  std::vector<std::int64_t> instances_of(num_classes, 0);

  for (std::int64_t i = 0; i < cfg.num_images; ++i) {
    ImageRecord& rec = result.records[static_cast<std::size_t>(i)];
    rec.image_id = i + 1;
    rec.width = kImageW;
    rec.height = kImageH;
    const std::int64_t n = gen.uniform_int(cfg.min_objects, cfg.max_objects);
    rec.objects.reserve(static_cast<std::size_t>(n));
    for (std::int64_t j = 0; j < n; ++j) {
      const std::size_t rank = detail::draw_rank(cumulative, gen);
      ++instances_of[rank];
      rec.objects.push_back(ObjectAnnotation{
          static_cast<ClassId>(rank + 1), detail::draw_box(gen, kImageW, kImageH)});
    }
  }

  for (std::size_t rank = 0; rank < num_classes; ++rank) {
    if (instances_of[rank] > 0) continue;
    const auto target = static_cast<std::size_t>(
        static_cast<std::int64_t>(rank) % cfg.num_images);
    result.records[target].objects.push_back(ObjectAnnotation{
        static_cast<ClassId>(rank + 1), detail::draw_box(gen, kImageW, kImageH)});
    ++instances_of[rank];
  }

  if (cfg.cooccurrence_bias > 0) {
    for (ImageRecord& rec : result.records) {
      bool has_head = false;
      bool has_tail = false;
      for (const ObjectAnnotation& obj : rec.objects) {
        (obj.class_id <= num_head ? has_head : has_tail) = true;
      }
      if (!has_tail || has_head) continue;
      if (gen.next_double() < cfg.cooccurrence_bias) {
        const std::size_t rank = detail::draw_rank(head_cumulative, gen);
        rec.objects.push_back(ObjectAnnotation{
            static_cast<ClassId>(rank + 1),
            detail::draw_box(gen, kImageW, kImageH)});
      }
    }
  }

  result.index = build_index(result.records);
  return result;
}

}  // namespace tailsampler
