#pragma once

// Image-level repeat factor sampling: per-class factors r(c) = max(1,
// sqrt(t / f(c))), per-image factors r(I) = max over contained classes, and
// seeded realization of per-epoch image multisets.

#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <unordered_map>
#include <vector>

#include "tailsampler/dataset.hpp"
#include "tailsampler/rng.hpp"
#include "tailsampler/types.hpp"

namespace tailsampler {

struct RfsConfig {
  double t = 0.001;  // repeat grows for classes with image fraction below t
  bool enabled = true;
  std::uint64_t rounding_seed = 0;  // drives stochastic rounding + shuffle
};

// r(c). Exact to machine precision; f_c must be positive.
inline double class_repeat_factor(double f_c, double t) {
  if (!(f_c > 0)) {
    throw std::domain_error("class repeat factor requires f(c) > 0, got " +
                            std::to_string(f_c));
  }
  if (!(t > 0)) {
    throw std::domain_error("class repeat factor requires t > 0, got " +
                            std::to_string(t));
  }
  return std::max(1.0, std::sqrt(t / f_c));
}

struct RepeatPlan {
  double t = 0.001;
  std::map<ClassId, double> class_repeat;   // r(c) >= 1
  std::map<ImageId, double> image_repeat;   // r(I) >= 1, 1 for empty images
};

// r(I): max over the image's classes; 1 for an annotation-free image.
inline double image_repeat_factor(const std::set<ClassId>& classes_in_image,
                                  const RepeatPlan& plan) {
  double r = 1.0;
  for (ClassId c : classes_in_image) {
    auto it = plan.class_repeat.find(c);
    if (it == plan.class_repeat.end()) {
      throw ValidationError("image references class " + std::to_string(c) +
                            " absent from the repeat plan");
    }
    r = std::max(r, it->second);
  }
  return r;
}

// Builds the full plan for one dataset. Depends only on the index and the
// per-image class sets, so input record order does not matter.
inline RepeatPlan build_plan(const DatasetIndex& index,
                             std::span<const ImageRecord> records, double t) {
  RepeatPlan plan;
  plan.t = t;
  for (const auto& [c, f] : index.image_fraction) {
    plan.class_repeat[c] = class_repeat_factor(f, t);
  }
  for (const ImageRecord& rec : records) {
    std::set<ClassId> classes;
    for (const ObjectAnnotation& obj : rec.objects) classes.insert(obj.class_id);
    plan.image_repeat[rec.image_id] = image_repeat_factor(classes, plan);
  }
  return plan;
}

// A plan that repeats nothing; used by strategies without image resampling.
inline RepeatPlan identity_plan(std::span<const ImageRecord> records) {
  RepeatPlan plan;
  plan.t = 0;
  for (const ImageRecord& rec : records) plan.image_repeat[rec.image_id] = 1.0;
  return plan;
}

// Realizes one epoch: each image occurs floor(r(I)) times plus one more with
// probability frac(r(I)), so the expected occurrence count is exactly r(I).
// Both the rounding draw (keyed per image) and the final shuffle are
// deterministic functions of (seed, epoch_index), which keeps epochs
// independent and reproducible in any execution order.
inline std::vector<ImageId> realize_epoch(const RepeatPlan& plan,
                                          std::int64_t epoch_index,
                                          std::uint64_t seed) {
  constexpr std::uint64_t kRoundTag = 0x524f554e44ull;  // "ROUND"
  constexpr std::uint64_t kShuffleTag = 0x53485546ull;  // "SHUF"
  std::vector<ImageId> epoch;
  epoch.reserve(plan.image_repeat.size());
  for (const auto& [image_id, r] : plan.image_repeat) {
    const double whole = std::floor(r);
    auto n = static_cast<std::int64_t>(whole);
    const double frac = r - whole;
    if (frac > 0) {
      SplitMix64 coin(derive_key(
          seed, {kRoundTag, static_cast<std::uint64_t>(epoch_index),
                 static_cast<std::uint64_t>(image_id)}));
      if (coin.next_double() < frac) ++n;
    }
    epoch.insert(epoch.end(), static_cast<std::size_t>(n), image_id);
  }
  SplitMix64 gen(derive_key(
      seed, {kShuffleTag, static_cast<std::uint64_t>(epoch_index)}));
  shuffle(epoch, gen);
  return epoch;
}

// Instance totals over one realized epoch: every ground-truth object of every
// repeated occurrence counts.
inline InstanceHistogram epoch_instance_histogram(
    std::span<const ImageId> epoch, std::span<const ImageRecord> records,
    const ClassBins& bins) {
  std::unordered_map<ImageId, const ImageRecord*> lookup;
  lookup.reserve(records.size());
  for (const ImageRecord& rec : records) lookup[rec.image_id] = &rec;
  InstanceHistogram hist;
  for (ImageId id : epoch) {
    auto it = lookup.find(id);
    if (it == lookup.end()) {
      throw ValidationError("epoch references unknown image id " +
                            std::to_string(id));
    }
    for (const ObjectAnnotation& obj : it->second->objects) {
      ++hist.per_class[obj.class_id];
      ++hist.per_bin[static_cast<std::size_t>(bins.bin_of(obj.class_id))];
      ++hist.total;
    }
  }
  return hist;
}

}  // namespace tailsampler
