#pragma once

// Dataset statistics: index construction, frequent/common/rare binning and
// instance histograms. Everything here is a pure function of its inputs.

#include <array>
#include <span>
#include <string>

#include <nlohmann/json.hpp>

#include "tailsampler/digest.hpp"
#include "tailsampler/types.hpp"

namespace tailsampler {

inline DatasetIndex build_index(std::span<const ImageRecord> records) {
  DatasetIndex index;
  index.num_images = static_cast<std::int64_t>(records.size());
  for (const ImageRecord& rec : records) {
    std::set<ClassId> seen;
    for (const ObjectAnnotation& obj : rec.objects) {
      ++index.instance_count[obj.class_id];
      seen.insert(obj.class_id);
    }
    for (ClassId c : seen) ++index.image_count[c];
  }
  for (const auto& [c, n] : index.image_count) {
    index.image_fraction[c] =
        static_cast<double>(n) / static_cast<double>(index.num_images);
  }
  return index;
}

// Partitions present classes by containing-image count. Every class lands in
// exactly one bin.
inline ClassBins compute_bins(const DatasetIndex& index,
                              BinThresholds thresholds = {}) {
  if (thresholds.rare_max >= thresholds.common_max) {
    throw ValidationError("bin thresholds require rare_max < common_max (got " +
                          std::to_string(thresholds.rare_max) + ", " +
                          std::to_string(thresholds.common_max) + ")");
  }
  ClassBins bins;
  bins.thresholds = thresholds;
  for (const auto& [c, n] : index.image_count) {
    if (n <= thresholds.rare_max) {
      bins.rare.insert(c);
    } else if (n <= thresholds.common_max) {
      bins.common.insert(c);
    } else {
      bins.frequent.insert(c);
    }
  }
  return bins;
}

struct InstanceHistogram {
  std::map<ClassId, std::int64_t> per_class;
  std::array<std::int64_t, 3> per_bin = {0, 0, 0};  // indexed by Bin
  std::int64_t total = 0;

  std::int64_t bin_total(Bin b) const {
    return per_bin[static_cast<std::size_t>(b)];
  }
};

// Ground-truth object totals of one dataset pass; the no-resampling baseline.
inline InstanceHistogram instance_histogram(std::span<const ImageRecord> records,
                                            const ClassBins& bins) {
  InstanceHistogram hist;
  for (const ImageRecord& rec : records) {
    for (const ObjectAnnotation& obj : rec.objects) {
      ++hist.per_class[obj.class_id];
      ++hist.per_bin[static_cast<std::size_t>(bins.bin_of(obj.class_id))];
      ++hist.total;
    }
  }
  return hist;
}

// Canonical JSON form of an index: class ids ascending, fixed field order.
// Two identical datasets serialize to identical bytes.
inline nlohmann::ordered_json index_to_json(const DatasetIndex& index) {
  nlohmann::ordered_json j;
  j["num_images"] = index.num_images;
  auto classes = nlohmann::ordered_json::array();
  for (const auto& [c, n] : index.image_count) {
    nlohmann::ordered_json row;
    row["id"] = c;
    row["image_count"] = n;
    row["instance_count"] = index.instance_count.at(c);
    row["image_fraction"] = index.image_fraction.at(c);
    classes.push_back(std::move(row));
  }
  j["classes"] = std::move(classes);
  return j;
}

inline std::string index_to_canonical_string(const DatasetIndex& index) {
  return index_to_json(index).dump(2) + "\n";
}

// Fingerprint used by reports to check they were produced from one dataset.
inline std::string dataset_digest(const DatasetIndex& index) {
  return digest_string(index_to_canonical_string(index));
}

}  // namespace tailsampler
