#pragma once

// Core domain types shared by every module: annotated images, per-class
// dataset statistics, and the frequent/common/rare class partition.

#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace tailsampler {

using ClassId = std::int64_t;
using ImageId = std::int64_t;

// Thrown for malformed input files; offset is the byte position when known.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& msg, std::size_t byte_offset)
      : std::runtime_error(msg), byte_offset_(byte_offset) {}
  std::size_t byte_offset() const { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

// Thrown when inputs are well-formed but violate a contract (dangling
// references, bad ranges, incompatible reports).
class ValidationError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Axis-aligned box, pixel units.
struct Box {
  double x = 0;
  double y = 0;
  double w = 0;
  double h = 0;

  bool operator==(const Box&) const = default;
};

struct ObjectAnnotation {
  ClassId class_id = 0;
  Box box;

  bool operator==(const ObjectAnnotation&) const = default;
};

struct ImageRecord {
  ImageId image_id = 0;
  int width = 0;
  int height = 0;
  std::vector<ObjectAnnotation> objects;  // may be empty

  bool operator==(const ImageRecord&) const = default;
};

// Per-class statistics over one dataset. Immutable once built; maps are
// ordered so that serialization and iteration are reproducible.
struct DatasetIndex {
  std::int64_t num_images = 0;
  std::map<ClassId, std::int64_t> image_count;     // distinct images with class
  std::map<ClassId, std::int64_t> instance_count;  // total objects of class
  std::map<ClassId, double> image_fraction;        // image_count / num_images

  bool operator==(const DatasetIndex&) const = default;
};

enum class Bin { frequent = 0, common = 1, rare = 2 };

inline const char* bin_name(Bin b) {
  switch (b) {
    case Bin::frequent: return "frequent";
    case Bin::common: return "common";
    case Bin::rare: return "rare";
  }
  return "?";
}

struct BinThresholds {
  std::int64_t rare_max = 10;     // image_count <= rare_max   -> rare
  std::int64_t common_max = 100;  // rare_max < count <= common_max -> common

  bool operator==(const BinThresholds&) const = default;
};

// Partition of all present classes by containing-image count.
struct ClassBins {
  BinThresholds thresholds;
  std::set<ClassId> frequent;
  std::set<ClassId> common;
  std::set<ClassId> rare;

  Bin bin_of(ClassId c) const {
    if (frequent.count(c)) return Bin::frequent;
    if (common.count(c)) return Bin::common;
    if (rare.count(c)) return Bin::rare;
    throw ValidationError("class " + std::to_string(c) + " is not binned");
  }

  std::size_t total() const {
    return frequent.size() + common.size() + rare.size();
  }
};

}  // namespace tailsampler
