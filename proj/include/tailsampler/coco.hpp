#pragma once

// COCO/LVIS-style annotation ingest and emit. Only the fields the analyses
// need are read (images[].id/.width/.height, annotations[].image_id/
// .category_id/.bbox, categories[].id); everything else is ignored.

#include <algorithm>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "tailsampler/dataset.hpp"
#include "tailsampler/types.hpp"

namespace tailsampler {

enum class AnnotationFormat { lvis_coco_json };

inline AnnotationFormat parse_annotation_format(const std::string& name) {
  if (name == "lvis_coco_json") return AnnotationFormat::lvis_coco_json;
  throw ValidationError("unknown annotation format: " + name);
}

struct IngestOptions {
  AnnotationFormat format = AnnotationFormat::lvis_coco_json;
  // Lenient mode clamps boxes that fall slightly outside their image and
  // drops boxes that end up degenerate; strict mode turns either into an
  // error. Real LVIS data contains slightly out-of-bounds boxes.
  bool strict = false;
};

struct IngestResult {
  std::vector<ImageRecord> records;  // one per images[] entry, in file order
  DatasetIndex index;
};

namespace detail {

inline nlohmann::json parse_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open dataset file: " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("JSON parse error in " + path + " at byte " +
                         std::to_string(e.byte) + ": " + e.what(),
                     e.byte);
  }
}

inline const nlohmann::json& require_array(const nlohmann::json& root,
                                           const char* key) {
  auto it = root.find(key);
  if (it == root.end() || !it->is_array()) {
    throw ValidationError(std::string("annotation file is missing required '") +
                          key + "' array");
  }
  return *it;
}

// Clamps a box into [0,width]x[0,height]. Returns false if the clamped box
// has no positive area left.
inline bool clamp_box(Box& b, double width, double height) {
  const double x0 = std::clamp(b.x, 0.0, width);
  const double y0 = std::clamp(b.y, 0.0, height);
  const double x1 = std::clamp(b.x + b.w, 0.0, width);
  const double y1 = std::clamp(b.y + b.h, 0.0, height);
  b = Box{x0, y0, x1 - x0, y1 - y0};
  return b.w > 0 && b.h > 0;
}

}  // namespace detail

// Reads a COCO/LVIS JSON annotation file. Annotations referencing unknown
// image or category ids make the whole ingest fail with a ValidationError
// naming the offenders.
inline IngestResult ingest_annotations(const std::string& path,
                                       const IngestOptions& options = {}) {
  const nlohmann::json root = detail::parse_json_file(path);
  if (!root.is_object()) {
    throw ValidationError("annotation file root must be a JSON object: " + path);
  }
  const auto& images = detail::require_array(root, "images");
  const auto& annotations = detail::require_array(root, "annotations");
  const auto& categories = detail::require_array(root, "categories");

  std::unordered_set<ClassId> known_classes;
  for (const auto& cat : categories) {
    known_classes.insert(cat.at("id").get<ClassId>());
  }

  IngestResult result;
  result.records.reserve(images.size());
  std::unordered_map<ImageId, std::size_t> slot_of;
  for (const auto& img : images) {
    ImageRecord rec;
    rec.image_id = img.at("id").get<ImageId>();
    rec.width = img.value("width", 0);
    rec.height = img.value("height", 0);
    if (slot_of.count(rec.image_id)) {
      throw ValidationError("duplicate image id " +
                            std::to_string(rec.image_id) + " in " + path);
    }
    slot_of[rec.image_id] = result.records.size();
    result.records.push_back(std::move(rec));
  }

  std::vector<std::string> offenders;
  std::size_t ann_pos = 0;
  for (const auto& ann : annotations) {
    const ImageId image_id = ann.at("image_id").get<ImageId>();
    const ClassId class_id = ann.at("category_id").get<ClassId>();
    const auto slot = slot_of.find(image_id);
    if (slot == slot_of.end()) {
      offenders.push_back("annotation[" + std::to_string(ann_pos) +
                          "] references unknown image_id " +
                          std::to_string(image_id));
    } else if (!known_classes.count(class_id)) {
      offenders.push_back("annotation[" + std::to_string(ann_pos) +
                          "] references unknown category_id " +
                          std::to_string(class_id));
    } else {
      const auto& bbox = ann.at("bbox");
      Box box{bbox.at(0).get<double>(), bbox.at(1).get<double>(),
              bbox.at(2).get<double>(), bbox.at(3).get<double>()};
      ImageRecord& rec = result.records[slot->second];
      const Box original = box;
      bool keep = box.w > 0 && box.h > 0;
      if (keep && rec.width > 0 && rec.height > 0) {
        keep = detail::clamp_box(box, rec.width, rec.height);
      }
      if (options.strict && !(keep && box == original)) {
        throw ValidationError("annotation[" + std::to_string(ann_pos) +
                              "] box lies outside image " +
                              std::to_string(image_id) + " (strict mode)");
      }
      if (keep) rec.objects.push_back(ObjectAnnotation{class_id, box});
    }
    ++ann_pos;
  }
  if (!offenders.empty()) {
    std::ostringstream msg;
    msg << offenders.size() << " dangling reference(s) in " << path << ":";
    const std::size_t shown = std::min<std::size_t>(offenders.size(), 10);
    for (std::size_t i = 0; i < shown; ++i) msg << "\n  " << offenders[i];
    if (offenders.size() > shown) {
      msg << "\n  ... (" << offenders.size() - shown << " more)";
    }
    throw ValidationError(msg.str());
  }

  result.index = build_index(result.records);
  return result;
}

// Emits records in the same schema ingest reads, closing the round trip for
// synthetic datasets. Output is byte-deterministic for identical records.
inline std::string to_coco_json(std::span<const ImageRecord> records) {
  nlohmann::ordered_json root;
  auto images = nlohmann::ordered_json::array();
  auto annotations = nlohmann::ordered_json::array();
  std::set<ClassId> class_ids;
  std::int64_t next_ann_id = 1;
  for (const ImageRecord& rec : records) {
    images.push_back({{"id", rec.image_id},
                      {"width", rec.width},
                      {"height", rec.height}});
    for (const ObjectAnnotation& obj : rec.objects) {
      annotations.push_back(
          {{"id", next_ann_id++},
           {"image_id", rec.image_id},
           {"category_id", obj.class_id},
           {"bbox", {obj.box.x, obj.box.y, obj.box.w, obj.box.h}},
           {"area", obj.box.w * obj.box.h}});
      class_ids.insert(obj.class_id);
    }
  }
  auto categories = nlohmann::ordered_json::array();
  for (ClassId c : class_ids) categories.push_back({{"id", c}});
  root["images"] = std::move(images);
  root["annotations"] = std::move(annotations);
  root["categories"] = std::move(categories);
  return root.dump(2) + "\n";
}

inline void write_coco_json(std::span<const ImageRecord> records,
                            const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dataset file: " + path);
  out << to_coco_json(records);
}

}  // namespace tailsampler
