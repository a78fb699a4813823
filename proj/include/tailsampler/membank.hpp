#pragma once

// Object-centric memory bank: one bounded queue of feature/box entries per
// targeted class. Pushing to a full queue evicts the single oldest entry;
// sampling is uniform with replacement and never mutates the queue. A class
// cannot be sampled until its queue holds at least one entry.

#include <cassert>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include <nlohmann/json.hpp>

#include "tailsampler/rng.hpp"
#include "tailsampler/types.hpp"

namespace tailsampler {

// Proxy RoI feature plus source metadata. Stamps are the global training
// iteration at push time and are non-decreasing from queue bottom to top.
struct FeatureEntry {
  std::vector<double> feature;
  Box box;
  ClassId class_id = 0;
  ImageId source_image = 0;
  std::int64_t iteration_stamp = 0;

  bool operator==(const FeatureEntry&) const = default;
};

struct BankConfig {
  std::int64_t capacity = 60;          // v, max entries per class queue
  std::int64_t target_threshold = 30;  // image-count cutoff for targeting
  std::int64_t feature_dim = 16;       // D
  std::set<ClassId> targeted_classes;
};

// Classes whose containing-image count is at or below the threshold.
inline std::set<ClassId> derive_targets(const DatasetIndex& index,
                                        std::int64_t threshold) {
  if (threshold < 1) throw ValidationError("target threshold must be >= 1");
  std::set<ClassId> targets;
  for (const auto& [c, n] : index.image_count) {
    if (n <= threshold) targets.insert(c);
  }
  return targets;
}

enum class PushStatus { ok, not_targeted, wrong_dimension };

struct PushResult {
  PushStatus status = PushStatus::ok;
  std::optional<FeatureEntry> evicted;

  bool accepted() const { return status == PushStatus::ok; }
};

struct StalenessStats {
  std::int64_t min_age = 0;
  std::int64_t max_age = 0;
  double mean_age = 0;
  std::int64_t count = 0;
};

class MemoryBank {
 public:
  explicit MemoryBank(BankConfig config) : cfg_(std::move(config)) {
    if (cfg_.capacity < 1) throw ValidationError("bank capacity must be >= 1");
    if (cfg_.feature_dim < 1) {
      throw ValidationError("bank feature_dim must be >= 1");
    }
  }

  const BankConfig& config() const { return cfg_; }

  bool is_targeted(ClassId c) const { return cfg_.targeted_classes.count(c) > 0; }

  // Appends the entry at the top of its class queue, evicting the single
  // oldest entry first when the queue is full. Entries for non-targeted
  // classes are rejected, not fatal; callers skip them.
  PushResult push(FeatureEntry entry) {
    if (!is_targeted(entry.class_id)) return {PushStatus::not_targeted, {}};
    if (static_cast<std::int64_t>(entry.feature.size()) != cfg_.feature_dim) {
      return {PushStatus::wrong_dimension, {}};
    }
    std::deque<FeatureEntry>& q = queues_[entry.class_id];
    assert(q.empty() || q.back().iteration_stamp <= entry.iteration_stamp);
    PushResult result;
    if (static_cast<std::int64_t>(q.size()) == cfg_.capacity) {
      result.evicted = std::move(q.front());
      q.pop_front();
    }
    q.push_back(std::move(entry));
    return result;
  }

  // Dequeues oldest entries until `incoming` more pushes fit without
  // eviction. Supports the operation order that dequeues before sampling.
  std::vector<FeatureEntry> evict_for(ClassId c, std::int64_t incoming) {
    std::vector<FeatureEntry> evicted;
    auto it = queues_.find(c);
    if (it == queues_.end()) return evicted;
    std::deque<FeatureEntry>& q = it->second;
    while (!q.empty() &&
           static_cast<std::int64_t>(q.size()) + incoming > cfg_.capacity) {
      evicted.push_back(std::move(q.front()));
      q.pop_front();
    }
    return evicted;
  }

  // Draws exactly x entries uniformly at random with replacement. Returns
  // nullopt while the queue is unpopulated (the caller treats that as "no
  // augmentation yet"). The queue itself is never modified.
  std::optional<std::vector<FeatureEntry>> sample(ClassId c, std::int64_t x,
                                                  std::uint64_t seed) const {
    if (!is_targeted(c)) {
      throw ValidationError("sample from non-targeted class " +
                            std::to_string(c));
    }
    if (x < 1) throw ValidationError("sample count must be >= 1");
    auto it = queues_.find(c);
    if (it == queues_.end() || it->second.empty()) return std::nullopt;
    const std::deque<FeatureEntry>& q = it->second;
    SplitMix64 gen(derive_key(seed, {0x53414d504cull,  // "SAMPL"
                                     static_cast<std::uint64_t>(c)}));
    std::vector<FeatureEntry> out;
    out.reserve(static_cast<std::size_t>(x));
    for (std::int64_t i = 0; i < x; ++i) {
      out.push_back(q[static_cast<std::size_t>(gen.next_below(q.size()))]);
    }
    return out;
  }

  // Entry ages relative to `now`; max age belongs to the bottom (oldest)
  // entry. Empty or unknown queues yield nullopt.
  std::optional<StalenessStats> staleness(ClassId c, std::int64_t now) const {
    auto it = queues_.find(c);
    if (it == queues_.end() || it->second.empty()) return std::nullopt;
    StalenessStats stats;
    stats.count = static_cast<std::int64_t>(it->second.size());
    stats.min_age = now - it->second.back().iteration_stamp;
    stats.max_age = now - it->second.front().iteration_stamp;
    double sum = 0;
    for (const FeatureEntry& e : it->second) {
      sum += static_cast<double>(now - e.iteration_stamp);
    }
    stats.mean_age = sum / static_cast<double>(stats.count);
    return stats;
  }

  std::int64_t size(ClassId c) const {
    auto it = queues_.find(c);
    return it == queues_.end() ? 0 : static_cast<std::int64_t>(it->second.size());
  }

  std::int64_t total_entries() const {
    std::int64_t n = 0;
    for (const auto& [c, q] : queues_) n += static_cast<std::int64_t>(q.size());
    return n;
  }

  // Populated queues, bottom (oldest) to top (newest).
  const std::map<ClassId, std::deque<FeatureEntry>>& queues() const {
    return queues_;
  }

  // Versioned snapshot for checkpointing and cross-run diffing.
  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["format_version"] = 1;
    j["capacity"] = cfg_.capacity;
    j["target_threshold"] = cfg_.target_threshold;
    j["feature_dim"] = cfg_.feature_dim;
    j["targeted_classes"] = cfg_.targeted_classes;
    auto queues = nlohmann::ordered_json::array();
    for (const auto& [c, q] : queues_) {
      nlohmann::ordered_json entries = nlohmann::ordered_json::array();
      for (const FeatureEntry& e : q) {
        entries.push_back({{"feature", e.feature},
                           {"box", {e.box.x, e.box.y, e.box.w, e.box.h}},
                           {"source_image", e.source_image},
                           {"iteration_stamp", e.iteration_stamp}});
      }
      queues.push_back({{"class", c}, {"entries", std::move(entries)}});
    }
    j["queues"] = std::move(queues);
    return j;
  }

  static MemoryBank from_json(const nlohmann::json& j) {
    if (j.value("format_version", 0) != 1) {
      throw ValidationError("unsupported memory bank snapshot version");
    }
    BankConfig cfg;
    cfg.capacity = j.at("capacity").get<std::int64_t>();
    cfg.target_threshold = j.at("target_threshold").get<std::int64_t>();
    cfg.feature_dim = j.at("feature_dim").get<std::int64_t>();
    cfg.targeted_classes =
        j.at("targeted_classes").get<std::set<ClassId>>();
    MemoryBank bank(std::move(cfg));
    for (const auto& qj : j.at("queues")) {
      const auto c = qj.at("class").get<ClassId>();
      for (const auto& ej : qj.at("entries")) {
        FeatureEntry e;
        e.class_id = c;
        e.feature = ej.at("feature").get<std::vector<double>>();
        const auto& b = ej.at("box");
        e.box = Box{b.at(0).get<double>(), b.at(1).get<double>(),
                    b.at(2).get<double>(), b.at(3).get<double>()};
        e.source_image = ej.at("source_image").get<ImageId>();
        e.iteration_stamp = ej.at("iteration_stamp").get<std::int64_t>();
        const PushResult r = bank.push(std::move(e));
        if (!r.accepted()) {
          throw ValidationError("snapshot entry rejected on restore");
        }
      }
    }
    return bank;
  }

 private:
  BankConfig cfg_;
  std::map<ClassId, std::deque<FeatureEntry>> queues_;
};

}  // namespace tailsampler
