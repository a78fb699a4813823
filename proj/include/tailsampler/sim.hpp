#pragma once

// Deterministic training-loop simulator. A feature-proxy model stands in for
// the detector: per-class prototypes drift linearly over iterations and every
// pushed entry carries Gaussian noise, so bank entries age the way stored RoI
// features would across model updates. The simulator measures, per strategy,
// the object-level distributions and bank dynamics that image-level and
// object-level resampling produce.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "tailsampler/dataset.hpp"
#include "tailsampler/digest.hpp"
#include "tailsampler/membank.hpp"
#include "tailsampler/report.hpp"
#include "tailsampler/rfs.hpp"
#include "tailsampler/rng.hpp"
#include "tailsampler/types.hpp"
#include "tailsampler/version.hpp"

namespace tailsampler {

enum class Strategy { baseline, rfs, ocs, rio, naive_repeat };

inline const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::baseline: return "baseline";
    case Strategy::rfs: return "rfs";
    case Strategy::ocs: return "ocs";
    case Strategy::rio: return "rio";
    case Strategy::naive_repeat: return "naive_repeat";
  }
  return "?";
}

inline Strategy parse_strategy(const std::string& name) {
  for (Strategy s : {Strategy::baseline, Strategy::rfs, Strategy::ocs,
                     Strategy::rio, Strategy::naive_repeat}) {
    if (name == strategy_name(s)) return s;
  }
  throw ValidationError("unknown strategy: " + name);
}

inline bool strategy_uses_rfs(Strategy s) {
  return s == Strategy::rfs || s == Strategy::rio;
}

inline bool strategy_uses_bank(Strategy s) {
  return s == Strategy::ocs || s == Strategy::rio;
}

struct ProxyConfig {
  std::int64_t feature_dim = 16;
  double class_prototype_scale = 1.0;
  double drift_rate = 0.01;  // prototype movement per iteration
  double noise_sigma = 0.05;
  double box_jitter = 0.05;  // relative box perturbation on push
};

struct SimConfig {
  Strategy strategy = Strategy::baseline;
  std::int64_t batch_size = 16;
  std::int64_t epochs = 1;
  std::int64_t samples_per_class = 20;  // x, per present targeted class
  RfsConfig rfs;
  BankConfig bank;
  ProxyConfig proxy;
  std::uint64_t seed = 0;
  // Operation order within an iteration. Default: sample, then push (with
  // dequeue folded into full-queue pushes), so a batch never samples entries
  // it just pushed. The alternative dequeues for the incoming pushes before
  // sampling.
  bool dequeue_before_sample = false;
};

inline nlohmann::ordered_json sim_config_to_json(const SimConfig& cfg) {
  nlohmann::ordered_json j;
  j["strategy"] = strategy_name(cfg.strategy);
  j["batch_size"] = cfg.batch_size;
  j["epochs"] = cfg.epochs;
  j["x"] = cfg.samples_per_class;
  j["seed"] = cfg.seed;
  j["dequeue_before_sample"] = cfg.dequeue_before_sample;
  j["rfs"] = {{"t", cfg.rfs.t},
              {"enabled", cfg.rfs.enabled},
              {"rounding_seed", cfg.rfs.rounding_seed}};
  j["bank"] = {{"capacity", cfg.bank.capacity},
               {"target_threshold", cfg.bank.target_threshold},
               {"feature_dim", cfg.bank.feature_dim},
               {"targeted_classes", cfg.bank.targeted_classes}};
  j["proxy"] = {{"feature_dim", cfg.proxy.feature_dim},
                {"class_prototype_scale", cfg.proxy.class_prototype_scale},
                {"drift_rate", cfg.proxy.drift_rate},
                {"noise_sigma", cfg.proxy.noise_sigma},
                {"box_jitter", cfg.proxy.box_jitter}};
  return j;
}

namespace detail {

constexpr std::uint64_t kProtoTag = 0x50524f544full;   // "PROTO"
constexpr std::uint64_t kDriftTag = 0x4452494654ull;   // "DRIFT"
constexpr std::uint64_t kNoiseTag = 0x4e4f495345ull;   // "NOISE"
constexpr std::uint64_t kSampleTag = 0x53414d50ull;    // "SAMP"
constexpr std::uint64_t kPushTag = 0x50555348ull;      // "PUSH"

inline void fill_normals(std::vector<double>& v, std::uint64_t key) {
  SplitMix64 gen(key);
  for (double& x : v) x = gen.normal();
}

}  // namespace detail

// Class prototype at iteration 0, a fixed pseudo-random vector per class.
inline std::vector<double> class_prototype(ClassId c, const ProxyConfig& proxy) {
  std::vector<double> v(static_cast<std::size_t>(proxy.feature_dim));
  detail::fill_normals(
      v, derive_key(detail::kProtoTag, {static_cast<std::uint64_t>(c)}));
  for (double& x : v) x *= proxy.class_prototype_scale;
  return v;
}

// Unit drift direction per class, so prototype displacement after n
// iterations has norm exactly drift_rate * n.
inline std::vector<double> class_drift_direction(ClassId c,
                                                 const ProxyConfig& proxy) {
  std::vector<double> v(static_cast<std::size_t>(proxy.feature_dim));
  detail::fill_normals(
      v, derive_key(detail::kDriftTag, {static_cast<std::uint64_t>(c)}));
  double norm = 0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm == 0) {
    v[0] = 1.0;
  } else {
    for (double& x : v) x /= norm;
  }
  return v;
}

// Prototype after `iteration` model updates.
inline std::vector<double> prototype_at(ClassId c, std::int64_t iteration,
                                        const ProxyConfig& proxy) {
  std::vector<double> v = class_prototype(c, proxy);
  const std::vector<double> dir = class_drift_direction(c, proxy);
  const double shift = proxy.drift_rate * static_cast<double>(iteration);
  for (std::size_t d = 0; d < v.size(); ++d) v[d] += shift * dir[d];
  return v;
}

// Proxy RoI feature for one ground-truth object: the class prototype at the
// current iteration plus Gaussian noise, with the source box jittered to
// model augmentation variation. Deterministic for identical arguments.
inline FeatureEntry proxy_feature(ClassId c, std::int64_t iteration,
                                  ImageId source_image, const Box& source_box,
                                  const ProxyConfig& proxy, std::uint64_t seed) {
  FeatureEntry entry;
  entry.class_id = c;
  entry.source_image = source_image;
  entry.iteration_stamp = iteration;
  entry.feature = prototype_at(c, iteration, proxy);
  SplitMix64 gen(derive_key(
      seed, {detail::kNoiseTag, static_cast<std::uint64_t>(c),
             static_cast<std::uint64_t>(iteration),
             static_cast<std::uint64_t>(source_image)}));
  if (proxy.noise_sigma > 0) {
    for (double& x : entry.feature) x += proxy.noise_sigma * gen.normal();
  }
  Box b = source_box;
  if (proxy.box_jitter > 0) {
    b.x += gen.uniform_real(-1, 1) * proxy.box_jitter * b.w;
    b.y += gen.uniform_real(-1, 1) * proxy.box_jitter * b.h;
    b.w = std::max(1e-6, b.w * (1 + gen.uniform_real(-1, 1) * proxy.box_jitter));
    b.h = std::max(1e-6, b.h * (1 + gen.uniform_real(-1, 1) * proxy.box_jitter));
  }
  entry.box = b;
  return entry;
}

namespace detail {

inline void validate_config(const SimConfig& cfg) {
  if (cfg.batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (cfg.epochs < 1) throw ValidationError("epochs must be >= 1");
  if (cfg.samples_per_class < 1) throw ValidationError("x must be >= 1");
  if (cfg.proxy.drift_rate < 0 || cfg.proxy.noise_sigma < 0 ||
      cfg.proxy.box_jitter < 0 || cfg.proxy.class_prototype_scale < 0) {
    throw ValidationError("proxy parameters must be non-negative");
  }
  const bool wants_rfs = strategy_uses_rfs(cfg.strategy);
  if (cfg.rfs.enabled != wants_rfs) {
    throw ValidationError(
        std::string("strategy ") + strategy_name(cfg.strategy) + " requires " +
        (wants_rfs ? "rfs.enabled=true" : "rfs.enabled=false"));
  }
  if (wants_rfs && !(cfg.rfs.t > 0 && cfg.rfs.t <= 1)) {
    throw ValidationError("rfs.t must lie in (0, 1]");
  }
  if (strategy_uses_bank(cfg.strategy) &&
      cfg.bank.feature_dim != cfg.proxy.feature_dim) {
    throw ValidationError("bank.feature_dim must match proxy.feature_dim");
  }
}

}  // namespace detail

// Rejects inconsistent configs: strategy/rfs mismatches, non-positive batch
// or sample counts, bank/proxy dimension conflicts.
inline void validate_sim_config(const SimConfig& cfg) {
  detail::validate_config(cfg);
}

namespace detail {

inline double feature_distance(const std::vector<double>& a,
                               const std::vector<double>& b) {
  double sum = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

}  // namespace detail

// Runs the simulation. Per epoch: realize the image multiset (RFS when the
// strategy calls for it, identity otherwise), chunk into batches (the last,
// possibly short, batch is processed), then per batch sample-then-push
// against the memory bank. The bank persists across epochs. Fully
// deterministic for a fixed (dataset, config, seed).
inline SimulationReport run(std::span<const ImageRecord> records,
                            const DatasetIndex& index, const ClassBins& bins,
                            const SimConfig& cfg) {
  detail::validate_config(cfg);
  if (records.empty()) throw ValidationError("dataset has no images");

  const bool uses_bank = strategy_uses_bank(cfg.strategy);
  const bool naive = cfg.strategy == Strategy::naive_repeat;
  const std::int64_t x = cfg.samples_per_class;

  BankConfig bank_cfg = cfg.bank;
  if (bank_cfg.targeted_classes.empty()) {
    bank_cfg.targeted_classes = derive_targets(index, bank_cfg.target_threshold);
  }
  bank_cfg.feature_dim = cfg.proxy.feature_dim;
  MemoryBank bank(bank_cfg);
  const std::set<ClassId>& targeted = bank.config().targeted_classes;

  const RepeatPlan plan = strategy_uses_rfs(cfg.strategy)
                              ? build_plan(index, records, cfg.rfs.t)
                              : identity_plan(records);

  std::unordered_map<ImageId, const ImageRecord*> lookup;
  lookup.reserve(records.size());
  for (const ImageRecord& rec : records) lookup[rec.image_id] = &rec;

  std::unordered_map<ClassId, Bin> bin_of;
  for (const auto& [c, n] : index.image_count) bin_of[c] = bins.bin_of(c);

  // Prototypes cached per class; recomputing per push would be wasteful.
  std::map<ClassId, std::vector<double>> proto0;
  std::map<ClassId, std::vector<double>> drift_dir;
  auto prototype_now = [&](ClassId c, std::int64_t iter) {
    auto p = proto0.find(c);
    if (p == proto0.end()) {
      p = proto0.emplace(c, class_prototype(c, cfg.proxy)).first;
      drift_dir.emplace(c, class_drift_direction(c, cfg.proxy));
    }
    std::vector<double> v = p->second;
    const std::vector<double>& dir = drift_dir.at(c);
    const double shift = cfg.proxy.drift_rate * static_cast<double>(iter);
    for (std::size_t d = 0; d < v.size(); ++d) v[d] += shift * dir[d];
    return v;
  };

  SimulationReport report;
  report.tool_version = kToolVersion;
  report.strategy = strategy_name(cfg.strategy);
  report.seed = cfg.seed;
  report.epochs = cfg.epochs;
  report.batch_size = cfg.batch_size;
  report.samples_per_class = x;
  report.dataset_digest = dataset_digest(index);
  report.config_digest = digest_string(sim_config_to_json(cfg).dump());
  report.thresholds = bins.thresholds;
  for (const auto& [c, n] : index.image_count) {
    report.classes[c] = ReportClassInfo{n, index.instance_count.at(c),
                                        bin_of.at(c), targeted.count(c) > 0};
  }

  std::int64_t iteration = 0;
  std::uint64_t push_counter = 0;

  for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::vector<ImageId> epoch_ids =
        realize_epoch(plan, epoch, cfg.seed);
    std::map<ClassId, PerClassEpochStats> class_stats;
    std::array<PerBinEpochStats, 3> bin_stats{};
    std::map<ClassId, std::set<ImageId>> epoch_sources;

    auto record_sample = [&](ClassId c, const FeatureEntry& e) {
      PerClassEpochStats& s = class_stats[c];
      const std::int64_t age = iteration - e.iteration_stamp;
      if (s.sampled_age_count == 0) {
        s.sampled_age_min = age;
        s.sampled_age_max = age;
      } else {
        s.sampled_age_min = std::min(s.sampled_age_min, age);
        s.sampled_age_max = std::max(s.sampled_age_max, age);
      }
      ++s.sampled_age_count;
      s.sampled_age_sum += static_cast<double>(age);
      ++s.augmented_instances;
      ++bin_stats[static_cast<std::size_t>(bin_of.at(c))].augmented_instances;
      epoch_sources[c].insert(e.source_image);
      report.age_distance.add(
          static_cast<double>(age),
          detail::feature_distance(e.feature, prototype_now(c, iteration)));
    };

    for (std::size_t offset = 0; offset < epoch_ids.size();
         offset += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(
          epoch_ids.size(), offset + static_cast<std::size_t>(cfg.batch_size));
      const std::span<const ImageId> batch(epoch_ids.data() + offset,
                                           end - offset);

      std::set<ClassId> present_targeted;
      for (ImageId id : batch) {
        const ImageRecord& rec = *lookup.at(id);
        for (const ObjectAnnotation& obj : rec.objects) {
          PerClassEpochStats& s = class_stats[obj.class_id];
          ++s.gt_instances;
          ++bin_stats[static_cast<std::size_t>(bin_of.at(obj.class_id))]
                .gt_instances;
          if (targeted.count(obj.class_id)) present_targeted.insert(obj.class_id);
        }
      }

      if (uses_bank) {
        if (cfg.dequeue_before_sample) {
          std::map<ClassId, std::int64_t> incoming;
          for (ImageId id : batch) {
            for (const ObjectAnnotation& obj : lookup.at(id)->objects) {
              if (targeted.count(obj.class_id)) ++incoming[obj.class_id];
            }
          }
          for (const auto& [c, n] : incoming) bank.evict_for(c, n);
        }
        for (ClassId c : present_targeted) {
          const auto sampled = bank.sample(
              c, x,
              derive_key(cfg.seed, {detail::kSampleTag,
                                    static_cast<std::uint64_t>(iteration)}));
          if (!sampled) continue;  // queue not yet populated
          for (const FeatureEntry& e : *sampled) record_sample(c, e);
        }
        for (ImageId id : batch) {
          const ImageRecord& rec = *lookup.at(id);
          for (const ObjectAnnotation& obj : rec.objects) {
            if (!targeted.count(obj.class_id)) continue;
            FeatureEntry entry = proxy_feature(
                obj.class_id, iteration, rec.image_id, obj.box, cfg.proxy,
                derive_key(cfg.seed, {detail::kPushTag, push_counter++}));
            const PushResult res = bank.push(std::move(entry));
            if (!res.accepted()) {
              throw ValidationError("bank rejected a targeted-class push");
            }
            PerClassEpochStats& s = class_stats[obj.class_id];
            ++s.bank_updates;
            ++bin_stats[static_cast<std::size_t>(bin_of.at(obj.class_id))]
                  .bank_updates;
          }
        }
      } else if (naive) {
        // Repeat the batch's own targeted objects x times: fresh features,
        // zero staleness, no bank and no cross-image diversity.
        for (ClassId c : present_targeted) {
          std::vector<FeatureEntry> local;
          for (ImageId id : batch) {
            const ImageRecord& rec = *lookup.at(id);
            for (const ObjectAnnotation& obj : rec.objects) {
              if (obj.class_id != c) continue;
              local.push_back(proxy_feature(
                  c, iteration, rec.image_id, obj.box, cfg.proxy,
                  derive_key(cfg.seed, {detail::kPushTag, push_counter++})));
            }
          }
          for (std::int64_t i = 0; i < x; ++i) {
            record_sample(c, local[static_cast<std::size_t>(i) % local.size()]);
          }
        }
      }

      ++iteration;
    }

    for (const auto& [c, sources] : epoch_sources) {
      class_stats[c].distinct_sources_sampled =
          static_cast<std::int64_t>(sources.size());
    }
    report.per_epoch_class.push_back(std::move(class_stats));
    report.per_epoch_bin.push_back(bin_stats);
  }

  return report;
}

// Per-strategy, per-bin aggregate rows for side-by-side inspection.
struct StrategySummary {
  std::string strategy;
  std::array<double, 3> gt_per_epoch{};
  std::array<double, 3> augmented_per_epoch{};
  std::array<double, 3> effective_per_epoch{};
  std::array<double, 3> bank_updates_per_epoch{};
  std::array<double, 3> mean_sampled_staleness{};
};

struct ComparisonTable {
  std::vector<StrategySummary> rows;

  const StrategySummary& row(const std::string& strategy) const {
    for (const auto& r : rows) {
      if (r.strategy == strategy) return r;
    }
    throw ValidationError("comparison has no strategy " + strategy);
  }

  // Relative change (percent) of effective instances in `bin`, strategy `a`
  // versus strategy `b`.
  double relative_effective_change_pct(Bin bin, const std::string& a,
                                       const std::string& b) const {
    const double va = row(a).effective_per_epoch[static_cast<std::size_t>(bin)];
    const double vb = row(b).effective_per_epoch[static_cast<std::size_t>(bin)];
    if (vb == 0) throw ValidationError("reference bin total is zero");
    return 100.0 * (va - vb) / vb;
  }
};

inline ComparisonTable compare_strategies(
    std::span<const SimulationReport> reports) {
  check_comparable(reports);
  ComparisonTable table;
  for (const SimulationReport& r : reports) {
    StrategySummary row;
    row.strategy = r.strategy;
    for (Bin b : {Bin::frequent, Bin::common, Bin::rare}) {
      const auto i = static_cast<std::size_t>(b);
      const auto epochs = static_cast<double>(r.epochs);
      row.gt_per_epoch[i] = static_cast<double>(r.bin_gt_total(b)) / epochs;
      row.augmented_per_epoch[i] =
          static_cast<double>(r.bin_augmented_total(b)) / epochs;
      row.effective_per_epoch[i] =
          static_cast<double>(r.bin_effective_total(b)) / epochs;
      std::int64_t updates = 0;
      for (const auto& e : r.per_epoch_bin) updates += e[i].bank_updates;
      row.bank_updates_per_epoch[i] = static_cast<double>(updates) / epochs;
      row.mean_sampled_staleness[i] = r.mean_sampled_staleness(b);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace tailsampler
