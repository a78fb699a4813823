#pragma once

// Simulation reports: per-epoch, per-class and per-bin tallies of ground
// truth, augmentation, bank updates and sampled-entry staleness, plus the
// side-by-side strategy comparison tables exported as CSV.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tailsampler/format.hpp"
#include "tailsampler/types.hpp"

namespace tailsampler {

struct PerClassEpochStats {
  std::int64_t gt_instances = 0;
  std::int64_t augmented_instances = 0;
  std::int64_t bank_updates = 0;
  std::int64_t distinct_sources_sampled = 0;
  // Ages (now - iteration_stamp) of entries returned by sampling.
  std::int64_t sampled_age_count = 0;
  std::int64_t sampled_age_min = 0;
  std::int64_t sampled_age_max = 0;
  double sampled_age_sum = 0;

  bool operator==(const PerClassEpochStats&) const = default;
};

struct PerBinEpochStats {
  std::int64_t gt_instances = 0;
  std::int64_t augmented_instances = 0;
  std::int64_t bank_updates = 0;

  bool operator==(const PerBinEpochStats&) const = default;
};

// Pearson accumulator over (sampled entry age, feature distance to the
// current class prototype) pairs, collected across the whole run.
struct AgeDistanceAccumulator {
  std::int64_t n = 0;
  double sum_age = 0;
  double sum_dist = 0;
  double sum_age2 = 0;
  double sum_dist2 = 0;
  double sum_age_dist = 0;

  void add(double age, double dist) {
    ++n;
    sum_age += age;
    sum_dist += dist;
    sum_age2 += age * age;
    sum_dist2 += dist * dist;
    sum_age_dist += age * dist;
  }

  double correlation() const {
    if (n < 2) return 0;
    const double num = static_cast<double>(n) * sum_age_dist - sum_age * sum_dist;
    const double va = static_cast<double>(n) * sum_age2 - sum_age * sum_age;
    const double vd = static_cast<double>(n) * sum_dist2 - sum_dist * sum_dist;
    if (va <= 0 || vd <= 0) return 0;
    return num / std::sqrt(va * vd);
  }

  bool operator==(const AgeDistanceAccumulator&) const = default;
};

struct ReportClassInfo {
  std::int64_t image_count = 0;
  std::int64_t instance_count = 0;  // one dataset pass, the baseline curve
  Bin bin = Bin::frequent;
  bool targeted = false;

  bool operator==(const ReportClassInfo&) const = default;
};

struct SimulationReport {
  std::string tool_version;
  std::string strategy;
  std::uint64_t seed = 0;
  std::int64_t epochs = 0;
  std::int64_t batch_size = 0;
  std::int64_t samples_per_class = 0;
  std::string dataset_digest;
  std::string config_digest;
  BinThresholds thresholds;
  std::map<ClassId, ReportClassInfo> classes;
  // One entry per epoch; class maps hold only classes touched that epoch.
  std::vector<std::map<ClassId, PerClassEpochStats>> per_epoch_class;
  std::vector<std::array<PerBinEpochStats, 3>> per_epoch_bin;
  AgeDistanceAccumulator age_distance;

  std::int64_t gt_total(ClassId c) const {
    std::int64_t n = 0;
    for (const auto& m : per_epoch_class) {
      auto it = m.find(c);
      if (it != m.end()) n += it->second.gt_instances;
    }
    return n;
  }

  std::int64_t augmented_total(ClassId c) const {
    std::int64_t n = 0;
    for (const auto& m : per_epoch_class) {
      auto it = m.find(c);
      if (it != m.end()) n += it->second.augmented_instances;
    }
    return n;
  }

  std::int64_t bank_update_total(ClassId c) const {
    std::int64_t n = 0;
    for (const auto& m : per_epoch_class) {
      auto it = m.find(c);
      if (it != m.end()) n += it->second.bank_updates;
    }
    return n;
  }

  std::int64_t bin_gt_total(Bin b) const {
    std::int64_t n = 0;
    for (const auto& e : per_epoch_bin) {
      n += e[static_cast<std::size_t>(b)].gt_instances;
    }
    return n;
  }

  std::int64_t bin_augmented_total(Bin b) const {
    std::int64_t n = 0;
    for (const auto& e : per_epoch_bin) {
      n += e[static_cast<std::size_t>(b)].augmented_instances;
    }
    return n;
  }

  std::int64_t bin_effective_total(Bin b) const {
    return bin_gt_total(b) + bin_augmented_total(b);
  }

  // Mean age of sampled entries for one class over the whole run.
  double mean_sampled_staleness(ClassId c) const {
    double sum = 0;
    std::int64_t count = 0;
    for (const auto& m : per_epoch_class) {
      auto it = m.find(c);
      if (it != m.end()) {
        sum += it->second.sampled_age_sum;
        count += it->second.sampled_age_count;
      }
    }
    return count == 0 ? 0.0 : sum / static_cast<double>(count);
  }

  // Mean age of sampled entries pooled over every class in a bin.
  double mean_sampled_staleness(Bin b) const {
    double sum = 0;
    std::int64_t count = 0;
    for (const auto& m : per_epoch_class) {
      for (const auto& [c, stats] : m) {
        if (classes.at(c).bin != b) continue;
        sum += stats.sampled_age_sum;
        count += stats.sampled_age_count;
      }
    }
    return count == 0 ? 0.0 : sum / static_cast<double>(count);
  }
};

inline nlohmann::ordered_json report_to_json(const SimulationReport& r) {
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  j["tool_version"] = r.tool_version;
  j["strategy"] = r.strategy;
  j["seed"] = r.seed;
  j["epochs"] = r.epochs;
  j["batch_size"] = r.batch_size;
  j["samples_per_class"] = r.samples_per_class;
  j["dataset_digest"] = r.dataset_digest;
  j["config_digest"] = r.config_digest;
  j["bin_thresholds"] = {{"rare_max", r.thresholds.rare_max},
                         {"common_max", r.thresholds.common_max}};
  auto classes = nlohmann::ordered_json::array();
  for (const auto& [c, info] : r.classes) {
    classes.push_back({{"id", c},
                       {"image_count", info.image_count},
                       {"instance_count", info.instance_count},
                       {"bin", bin_name(info.bin)},
                       {"targeted", info.targeted}});
  }
  j["classes"] = std::move(classes);
  auto epochs = nlohmann::ordered_json::array();
  for (std::size_t e = 0; e < r.per_epoch_class.size(); ++e) {
    nlohmann::ordered_json ej;
    ej["epoch"] = e;
    auto class_rows = nlohmann::ordered_json::array();
    for (const auto& [c, s] : r.per_epoch_class[e]) {
      class_rows.push_back({{"id", c},
                            {"gt_instances", s.gt_instances},
                            {"augmented_instances", s.augmented_instances},
                            {"bank_updates", s.bank_updates},
                            {"distinct_sources_sampled", s.distinct_sources_sampled},
                            {"sampled_age_count", s.sampled_age_count},
                            {"sampled_age_min", s.sampled_age_min},
                            {"sampled_age_max", s.sampled_age_max},
                            {"sampled_age_sum", s.sampled_age_sum}});
    }
    ej["classes"] = std::move(class_rows);
    auto bin_rows = nlohmann::ordered_json::array();
    for (std::size_t b = 0; b < 3; ++b) {
      const PerBinEpochStats& s = r.per_epoch_bin[e][b];
      bin_rows.push_back({{"bin", bin_name(static_cast<Bin>(b))},
                          {"gt_instances", s.gt_instances},
                          {"augmented_instances", s.augmented_instances},
                          {"bank_updates", s.bank_updates}});
    }
    ej["bins"] = std::move(bin_rows);
    epochs.push_back(std::move(ej));
  }
  j["epoch_stats"] = std::move(epochs);
  j["age_distance"] = {{"n", r.age_distance.n},
                       {"sum_age", r.age_distance.sum_age},
                       {"sum_dist", r.age_distance.sum_dist},
                       {"sum_age2", r.age_distance.sum_age2},
                       {"sum_dist2", r.age_distance.sum_dist2},
                       {"sum_age_dist", r.age_distance.sum_age_dist}};
  return j;
}

inline Bin bin_from_name(const std::string& name) {
  if (name == "frequent") return Bin::frequent;
  if (name == "common") return Bin::common;
  if (name == "rare") return Bin::rare;
  throw ValidationError("unknown bin name: " + name);
}

inline SimulationReport report_from_json(const nlohmann::json& j) {
  if (j.value("format_version", 0) != 1) {
    throw ValidationError("unsupported report format version");
  }
  SimulationReport r;
  r.tool_version = j.at("tool_version").get<std::string>();
  r.strategy = j.at("strategy").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.epochs = j.at("epochs").get<std::int64_t>();
  r.batch_size = j.at("batch_size").get<std::int64_t>();
  r.samples_per_class = j.at("samples_per_class").get<std::int64_t>();
  r.dataset_digest = j.at("dataset_digest").get<std::string>();
  r.config_digest = j.at("config_digest").get<std::string>();
  r.thresholds.rare_max = j.at("bin_thresholds").at("rare_max").get<std::int64_t>();
  r.thresholds.common_max =
      j.at("bin_thresholds").at("common_max").get<std::int64_t>();
  for (const auto& cj : j.at("classes")) {
    ReportClassInfo info;
    info.image_count = cj.at("image_count").get<std::int64_t>();
    info.instance_count = cj.at("instance_count").get<std::int64_t>();
    info.bin = bin_from_name(cj.at("bin").get<std::string>());
    info.targeted = cj.at("targeted").get<bool>();
    r.classes[cj.at("id").get<ClassId>()] = info;
  }
  for (const auto& ej : j.at("epoch_stats")) {
    std::map<ClassId, PerClassEpochStats> class_map;
    for (const auto& cj : ej.at("classes")) {
      PerClassEpochStats s;
      s.gt_instances = cj.at("gt_instances").get<std::int64_t>();
      s.augmented_instances = cj.at("augmented_instances").get<std::int64_t>();
      s.bank_updates = cj.at("bank_updates").get<std::int64_t>();
      s.distinct_sources_sampled =
          cj.at("distinct_sources_sampled").get<std::int64_t>();
      s.sampled_age_count = cj.at("sampled_age_count").get<std::int64_t>();
      s.sampled_age_min = cj.at("sampled_age_min").get<std::int64_t>();
      s.sampled_age_max = cj.at("sampled_age_max").get<std::int64_t>();
      s.sampled_age_sum = cj.at("sampled_age_sum").get<double>();
      class_map[cj.at("id").get<ClassId>()] = s;
    }
    r.per_epoch_class.push_back(std::move(class_map));
    std::array<PerBinEpochStats, 3> bins_arr{};
    for (const auto& bj : ej.at("bins")) {
      const Bin b = bin_from_name(bj.at("bin").get<std::string>());
      PerBinEpochStats& s = bins_arr[static_cast<std::size_t>(b)];
      s.gt_instances = bj.at("gt_instances").get<std::int64_t>();
      s.augmented_instances = bj.at("augmented_instances").get<std::int64_t>();
      s.bank_updates = bj.at("bank_updates").get<std::int64_t>();
    }
    r.per_epoch_bin.push_back(bins_arr);
  }
  const auto& ad = j.at("age_distance");
  r.age_distance.n = ad.at("n").get<std::int64_t>();
  r.age_distance.sum_age = ad.at("sum_age").get<double>();
  r.age_distance.sum_dist = ad.at("sum_dist").get<double>();
  r.age_distance.sum_age2 = ad.at("sum_age2").get<double>();
  r.age_distance.sum_dist2 = ad.at("sum_dist2").get<double>();
  r.age_distance.sum_age_dist = ad.at("sum_age_dist").get<double>();
  return r;
}

inline SimulationReport load_report(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open report file: " + path);
  try {
    return report_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("JSON parse error in " + path + " at byte " +
                         std::to_string(e.byte) + ": " + e.what(),
                     e.byte);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed report " + path + ": " + e.what());
  }
}

// Rejects reports that cannot be compared side by side. Throws a
// ValidationError naming every mismatched field.
inline void check_comparable(std::span<const SimulationReport> reports) {
  if (reports.size() < 2) {
    throw ValidationError("comparison requires at least 2 reports");
  }
  std::vector<std::string> mismatched;
  const SimulationReport& first = reports.front();
  for (std::size_t i = 1; i < reports.size(); ++i) {
    if (reports[i].dataset_digest != first.dataset_digest) {
      mismatched.push_back("dataset_digest (report 0 vs " + std::to_string(i) +
                           ")");
    }
    if (reports[i].epochs != first.epochs) {
      mismatched.push_back("epochs (report 0 vs " + std::to_string(i) + ")");
    }
    if (!(reports[i].thresholds == first.thresholds)) {
      mismatched.push_back("bin_thresholds (report 0 vs " + std::to_string(i) +
                           ")");
    }
  }
  if (!mismatched.empty()) {
    std::string msg = "incompatible reports, mismatched fields:";
    for (const std::string& m : mismatched) msg += "\n  " + m;
    throw ValidationError(msg);
  }
}

namespace detail {

inline double per_epoch(std::int64_t total, std::int64_t epochs) {
  return epochs == 0 ? 0.0 : static_cast<double>(total) / static_cast<double>(epochs);
}

}  // namespace detail

// Figure-table CSVs. Every file carries one column group per report, labeled
// by strategy name; values are per-epoch means.
//   fig4a.csv  class_id,image_count,bin,<s>_gt_per_epoch...
//   fig4b.csv  bin,<s>_gt_per_epoch,<s>_augmented_per_epoch,<s>_effective_per_epoch...
//   fig4c.csv  rare classes: class_id,instance_count,<s>_bank_updates_per_epoch...
//   fig4d.csv  class_id,image_count,bin,<s>_effective_per_epoch...
inline void write_figure_csvs(std::span<const SimulationReport> reports,
                              const std::filesystem::path& dir) {
  if (reports.empty()) throw ValidationError("no reports to write");
  if (reports.size() > 1) check_comparable(reports);
  const SimulationReport& first = reports.front();

  auto open = [&dir](const char* name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) {
      throw std::runtime_error(std::string("cannot write ") +
                               (dir / name).string());
    }
    return out;
  };

  {
    std::ofstream out = open("fig4a.csv");
    out << "class_id,image_count,bin";
    for (const auto& r : reports) out << "," << r.strategy << "_gt_per_epoch";
    out << "\n";
    for (const auto& [c, info] : first.classes) {
      out << c << "," << info.image_count << "," << bin_name(info.bin);
      for (const auto& r : reports) {
        out << "," << fmt_double(detail::per_epoch(r.gt_total(c), r.epochs));
      }
      out << "\n";
    }
  }
  {
    std::ofstream out = open("fig4b.csv");
    out << "bin";
    for (const auto& r : reports) {
      out << "," << r.strategy << "_gt_per_epoch"
          << "," << r.strategy << "_augmented_per_epoch"
          << "," << r.strategy << "_effective_per_epoch";
    }
    out << "\n";
    for (Bin b : {Bin::frequent, Bin::common, Bin::rare}) {
      out << bin_name(b);
      for (const auto& r : reports) {
        out << "," << fmt_double(detail::per_epoch(r.bin_gt_total(b), r.epochs))
            << ","
            << fmt_double(detail::per_epoch(r.bin_augmented_total(b), r.epochs))
            << ","
            << fmt_double(detail::per_epoch(r.bin_effective_total(b), r.epochs));
      }
      out << "\n";
    }
  }
  {
    std::ofstream out = open("fig4c.csv");
    out << "class_id,instance_count";
    for (const auto& r : reports) {
      out << "," << r.strategy << "_bank_updates_per_epoch";
    }
    out << "\n";
    for (const auto& [c, info] : first.classes) {
      if (info.bin != Bin::rare) continue;
      out << c << "," << info.instance_count;
      for (const auto& r : reports) {
        out << ","
            << fmt_double(detail::per_epoch(r.bank_update_total(c), r.epochs));
      }
      out << "\n";
    }
  }
  {
    std::ofstream out = open("fig4d.csv");
    out << "class_id,image_count,bin";
    for (const auto& r : reports) {
      out << "," << r.strategy << "_effective_per_epoch";
    }
    out << "\n";
    for (const auto& [c, info] : first.classes) {
      out << c << "," << info.image_count << "," << bin_name(info.bin);
      for (const auto& r : reports) {
        out << ","
            << fmt_double(detail::per_epoch(
                   r.gt_total(c) + r.augmented_total(c), r.epochs));
      }
      out << "\n";
    }
  }
}

// Long-format per-bin summary with the relative effective-instance change of
// each report against the first one (the reference, typically the baseline).
inline void write_summary_csv(std::span<const SimulationReport> reports,
                              const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "strategy,bin,gt_per_epoch,augmented_per_epoch,effective_per_epoch,"
         "bank_updates_per_epoch,mean_sampled_staleness,"
         "effective_rel_change_vs_first_pct\n";
  const SimulationReport& ref = reports.front();
  for (const auto& r : reports) {
    for (Bin b : {Bin::frequent, Bin::common, Bin::rare}) {
      std::int64_t updates = 0;
      for (const auto& e : r.per_epoch_bin) {
        updates += e[static_cast<std::size_t>(b)].bank_updates;
      }
      const double eff = detail::per_epoch(r.bin_effective_total(b), r.epochs);
      const double ref_eff =
          detail::per_epoch(ref.bin_effective_total(b), ref.epochs);
      const double rel =
          ref_eff == 0 ? 0.0 : 100.0 * (eff - ref_eff) / ref_eff;
      out << r.strategy << "," << bin_name(b) << ","
          << fmt_double(detail::per_epoch(r.bin_gt_total(b), r.epochs)) << ","
          << fmt_double(detail::per_epoch(r.bin_augmented_total(b), r.epochs))
          << "," << fmt_double(eff) << ","
          << fmt_double(detail::per_epoch(updates, r.epochs)) << ","
          << fmt_double(r.mean_sampled_staleness(b)) << "," << fmt_double(rel)
          << "\n";
    }
  }
}

}  // namespace tailsampler
