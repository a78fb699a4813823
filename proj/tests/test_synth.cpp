#include <cmath>
#include <map>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "tailsampler/coco.hpp"
#include "tailsampler/dataset.hpp"
#include "tailsampler/synth.hpp"

namespace ts = tailsampler;

namespace {

ts::SynthConfig reference_config() { return ts::SynthConfig{}; }

}  // namespace

TEST(Synth, DeterministicForFixedSeed) {
  ts::SynthConfig cfg;
  cfg.num_classes = 40;
  cfg.num_images = 300;
  cfg.seed = 42;
  const ts::SynthResult a = ts::generate(cfg);
  const ts::SynthResult b = ts::generate(cfg);
  EXPECT_EQ(ts::to_coco_json(a.records), ts::to_coco_json(b.records));
  EXPECT_EQ(a.index, b.index);

  cfg.seed = 43;
  const ts::SynthResult c = ts::generate(cfg);
  EXPECT_NE(ts::to_coco_json(a.records), ts::to_coco_json(c.records));
}

TEST(Synth, EveryClassCovered) {
  const ts::SynthResult result = ts::generate(reference_config());
  EXPECT_EQ(result.index.image_count.size(), 200u);
  for (ts::ClassId c = 1; c <= 200; ++c) {
    ASSERT_GE(result.index.image_count.at(c), 1) << "class " << c;
  }
}

TEST(Synth, ReferenceConfigFillsAllThreeBins) {
  const ts::SynthResult result = ts::generate(reference_config());
  const ts::ClassBins bins = ts::compute_bins(result.index, {});
  EXPECT_GT(bins.frequent.size(), 0u);
  EXPECT_GT(bins.common.size(), 0u);
  EXPECT_GT(bins.rare.size(), 0u);
  EXPECT_EQ(result.num_head_classes, 10);  // 5% of 200 ranks
}

TEST(Synth, IndexMatchesBruteForceRecount) {
  ts::SynthConfig cfg;
  cfg.num_classes = 30;
  cfg.num_images = 400;
  cfg.seed = 9;
  const ts::SynthResult result = ts::generate(cfg);

  std::map<ts::ClassId, std::set<ts::ImageId>> images_of;
  std::map<ts::ClassId, std::int64_t> instances_of;
  for (const ts::ImageRecord& rec : result.records) {
    for (const ts::ObjectAnnotation& obj : rec.objects) {
      images_of[obj.class_id].insert(rec.image_id);
      ++instances_of[obj.class_id];
    }
  }
  ASSERT_EQ(result.index.image_count.size(), images_of.size());
  for (const auto& [c, imgs] : images_of) {
    EXPECT_EQ(result.index.image_count.at(c),
              static_cast<std::int64_t>(imgs.size()));
    EXPECT_EQ(result.index.instance_count.at(c), instances_of.at(c));
  }
}

TEST(Synth, BoxesLieInsideCanvas) {
  const ts::SynthResult result = ts::generate(reference_config());
  for (const ts::ImageRecord& rec : result.records) {
    for (const ts::ObjectAnnotation& obj : rec.objects) {
      ASSERT_GE(obj.box.x, 0.0);
      ASSERT_GE(obj.box.y, 0.0);
      ASSERT_GT(obj.box.w, 0.0);
      ASSERT_GT(obj.box.h, 0.0);
      ASSERT_LE(obj.box.x + obj.box.w, rec.width);
      ASSERT_LE(obj.box.y + obj.box.h, rec.height);
    }
  }
}

TEST(Synth, FullBiasForcesHeadClassIntoEveryTailImage) {
  ts::SynthConfig cfg;
  cfg.num_classes = 60;
  cfg.num_images = 1500;
  cfg.zipf_exponent = 1.0;
  cfg.min_objects = 1;
  cfg.max_objects = 3;
  cfg.cooccurrence_bias = 1.0;
  cfg.seed = 21;
  const ts::SynthResult result = ts::generate(cfg);
  ASSERT_EQ(result.num_head_classes, 3);

  for (const ts::ImageRecord& rec : result.records) {
    bool has_tail = false, has_head = false;
    for (const ts::ObjectAnnotation& obj : rec.objects) {
      (obj.class_id <= result.num_head_classes ? has_head : has_tail) = true;
    }
    if (has_tail) {
      ASSERT_TRUE(has_head) << "image " << rec.image_id
                            << " holds a tail class but no head class";
    }
  }

  // At this size every head class lands in the frequent bin, so the property
  // above reads: an image with a rare class always has a frequent object.
  const ts::ClassBins bins = ts::compute_bins(result.index, {});
  for (ts::ClassId c = 1; c <= result.num_head_classes; ++c) {
    EXPECT_TRUE(bins.frequent.count(c)) << "head class " << c;
  }
  for (ts::ClassId c : bins.rare) {
    EXPECT_GT(c, result.num_head_classes);
  }
}

TEST(Synth, ZeroBiasAddsNoCoOccurrenceObjects) {
  ts::SynthConfig cfg;
  cfg.num_classes = 60;
  cfg.num_images = 800;
  cfg.cooccurrence_bias = 0.0;
  cfg.seed = 4;
  const ts::SynthResult result = ts::generate(cfg);
  std::size_t tail_only = 0;
  for (const ts::ImageRecord& rec : result.records) {
    bool has_tail = false, has_head = false;
    for (const ts::ObjectAnnotation& obj : rec.objects) {
      (obj.class_id <= result.num_head_classes ? has_head : has_tail) = true;
    }
    if (has_tail && !has_head) ++tail_only;
  }
  EXPECT_GT(tail_only, 0u);  // without the bias pass such images survive
}

TEST(Synth, NearZeroExponentMatchesUniformMultinomial) {
  // As the exponent approaches 0 the class draw becomes uniform. With
  // exactly 3 objects per image, P(class c present in an image) is
  // q = 1 - (1 - p_c)^3, so image_count(c) ~ Binomial(N, q).
  ts::SynthConfig cfg;
  cfg.num_classes = 50;
  cfg.num_images = 2000;
  cfg.zipf_exponent = 1e-6;
  cfg.min_objects = 3;
  cfg.max_objects = 3;
  cfg.cooccurrence_bias = 0.0;
  cfg.seed = 3;
  const ts::SynthResult result = ts::generate(cfg);

  double weight_sum = 0;
  std::vector<double> weight(static_cast<std::size_t>(cfg.num_classes));
  for (std::size_t k = 0; k < weight.size(); ++k) {
    weight[k] = std::pow(static_cast<double>(k + 1), -cfg.zipf_exponent);
    weight_sum += weight[k];
  }
  for (ts::ClassId c = 1; c <= cfg.num_classes; ++c) {
    const double p = weight[static_cast<std::size_t>(c - 1)] / weight_sum;
    const double q = 1.0 - std::pow(1.0 - p, 3.0);
    const double mean = static_cast<double>(cfg.num_images) * q;
    const double sigma =
        std::sqrt(static_cast<double>(cfg.num_images) * q * (1.0 - q));
    const double observed =
        static_cast<double>(result.index.image_count.at(c));
    EXPECT_NEAR(observed, mean, 3.0 * sigma) << "class " << c;
  }
}

TEST(Synth, PopularityDecreasesWithRankAcrossSeeds) {
  // Expected image counts fall with rank; compare rank pairs spaced 4x
  // apart, averaged over 25 seeds, where the gap dwarfs seed noise.
  ts::SynthConfig cfg;
  cfg.num_classes = 100;
  cfg.num_images = 1500;
  cfg.zipf_exponent = 1.2;
  cfg.min_objects = 1;
  cfg.max_objects = 4;
  cfg.cooccurrence_bias = 0.0;

  std::map<ts::ClassId, double> mean_count;
  constexpr int kSeeds = 25;
  for (int s = 0; s < kSeeds; ++s) {
    cfg.seed = 100 + static_cast<std::uint64_t>(s);
    const ts::SynthResult result = ts::generate(cfg);
    for (ts::ClassId c : {1, 4, 16, 64}) {
      mean_count[c] += static_cast<double>(result.index.image_count.at(c)) /
                       kSeeds;
    }
  }
  EXPECT_GT(mean_count[1], mean_count[4]);
  EXPECT_GT(mean_count[4], mean_count[16]);
  EXPECT_GT(mean_count[16], mean_count[64]);
}

TEST(Synth, RejectsInvalidConfigs) {
  ts::SynthConfig cfg;
  cfg.num_classes = 2;
  EXPECT_THROW(ts::generate(cfg), ts::ValidationError);

  cfg = {};
  cfg.zipf_exponent = 0;
  EXPECT_THROW(ts::generate(cfg), ts::ValidationError);

  cfg = {};
  cfg.min_objects = 0;
  EXPECT_THROW(ts::generate(cfg), ts::ValidationError);

  cfg = {};
  cfg.max_objects = 0;
  EXPECT_THROW(ts::generate(cfg), ts::ValidationError);

  cfg = {};
  cfg.cooccurrence_bias = 1.5;
  EXPECT_THROW(ts::generate(cfg), ts::ValidationError);
}

TEST(Synth, RejectsInfeasibleClassCount) {
  ts::SynthConfig cfg;
  cfg.num_classes = 100;
  cfg.num_images = 10;
  cfg.max_objects = 5;  // 10 * 5 = 50 < 100 classes
  cfg.min_objects = 1;
  try {
    ts::generate(cfg);
    FAIL() << "expected ValidationError";
  } catch (const ts::ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("infeasible"), std::string::npos);
  }
}
