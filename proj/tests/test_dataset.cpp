#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "tailsampler/coco.hpp"
#include "tailsampler/dataset.hpp"
#include "tailsampler/types.hpp"

namespace ts = tailsampler;

namespace {

ts::ImageRecord image(ts::ImageId id, std::vector<ts::ClassId> classes,
                      int width = 640, int height = 480) {
  ts::ImageRecord rec;
  rec.image_id = id;
  rec.width = width;
  rec.height = height;
  for (ts::ClassId c : classes) {
    rec.objects.push_back(ts::ObjectAnnotation{c, ts::Box{10, 10, 20, 20}});
  }
  return rec;
}

std::string write_temp(const std::string& name, const std::string& content) {
  const std::string path = ::testing::TempDir() + name;
  std::ofstream out(path, std::ios::binary);
  out << content;
  return path;
}

}  // namespace

TEST(BuildIndex, CountsImagesInstancesAndFractions) {
  // Class 7 in 2 of 3 images: f(7) = 2/3 exactly.
  std::vector<ts::ImageRecord> records = {
      image(1, {7, 7, 3}), image(2, {7}), image(3, {3})};
  const ts::DatasetIndex index = ts::build_index(records);
  EXPECT_EQ(index.num_images, 3);
  EXPECT_EQ(index.image_count.at(7), 2);
  EXPECT_EQ(index.instance_count.at(7), 3);
  EXPECT_DOUBLE_EQ(index.image_fraction.at(7), 2.0 / 3.0);
  EXPECT_EQ(index.image_count.at(3), 2);
  EXPECT_EQ(index.instance_count.at(3), 2);
}

TEST(BuildIndex, EmptyAnnotationsGiveEmptyMaps) {
  std::vector<ts::ImageRecord> records = {image(1, {}), image(2, {})};
  const ts::DatasetIndex index = ts::build_index(records);
  EXPECT_EQ(index.num_images, 2);
  EXPECT_TRUE(index.image_count.empty());
  EXPECT_TRUE(index.instance_count.empty());
}

TEST(BuildIndex, InvariantsHold) {
  std::vector<ts::ImageRecord> records = {
      image(1, {1, 1, 2}), image(2, {1, 3}), image(3, {2}), image(4, {})};
  const ts::DatasetIndex index = ts::build_index(records);
  for (const auto& [c, n] : index.image_count) {
    EXPECT_GE(n, 1);
    EXPECT_LE(n, index.instance_count.at(c));
    const double f = index.image_fraction.at(c);
    EXPECT_GT(f, 0.0);
    EXPECT_LE(f, 1.0);
    EXPECT_DOUBLE_EQ(f, static_cast<double>(n) /
                            static_cast<double>(index.num_images));
  }
}

TEST(BuildIndex, IndexIgnoresRecordOrder) {
  std::vector<ts::ImageRecord> a = {image(1, {1}), image(2, {1, 2}),
                                    image(3, {3})};
  std::vector<ts::ImageRecord> b = {a[2], a[0], a[1]};
  EXPECT_EQ(ts::build_index(a), ts::build_index(b));
  EXPECT_EQ(ts::dataset_digest(ts::build_index(a)),
            ts::dataset_digest(ts::build_index(b)));
}

TEST(ComputeBins, BoundaryImageCounts) {
  // image_count 10 -> rare, 11 -> common, 101 -> frequent.
  std::vector<ts::ImageRecord> records;
  for (int i = 1; i <= 101; ++i) {
    std::vector<ts::ClassId> classes = {1};  // class 1: all 101 images
    if (i <= 10) classes.push_back(2);       // class 2: 10 images
    if (i <= 11) classes.push_back(3);       // class 3: 11 images
    records.push_back(image(i, classes));
  }
  const ts::DatasetIndex index = ts::build_index(records);
  const ts::ClassBins bins = ts::compute_bins(index, {});
  EXPECT_TRUE(bins.frequent.count(1));
  EXPECT_TRUE(bins.rare.count(2));
  EXPECT_TRUE(bins.common.count(3));
  EXPECT_EQ(bins.bin_of(2), ts::Bin::rare);
}

TEST(ComputeBins, PartitionCoversEveryClassExactlyOnce) {
  std::vector<ts::ImageRecord> records;
  for (int i = 1; i <= 150; ++i) {
    std::vector<ts::ClassId> classes;
    for (ts::ClassId c = 1; c <= 12; ++c) {
      if (i % (1 << (c % 8)) == 0) classes.push_back(c);
    }
    records.push_back(image(i, classes));
  }
  const ts::DatasetIndex index = ts::build_index(records);
  const ts::ClassBins bins = ts::compute_bins(index, {});
  EXPECT_EQ(bins.total(), index.image_count.size());
  for (const auto& [c, n] : index.image_count) {
    const int membership = static_cast<int>(bins.frequent.count(c)) +
                           static_cast<int>(bins.common.count(c)) +
                           static_cast<int>(bins.rare.count(c));
    EXPECT_EQ(membership, 1) << "class " << c;
  }
}

TEST(ComputeBins, EmptyDatasetYieldsEmptyBins) {
  const ts::ClassBins bins = ts::compute_bins(ts::DatasetIndex{}, {});
  EXPECT_EQ(bins.total(), 0u);
}

TEST(ComputeBins, RejectsInvertedThresholds) {
  EXPECT_THROW(ts::compute_bins(ts::DatasetIndex{}, ts::BinThresholds{100, 10}),
               ts::ValidationError);
  EXPECT_THROW(ts::compute_bins(ts::DatasetIndex{}, ts::BinThresholds{10, 10}),
               ts::ValidationError);
}

TEST(InstanceHistogram, CountsPerClassAndPerBin) {
  // 2 images, each with 3 objects of class 5 -> per-class total 6.
  std::vector<ts::ImageRecord> records = {image(1, {5, 5, 5}),
                                          image(2, {5, 5, 5})};
  const ts::DatasetIndex index = ts::build_index(records);
  const ts::ClassBins bins = ts::compute_bins(index, {});
  const ts::InstanceHistogram hist = ts::instance_histogram(records, bins);
  EXPECT_EQ(hist.per_class.at(5), 6);
  EXPECT_EQ(hist.total, 6);
  EXPECT_EQ(hist.bin_total(ts::Bin::rare), 6);
}

TEST(InstanceHistogram, BinTotalsSumToGrandTotal) {
  std::vector<ts::ImageRecord> records;
  for (int i = 1; i <= 120; ++i) {
    std::vector<ts::ClassId> classes = {1, 1};
    if (i <= 40) classes.push_back(2);
    if (i <= 6) classes.insert(classes.end(), {3, 3, 3});
    records.push_back(image(i, classes));
  }
  const ts::DatasetIndex index = ts::build_index(records);
  const ts::ClassBins bins = ts::compute_bins(index, {});
  const ts::InstanceHistogram hist = ts::instance_histogram(records, bins);
  EXPECT_EQ(hist.bin_total(ts::Bin::frequent) + hist.bin_total(ts::Bin::common) +
                hist.bin_total(ts::Bin::rare),
            hist.total);
  std::int64_t brute = 0;
  for (const auto& rec : records) {
    brute += static_cast<std::int64_t>(rec.objects.size());
  }
  EXPECT_EQ(hist.total, brute);
}

TEST(IndexJson, CanonicalFormIsStable) {
  std::vector<ts::ImageRecord> records = {image(1, {2, 9}), image(2, {9})};
  const ts::DatasetIndex index = ts::build_index(records);
  const std::string a = ts::index_to_canonical_string(index);
  const std::string b = ts::index_to_canonical_string(ts::build_index(records));
  EXPECT_EQ(a, b);
  EXPECT_NE(a.find("\"image_fraction\""), std::string::npos);
}

TEST(Ingest, SmallFileProducesExpectedIndex) {
  const std::string path = write_temp("ingest_small.json", R"({
    "images": [
      {"id": 1, "width": 100, "height": 80},
      {"id": 2, "width": 100, "height": 80},
      {"id": 3, "width": 100, "height": 80}
    ],
    "annotations": [
      {"id": 1, "image_id": 1, "category_id": 7, "bbox": [1, 1, 10, 10]},
      {"id": 2, "image_id": 2, "category_id": 7, "bbox": [2, 2, 10, 10]},
      {"id": 3, "image_id": 2, "category_id": 7, "bbox": [3, 3, 10, 10]}
    ],
    "categories": [{"id": 7}]
  })");
  const ts::IngestResult result = ts::ingest_annotations(path);
  EXPECT_EQ(result.index.num_images, 3);
  EXPECT_EQ(result.records.size(), 3u);
  EXPECT_DOUBLE_EQ(result.index.image_fraction.at(7), 2.0 / 3.0);
  EXPECT_EQ(result.index.instance_count.at(7), 3);
  // Image 3 has no annotations but is retained.
  EXPECT_TRUE(result.records[2].objects.empty());
  std::remove(path.c_str());
}

TEST(Ingest, ZeroAnnotationsKeepImages) {
  const std::string path = write_temp("ingest_empty.json", R"({
    "images": [{"id": 4, "width": 10, "height": 10}],
    "annotations": [],
    "categories": []
  })");
  const ts::IngestResult result = ts::ingest_annotations(path);
  EXPECT_EQ(result.index.num_images, 1);
  EXPECT_TRUE(result.index.image_count.empty());
  std::remove(path.c_str());
}

TEST(Ingest, MalformedJsonReportsByteOffset) {
  const std::string path = write_temp("ingest_bad.json", "{\"images\": [,]}");
  try {
    ts::ingest_annotations(path);
    FAIL() << "expected ParseError";
  } catch (const ts::ParseError& e) {
    EXPECT_GT(e.byte_offset(), 0u);
    EXPECT_NE(std::string(e.what()).find("byte"), std::string::npos);
  }
  std::remove(path.c_str());
}

TEST(Ingest, DanglingImageReferenceListsOffender) {
  const std::string path = write_temp("ingest_dangling_img.json", R"({
    "images": [{"id": 1, "width": 10, "height": 10}],
    "annotations": [
      {"id": 1, "image_id": 99, "category_id": 7, "bbox": [0, 0, 5, 5]}
    ],
    "categories": [{"id": 7}]
  })");
  try {
    ts::ingest_annotations(path);
    FAIL() << "expected ValidationError";
  } catch (const ts::ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("image_id 99"), std::string::npos);
  }
  std::remove(path.c_str());
}

TEST(Ingest, DanglingCategoryReferenceListsOffender) {
  const std::string path = write_temp("ingest_dangling_cat.json", R"({
    "images": [{"id": 1, "width": 10, "height": 10}],
    "annotations": [
      {"id": 1, "image_id": 1, "category_id": 55, "bbox": [0, 0, 5, 5]}
    ],
    "categories": [{"id": 7}]
  })");
  try {
    ts::ingest_annotations(path);
    FAIL() << "expected ValidationError";
  } catch (const ts::ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("category_id 55"), std::string::npos);
  }
  std::remove(path.c_str());
}

TEST(Ingest, DuplicateImageIdRejected) {
  const std::string path = write_temp("ingest_dup.json", R"({
    "images": [
      {"id": 1, "width": 10, "height": 10},
      {"id": 1, "width": 10, "height": 10}
    ],
    "annotations": [],
    "categories": []
  })");
  EXPECT_THROW(ts::ingest_annotations(path), ts::ValidationError);
  std::remove(path.c_str());
}

TEST(Ingest, MissingFileNamesPath) {
  try {
    ts::ingest_annotations("/nonexistent/file.json");
    FAIL() << "expected ValidationError";
  } catch (const ts::ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/file.json"),
              std::string::npos);
  }
}

TEST(Ingest, LenientModeClampsOutOfBoundsBox) {
  const std::string path = write_temp("ingest_clamp.json", R"({
    "images": [{"id": 1, "width": 100, "height": 100}],
    "annotations": [
      {"id": 1, "image_id": 1, "category_id": 7, "bbox": [90, 90, 20, 20]}
    ],
    "categories": [{"id": 7}]
  })");
  const ts::IngestResult result = ts::ingest_annotations(path);
  ASSERT_EQ(result.records[0].objects.size(), 1u);
  const ts::Box& b = result.records[0].objects[0].box;
  EXPECT_LE(b.x + b.w, 100.0);
  EXPECT_LE(b.y + b.h, 100.0);
  std::remove(path.c_str());
}

TEST(Ingest, StrictModeRejectsOutOfBoundsBox) {
  const std::string path = write_temp("ingest_strict.json", R"({
    "images": [{"id": 1, "width": 100, "height": 100}],
    "annotations": [
      {"id": 1, "image_id": 1, "category_id": 7, "bbox": [90, 90, 20, 20]}
    ],
    "categories": [{"id": 7}]
  })");
  ts::IngestOptions opts;
  opts.strict = true;
  EXPECT_THROW(ts::ingest_annotations(path, opts), ts::ValidationError);
  std::remove(path.c_str());
}

TEST(Ingest, LenientModeDropsDegenerateBox) {
  const std::string path = write_temp("ingest_degenerate.json", R"({
    "images": [{"id": 1, "width": 100, "height": 100}],
    "annotations": [
      {"id": 1, "image_id": 1, "category_id": 7, "bbox": [5, 5, 0, 10]},
      {"id": 2, "image_id": 1, "category_id": 7, "bbox": [5, 5, 10, 10]}
    ],
    "categories": [{"id": 7}]
  })");
  const ts::IngestResult result = ts::ingest_annotations(path);
  EXPECT_EQ(result.records[0].objects.size(), 1u);
  std::remove(path.c_str());
}

TEST(Ingest, IdempotentSerializedIndex) {
  const std::string path = write_temp("ingest_idem.json", R"({
    "images": [
      {"id": 1, "width": 50, "height": 50},
      {"id": 2, "width": 50, "height": 50}
    ],
    "annotations": [
      {"id": 1, "image_id": 1, "category_id": 3, "bbox": [1, 1, 5, 5]},
      {"id": 2, "image_id": 2, "category_id": 4, "bbox": [1, 1, 5, 5]}
    ],
    "categories": [{"id": 3}, {"id": 4}]
  })");
  const std::string a =
      ts::index_to_canonical_string(ts::ingest_annotations(path).index);
  const std::string b =
      ts::index_to_canonical_string(ts::ingest_annotations(path).index);
  EXPECT_EQ(a, b);
  std::remove(path.c_str());
}

TEST(CocoRoundTrip, EmitThenIngestPreservesIndex) {
  std::vector<ts::ImageRecord> records = {image(1, {2, 2, 5}), image(2, {5}),
                                          image(3, {})};
  const std::string path =
      write_temp("roundtrip.json", ts::to_coco_json(records));
  const ts::IngestResult result = ts::ingest_annotations(path);
  EXPECT_EQ(result.index, ts::build_index(records));
  EXPECT_EQ(result.records.size(), records.size());
  std::remove(path.c_str());
}
