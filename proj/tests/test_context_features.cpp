#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "ctxrel/context_features.hpp"
#include "ctxrel/error.hpp"

using namespace ctxrel;

namespace {

Detection det(ImageId image, ClassId cls, BBox box, double conf = 0.9) {
  Detection d;
  d.image_id = image;
  d.class_id = cls;
  d.box = box;
  d.confidence = conf;
  return d;
}

RelationConfig only(bool RelationConfig::*flag) {
  auto c = RelationConfig::none();
  c.*flag = true;
  return c;
}

}  // namespace

TEST_SUITE("context_features") {

TEST_CASE("co-occurrence on a three-image toy set") {
  const ClassVocabulary vocab({"A", "B", "C"});
  const std::vector<std::vector<ClassId>> images{{0, 1}, {0}, {0, 1}};
  const CoocMatrix m = build_cooccurrence(images, vocab);
  CHECK(m.value(0, 1) == doctest::Approx(2.0 / 3.0));
  CHECK(m.value(1, 0) == 1.0);
  CHECK(m.value(0, 0) == 1.0);
  CHECK(m.count(0, 1) == 2);
  // Class C never appears: all-zero row.
  for (ClassId j = 0; j < 3; ++j) CHECK(m.value(2, j) == 0.0);
}

TEST_CASE("co-occurrence single image and duplicates") {
  const ClassVocabulary vocab({"A", "B"});
  const std::vector<std::vector<ClassId>> images{{0, 0, 0}};
  const CoocMatrix m = build_cooccurrence(images, vocab);
  CHECK(m.value(0, 0) == 1.0);
  CHECK(m.value(0, 1) == 0.0);
  CHECK(m.class_count(0) == 1);
}

TEST_CASE("co-occurrence rejects bad input") {
  const ClassVocabulary vocab({"A"});
  CHECK_THROWS_AS(build_cooccurrence(std::vector<std::vector<ClassId>>{}, vocab), ParseError);
  CHECK_THROWS_AS(build_cooccurrence(std::vector<std::vector<ClassId>>{{0, 4}}, vocab), ParseError);
}

TEST_CASE("property: co-occurrence values are count ratios") {
  std::mt19937 rng(3);
  const auto vocab = ClassVocabulary::numbered(7);
  std::vector<std::vector<ClassId>> images;
  for (int i = 0; i < 200; ++i) {
    std::vector<ClassId> cls;
    for (int k = 0; k < 4; ++k)
      if (rng() % 2) cls.push_back(static_cast<ClassId>(rng() % 7));
    images.push_back(cls);
  }
  const CoocMatrix m = build_cooccurrence(images, vocab);
  for (ClassId i = 0; i < 7; ++i) {
    for (ClassId j = 0; j < 7; ++j) {
      const double v = m.value(i, j);
      REQUIRE(v >= 0.0);
      REQUIRE(v <= 1.0);
      const double raw = v * static_cast<double>(m.class_count(i));
      REQUIRE(std::abs(raw - std::round(raw)) < 1e-9);
    }
    if (m.class_count(i) > 0) REQUIRE(m.value(i, i) == 1.0);
  }
}

TEST_CASE("co-occurrence csv") {
  const ClassVocabulary vocab({"A", "B,x", "C"});
  const std::vector<std::vector<ClassId>> images{{0, 1}, {0}, {0, 1}};
  const CoocMatrix m = build_cooccurrence(images, vocab);
  std::ostringstream out;
  write_cooccurrence_csv(out, m, vocab);
  const std::string text = out.str();
  CHECK(text.rfind("class,A,\"B,x\",C\nA,1.000000,0.666667,0.000000\n", 0) == 0);

  std::istringstream in(text);
  const CoocTable t = read_cooccurrence_csv(in);
  CHECK(t.names == vocab.names());
  CHECK(t.values[0][1] == 0.666667);
  // Writing the parsed values again reproduces the file byte for byte.
  std::ostringstream again;
  again << "class";
  for (const auto& n : t.names) again << ',' << (n.find(',') != std::string::npos ? "\"" + n + "\"" : n);
  again << '\n';
  for (std::size_t i = 0; i < t.names.size(); ++i) {
    again << (t.names[i].find(',') != std::string::npos ? "\"" + t.names[i] + "\"" : t.names[i]);
    for (double v : t.values[i]) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.6f", v);
      again << ',' << buf;
    }
    again << '\n';
  }
  CHECK(again.str() == text);
}

TEST_CASE("feature length follows the per-relation widths") {
  CHECK(feature_length(only(&RelationConfig::cooccurrence), 80) == 81);
  CHECK(feature_length(only(&RelationConfig::overlapping), 80) == 161);
  CHECK(feature_length(only(&RelationConfig::scale), 80) == 241);
  CHECK(feature_length(only(&RelationConfig::boundary), 80) == 321);
  CHECK(feature_length(only(&RelationConfig::central), 80) == 321);
  CHECK(feature_length(only(&RelationConfig::near_far), 80) == 161);
  CHECK(feature_length(RelationConfig::all(), 80) == 1281);
  CHECK(network_input_length(RelationConfig::all(), 80) == 1361);
}

TEST_CASE("feature vector without context") {
  const auto vocab = ClassVocabulary::numbered(3);
  const Detection ref = det(1, 0, {0, 0, 3, 4}, 0.8);
  const FeatureVector fv = build_feature_vector(ref, std::span<const Detection>{}, RelationConfig::all(), vocab);
  REQUIRE(fv.size() == 49);
  CHECK(std::all_of(fv.begin(), fv.end() - 1, [](double v) { return v == 0.0; }));
  CHECK(fv.back() == 0.8);
}

TEST_CASE("feature vector with one context detection") {
  const auto vocab = ClassVocabulary::numbered(3);
  const Detection ref = det(1, 0, {0, 0, 3, 4}, 0.8);
  const std::vector<Detection> others{det(1, 2, {0, 20, 6, 8})};
  const FeatureVector fv = build_feature_vector(ref, others, RelationConfig::all(), vocab);
  REQUIRE(fv.size() == 49);
  for (std::size_t k = 0; k < 32; ++k) CHECK(fv[k] == 0.0);
  // cooc | yes no | L S E | bA bB bL bR | cA cB cL cR | near far
  const std::vector<double> block(fv.begin() + 32, fv.begin() + 48);
  CHECK(block == std::vector<double>{1, 0, 1, 0, 1, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0});
  CHECK(fv.back() == 0.8);
}

TEST_CASE("same-class context objects are OR-aggregated") {
  const auto vocab = ClassVocabulary::numbered(2);
  const Detection ref = det(1, 0, {100, 0, 3, 4});
  // First lies to the right (near), second far to the left (far).
  const std::vector<Detection> others{det(1, 1, {200, 0, 5, 5}), det(1, 1, {0, 0, 5, 5})};
  auto cfg = only(&RelationConfig::near_far);
  const FeatureVector fv = build_feature_vector(ref, others, cfg, vocab);
  REQUIRE(fv.size() == 5);
  CHECK(fv[2] == 1.0);
  CHECK(fv[3] == 1.0);
}

TEST_CASE("property: feature vectors ignore context order and stay in range") {
  std::mt19937 rng(5);
  const auto vocab = ClassVocabulary::numbered(4);
  std::uniform_real_distribution<double> pos(0, 200), ext(5, 60), conf(0, 1);
  for (int t = 0; t < 200; ++t) {
    std::vector<Detection> others;
    const int n = 1 + static_cast<int>(rng() % 6);
    for (int k = 0; k < n; ++k)
      others.push_back(det(9, static_cast<ClassId>(rng() % 4), {pos(rng), pos(rng), ext(rng), ext(rng)}));
    const Detection ref = det(9, 1, {pos(rng), pos(rng), ext(rng), ext(rng)}, conf(rng));
    const auto fv = build_feature_vector(ref, others, RelationConfig::all(), vocab);
    REQUIRE(fv.size() == feature_length(RelationConfig::all(), 4));
    for (std::size_t k = 0; k + 1 < fv.size(); ++k) REQUIRE((fv[k] == 0.0 || fv[k] == 1.0));
    REQUIRE(fv.back() == ref.confidence);
    std::shuffle(others.begin(), others.end(), rng);
    REQUIRE(build_feature_vector(ref, others, RelationConfig::all(), vocab) == fv);
  }
}

TEST_CASE("feature vector errors") {
  const auto vocab = ClassVocabulary::numbered(2);
  const Detection ref = det(1, 0, {0, 0, 3, 4});
  CHECK_THROWS_AS(build_feature_vector(ref, std::vector<Detection>{det(1, 5, {0, 0, 1, 1})}, RelationConfig::all(), vocab),
                  DataError);
  CHECK_THROWS_AS(build_feature_vector(ref, std::vector<Detection>{det(2, 1, {0, 0, 1, 1})}, RelationConfig::all(), vocab),
                  DataError);
  CHECK_THROWS_AS(network_input(std::vector<double>(5), 2, 2), DataError);
}

TEST_CASE("training set labels and filtering") {
  const auto vocab = ClassVocabulary::numbered(3);
  ImageDetections dets;
  ImageGroundTruth gts;
  // Image 1: one exact match, one class mismatch.
  dets[1] = {det(1, 1, {0, 0, 10, 10}, 0.9), det(1, 2, {50, 50, 10, 10}, 0.7)};
  gts[1] = {{1, {0, 0, 10, 10}}, {1, {50, 50, 10, 10}}};
  // Image 2: a single detection contributes nothing.
  dets[2] = {det(2, 0, {0, 0, 10, 10})};
  gts[2] = {{0, {0, 0, 10, 10}}};
  // Image 3: two detections on one ground truth; only the more confident wins.
  dets[3] = {det(3, 0, {0, 0, 10, 10}, 0.6), det(3, 0, {1, 0, 10, 10}, 0.95)};
  gts[3] = {{0, {0, 0, 10, 10}}};

  const TrainingSet set = build_training_set(dets, gts, RelationConfig::all(), vocab);
  REQUIRE(set.size() == 4);
  CHECK(set.labels == std::vector<int>{1, 0, 0, 1});
  CHECK(set.image_ids == std::vector<ImageId>{1, 1, 3, 3});
  CHECK(set.ref_classes == std::vector<ClassId>{1, 2, 0, 0});
  for (const auto& fv : set.features) CHECK(fv.size() == feature_length(RelationConfig::all(), 3));

  const FeatureTable table = to_feature_table(set, 3);
  CHECK(table.width == 49 + 3);
  CHECK(table.rows[1][49 + 2] == 1.0);
}

TEST_CASE("training set rejects images without ground truth") {
  const auto vocab = ClassVocabulary::numbered(2);
  ImageDetections dets;
  dets[4] = {det(4, 0, {0, 0, 1, 1}), det(4, 1, {5, 5, 1, 1})};
  dets[7] = {det(7, 0, {0, 0, 1, 1}), det(7, 1, {5, 5, 1, 1})};
  ImageGroundTruth gts;
  gts[4] = {};
  try {
    build_training_set(dets, gts, RelationConfig::all(), vocab);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(" 7") != std::string::npos);
  }
}

TEST_CASE("feature csv round-trip is exact") {
  FeatureTable t;
  t.width = 3;
  t.rows = {{0.0, 1.0, 0.123456789012345678}, {1.0, 0.0, 1.0 / 3.0}};
  t.labels = {1, 0};
  std::ostringstream out;
  write_feature_csv(out, t);
  CHECK(out.str().rfind("f0,f1,f2,label\n", 0) == 0);
  std::istringstream in(out.str());
  CHECK(read_feature_csv(in) == t);
}

TEST_CASE("feature csv parse errors") {
  std::istringstream bad_header("a,b,label\n");
  CHECK_THROWS_AS(read_feature_csv(bad_header), ParseError);
  std::istringstream bad_label("f0,label\n0.5,2\n");
  CHECK_THROWS_AS(read_feature_csv(bad_label), ParseError);
  std::istringstream short_row("f0,f1,label\n0.5,1\n");
  CHECK_THROWS_AS(read_feature_csv(short_row), ParseError);
}

}  // TEST_SUITE
