#include <doctest.h>

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "ctxrel/error.hpp"
#include "ctxrel/pipelines.hpp"

using namespace ctxrel;

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// One hidden unit that fires for the "good" classes; context is ignored, so
// the score is sigmoid(4 * act - 2) with act close to 1 or 0.
ContextModel class_prior_model(std::size_t classes, const std::vector<ClassId>& good) {
  ContextModel m;
  m.vocab = ClassVocabulary::numbered(classes);
  m.relations = RelationConfig::all();
  const std::size_t flen = feature_length(m.relations, classes);
  m.network = NetworkParams(flen + classes, 1);
  for (ClassId c = 0; c < static_cast<ClassId>(classes); ++c) m.network.w1()[flen + c] = -10.0;
  for (ClassId c : good) m.network.w1()[flen + c] = 10.0;
  m.network.w2()[0] = 4.0;
  m.network.b2()[0] = -2.0;
  return m;
}

const double kGood = sigmoid(4.0 * sigmoid(10.0) - 2.0);
const double kBad = sigmoid(4.0 * sigmoid(-10.0) - 2.0);

Detection det(ClassId cls, BBox box, double conf, std::vector<TopScore> top5 = {}) {
  Detection d;
  d.image_id = 5;
  d.class_id = cls;
  d.box = box;
  d.confidence = conf;
  d.top5 = std::move(top5);
  return d;
}

}  // namespace

TEST_SUITE("pipelines") {

TEST_CASE("rescoring replaces confidences only") {
  const ContextModel m = class_prior_model(2, {0});
  SceneDetections s;
  s.image_id = 5;
  s.detector_threshold = 0.5;
  s.detections = {det(0, {0, 0, 10, 10}, 0.6), det(1, {40, 0, 10, 10}, 0.95)};
  const SceneDetections r = rescore_scene(m, s);
  REQUIRE(r.detections.size() == 2);
  CHECK(r.detections[0].confidence == doctest::Approx(kGood).epsilon(1e-12));
  CHECK(r.detections[1].confidence == doctest::Approx(kBad).epsilon(1e-12));
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(r.detections[i].box == s.detections[i].box);
    CHECK(r.detections[i].class_id == s.detections[i].class_id);
  }
  CHECK_FALSE(r.skipped_mono_object);
  CHECK(r.detector_threshold == 0.5);
}

TEST_CASE("single-detection scenes pass through") {
  const ContextModel m = class_prior_model(2, {0});
  SceneDetections s;
  s.image_id = 5;
  s.detections = {det(1, {0, 0, 10, 10}, 0.7)};
  const SceneDetections r = rescore_scene(m, s);
  CHECK(r.skipped_mono_object);
  CHECK(r.detections == s.detections);
  const RelabelResult rl = relabel_scene(m, s);
  CHECK(rl.final_scene.skipped_mono_object);
  CHECK(rl.records.at(0).status == RelabelStatus::kKept);
}

TEST_CASE("unknown classes are rejected") {
  const ContextModel m = class_prior_model(2, {0});
  SceneDetections s;
  s.image_id = 5;
  s.detections = {det(0, {0, 0, 10, 10}, 0.7), det(4, {20, 0, 10, 10}, 0.7)};
  CHECK_THROWS_AS(rescore_scene(m, s), DataError);
}

TEST_CASE("relabeling keeps, relabels and removes") {
  const ContextModel m = class_prior_model(3, {0});
  SceneDetections s;
  s.image_id = 5;
  s.detections = {
      det(0, {0, 0, 10, 10}, 0.8),
      det(1, {40, 0, 10, 10}, 0.9, {{1, 0.6}, {0, 0.3}, {2, 0.1}}),
      det(2, {80, 0, 10, 10}, 0.7),
      det(1, {120, 0, 10, 10}, 0.6, {{1, 0.6}, {2, 0.4}}),
  };
  const RelabelResult r = relabel_scene(m, s, 0.4);
  REQUIRE(r.records.size() == 4);

  CHECK(r.records[0].status == RelabelStatus::kKept);
  CHECK(r.records[0].candidates_tried.empty());

  const auto& moved = r.records[1];
  CHECK(moved.status == RelabelStatus::kRelabeled);
  CHECK(moved.final_label == 0);
  CHECK(moved.rescored == doctest::Approx(kBad).epsilon(1e-12));
  REQUIRE(moved.candidates_tried.size() == 3);
  CHECK(moved.candidates_tried[1].class_id == 0);
  CHECK(moved.candidates_tried[1].detector_score == 0.3);

  CHECK(r.records[2].status == RelabelStatus::kRemoved);
  CHECK(r.records[2].note == "top5 unavailable");
  CHECK_FALSE(r.records[2].final_label.has_value());

  CHECK(r.records[3].status == RelabelStatus::kRemoved);
  CHECK(r.records[3].candidates_tried.size() == 2);
  CHECK(r.records[3].note.empty());

  const auto& fin = r.final_scene.detections;
  REQUIRE(fin.size() == 2);
  CHECK(fin[0].class_id == 0);
  CHECK(fin[1].class_id == 0);
  CHECK(fin[1].box == s.detections[1].box);
  CHECK(fin[1].confidence == doctest::Approx(kGood).epsilon(1e-12));
  CHECK(*moved.final_score == fin[1].confidence);
}

TEST_CASE("candidate ties go to the lower class id") {
  const ContextModel m = class_prior_model(3, {0, 2});
  SceneDetections s;
  s.image_id = 5;
  s.detections = {det(0, {0, 0, 10, 10}, 0.8), det(1, {40, 0, 10, 10}, 0.9, {{2, 0.5}, {1, 0.4}, {0, 0.1}})};
  const RelabelResult r = relabel_scene(m, s, 0.4);
  CHECK(r.records[1].status == RelabelStatus::kRelabeled);
  CHECK(r.records[1].final_label == 0);
}

TEST_CASE("a lone survivor keeps its last model score") {
  const ContextModel m = class_prior_model(2, {0});
  SceneDetections s;
  s.image_id = 5;
  s.detections = {det(1, {0, 0, 10, 10}, 0.8), det(1, {40, 0, 10, 10}, 0.9, {{1, 0.6}, {0, 0.3}})};
  const RelabelResult r = relabel_scene(m, s, 0.4);
  REQUIRE(r.final_scene.detections.size() == 1);
  CHECK(r.final_scene.detections[0].confidence == r.records[1].candidates_tried[1].rescored);
}

TEST_CASE("threshold extremes") {
  const ContextModel m = class_prior_model(2, {0});
  SceneDetections s;
  s.image_id = 5;
  s.detections = {det(0, {0, 0, 10, 10}, 0.8), det(1, {40, 0, 10, 10}, 0.9, {{1, 0.6}, {0, 0.3}})};
  // Threshold 0: nothing is a candidate.
  const RelabelResult none = relabel_scene(m, s, 0.0);
  for (const auto& rec : none.records) CHECK(rec.status == RelabelStatus::kKept);
  // Threshold 1: everything is a candidate and nothing can win.
  const RelabelResult all = relabel_scene(m, s, 1.0);
  for (const auto& rec : all.records) CHECK(rec.status == RelabelStatus::kRemoved);
  CHECK(all.final_scene.detections.empty());
}

TEST_CASE("audit log has one parseable line per record") {
  ContextModel m = class_prior_model(2, {0});
  m.vocab = ClassVocabulary({"cat", "dog"}, {17, 18});
  SceneDetections s;
  s.image_id = 5;
  s.detections = {det(0, {0, 0, 10, 10}, 0.8), det(1, {40, 0, 10, 10}, 0.9, {{1, 0.6}, {0, 0.3}}),
                  det(1, {80, 0, 10, 10}, 0.9)};
  const RelabelResult r = relabel_scene(m, s, 0.4);
  std::istringstream in(audit_log_jsonl(r.records, m.vocab));
  std::string line;
  std::vector<nlohmann::json> rows;
  while (std::getline(in, line)) rows.push_back(nlohmann::json::parse(line));
  REQUIRE(rows.size() == 3);
  CHECK(rows[1]["status"] == "relabeled");
  CHECK(rows[1]["original_label"] == 18);
  CHECK(rows[1]["final_label"] == 17);
  CHECK(rows[2]["status"] == "removed");
  CHECK(rows[2]["final_label"].is_null());
  CHECK(rows[2]["note"] == "top5 unavailable");
}

}  // TEST_SUITE
