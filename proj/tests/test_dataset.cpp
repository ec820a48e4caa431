#include <doctest.h>

#include <filesystem>
#include <functional>
#include <limits>

#include "ctxrel/dataset.hpp"
#include "ctxrel/error.hpp"

using namespace ctxrel;

namespace {

const char* kAnnotations = R"({
  "images": [{"id": 7, "width": 640, "height": 480, "file_name": "a.jpg"}, {"id": 9}],
  "annotations": [
    {"id": 1, "image_id": 7, "category_id": 18, "bbox": [10, 20, 30, 40]},
    {"id": 2, "image_id": 7, "category_id": 3, "bbox": [100, 20, 30, 40]},
    {"id": 3, "image_id": 7, "category_id": 18, "bbox": [200, 20, 30, 40]}
  ],
  "categories": [{"id": 18, "name": "dog"}, {"id": 3, "name": "car"}]
})";

std::string what_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("annotations load into a sorted vocabulary") {
  const DatasetBundle b = parse_annotations(kAnnotations);
  CHECK(b.vocab.names() == std::vector<std::string>{"car", "dog"});
  CHECK(b.vocab.category_ids() == std::vector<std::int64_t>{3, 18});
  REQUIRE(b.images.size() == 2);
  CHECK(b.images.at(7).file_name == "a.jpg");
  CHECK(b.images.at(9).width == 0.0);
  CHECK(b.ground_truth.at(7).size() == 3);
  CHECK(b.ground_truth.at(9).empty());
  CHECK(b.ground_truth.at(7)[0].class_id == 1);
  CHECK(b.ground_truth.at(7)[0].box == BBox{10, 20, 30, 40});
  const auto sets = b.image_class_sets();
  REQUIRE(sets.size() == 2);
  CHECK(sets[0] == std::vector<ClassId>{0, 1});
  CHECK(sets[1].empty());
}

TEST_CASE("annotation errors name the record") {
  std::string bad = kAnnotations;
  bad.replace(bad.find("[100, 20, 30, 40]"), 17, "[100, 20, 0, 40]");
  CHECK(what_of([&] { parse_annotations(bad); }) == "annotations[1]: bbox width must be positive");
  std::string unknown = kAnnotations;
  unknown.replace(unknown.find("\"image_id\": 7, \"category_id\": 3"), 13, "\"image_id\": 8");
  CHECK(what_of([&] { parse_annotations(unknown); }).find("annotations[1]: unknown image_id 8") == 0);
  CHECK_THROWS_AS(parse_annotations("[1, 2"), ParseError);
  CHECK_THROWS_AS(parse_annotations(R"({"images": []})"), ParseError);
}

TEST_CASE("detections with top scores and thresholding") {
  DatasetBundle b = parse_annotations(kAnnotations);
  parse_detections(R"([
    {"image_id": 7, "category_id": 18, "bbox": [10, 20, 30, 40], "score": 0.9,
     "top_scores": [{"category_id": 18, "score": 0.9}, {"category_id": 3, "score": 0.05}]},
    {"image_id": 7, "category_id": 3, "bbox": [100, 20, 30, 40], "score": 0.55},
    {"image_id": 9, "category_id": 3, "bbox": [1, 2, 3, 4], "score": 0.3}
  ])", b, 0.5);
  CHECK(b.detection_count() == 2);
  const auto& d = b.detections.at(7);
  REQUIRE(d.size() == 2);
  CHECK(d[0].class_id == 1);
  CHECK(d[0].confidence == 0.9);
  CHECK(d[0].top5 == std::vector<TopScore>{{1, 0.9}, {0, 0.05}});
  CHECK(d[1].top5.empty());
  b.detector_threshold = 0.5;

  const std::string round = detections_to_json(b.detections, b.vocab);
  DatasetBundle again = parse_annotations(annotations_to_json(b));
  CHECK(again.vocab == b.vocab);
  CHECK(again.ground_truth == b.ground_truth);
  CHECK(again.images == b.images);
  parse_detections(round, again, 0.0);
  CHECK(again.detections.at(7) == b.detections.at(7));
}

TEST_CASE("top scores are sorted by score") {
  DatasetBundle b = parse_annotations(kAnnotations);
  parse_detections(R"([{"image_id": 7, "category_id": 3, "bbox": [1, 1, 5, 5], "score": 0.6,
     "top_scores": [{"category_id": 18, "score": 0.2}, {"category_id": 3, "score": 0.6}]}])", b, 0.0);
  CHECK(b.detections.at(7)[0].top5 == std::vector<TopScore>{{0, 0.6}, {1, 0.2}});
}

TEST_CASE("detection errors") {
  DatasetBundle b = parse_annotations(kAnnotations);
  CHECK_THROWS_AS(parse_detections(R"([{"image_id": 1, "category_id": 3, "bbox": [1, 1, 5, 5], "score": 0.6}])", b, 0),
                  DataError);
  CHECK_THROWS_AS(parse_detections(R"([{"image_id": 7, "category_id": 4, "bbox": [1, 1, 5, 5], "score": 0.6}])", b, 0),
                  DataError);
  CHECK_THROWS_AS(parse_detections(R"([{"image_id": 7, "category_id": 3, "bbox": [1, 1, 5], "score": 0.6}])", b, 0),
                  ParseError);
  CHECK_THROWS_AS(parse_detections(R"([{"image_id": 7, "category_id": 3, "bbox": [1, 1, 5, 5], "score": 1.5}])", b, 0),
                  ParseError);
  CHECK_THROWS_AS(parse_detections(R"({"image_id": 7})", b, 0), ParseError);
  const std::string six = R"([{"image_id": 7, "category_id": 3, "bbox": [1, 1, 5, 5], "score": 0.6, "top_scores": [)"
                          R"({"category_id": 3, "score": 0.1}, {"category_id": 3, "score": 0.1}, {"category_id": 3, "score": 0.1},)"
                          R"({"category_id": 3, "score": 0.1}, {"category_id": 3, "score": 0.1}, {"category_id": 3, "score": 0.1}]}])";
  CHECK(what_of([&] { parse_detections(six, b, 0); }) == "detections[0]: top_scores holds 6 entries, at most 5 allowed");
}

TEST_CASE("eighty categories give an eighty-class vocabulary") {
  std::string text = R"({"images": [{"id": 1}], "annotations": [], "categories": [)";
  for (int c = 1; c <= 90; ++c) {
    if (c % 9 == 0) continue;  // gaps like the real category ids
    text += (c == 1 ? "" : ",") + std::string(R"({"id": )") + std::to_string(c) + R"(, "name": "c)" + std::to_string(c) + "\"}";
  }
  text += "]}";
  const DatasetBundle b = parse_annotations(text);
  CHECK(b.vocab.size() == 80);
  CHECK(b.vocab.find_category(10) == 8);
}

TEST_CASE("property: raising the threshold never adds detections") {
  DatasetBundle b = parse_annotations(kAnnotations);
  std::string results = "[";
  for (int i = 0; i < 50; ++i) {
    if (i) results += ",";
    results += R"({"image_id": 7, "category_id": 3, "bbox": [1, 1, 5, 5], "score": )" + std::to_string(i / 49.0) + "}";
  }
  results += "]";
  std::size_t previous = std::numeric_limits<std::size_t>::max();
  for (double t : {0.0, 0.1, 0.5, 0.65, 0.7, 0.99, 1.0}) {
    parse_detections(results, b, t);
    CHECK(b.detection_count() <= previous);
    previous = b.detection_count();
  }
  parse_detections(R"([{"image_id": 7, "category_id": 3, "bbox": [1, 1, 5, 5], "score": 0.65}])", b, 0.7);
  CHECK(b.detection_count() == 0);
  parse_detections(R"([{"image_id": 7, "category_id": 3, "bbox": [1, 1, 5, 5], "score": 0.65}])", b, 0.6);
  CHECK(b.detection_count() == 1);
}

TEST_CASE("file helpers") {
  const auto dir = std::filesystem::temp_directory_path() / "ctxrel_dataset_test";
  std::filesystem::create_directories(dir);
  write_text_file(dir / "a.json", kAnnotations);
  CHECK(load_annotations(dir / "a.json").images.size() == 2);
  CHECK_THROWS_AS(read_text_file(dir / "missing.json"), Error);
  std::filesystem::remove_all(dir);
}

}  // TEST_SUITE
