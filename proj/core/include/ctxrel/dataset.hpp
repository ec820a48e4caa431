#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ctxrel/detection.hpp"

namespace ctxrel {

struct ImageInfo {
  ImageId id = 0;
  double width = 0.0;  // 0 when the file does not say
  double height = 0.0;
  std::string file_name;

  friend bool operator==(const ImageInfo&, const ImageInfo&) = default;
};

/// Ground truth plus detections for one dataset split.
struct DatasetBundle {
  ClassVocabulary vocab;
  std::map<ImageId, ImageInfo> images;
  ImageGroundTruth ground_truth;  // an entry for every image, possibly empty
  ImageDetections detections;
  double detector_threshold = 0.0;

  /// Distinct ground-truth classes per image, for co-occurrence counting.
  std::vector<std::vector<ClassId>> image_class_sets() const;
  std::size_t detection_count() const;
};

/// COCO instances JSON: `images`, `annotations` (bbox [x, y, w, h]) and
/// `categories`. Categories are sorted by id to form the vocabulary.
/// Throws ParseError naming the offending record.
DatasetBundle parse_annotations(std::string_view json_text);
DatasetBundle load_annotations(const std::filesystem::path& path);

/// COCO results JSON: array of {image_id, category_id, bbox, score} with an
/// optional `top_scores` array of up to five {category_id, score} entries.
/// Detections scoring below `threshold` are dropped. Replaces any detections
/// already in the bundle. Throws ParseError on malformed records and
/// DataError on unknown image or category ids.
void parse_detections(std::string_view json_text, DatasetBundle& bundle, double threshold);
void load_detections(const std::filesystem::path& path, DatasetBundle& bundle, double threshold);

std::string annotations_to_json(const DatasetBundle& bundle);
std::string detections_to_json(const ImageDetections& detections, const ClassVocabulary& vocab);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace ctxrel
