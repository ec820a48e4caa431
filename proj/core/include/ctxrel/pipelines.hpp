#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ctxrel/detection.hpp"
#include "ctxrel/mlp_scg.hpp"

namespace ctxrel {

inline constexpr double kDefaultRelabelThreshold = 0.4;

struct SceneDetections {
  ImageId image_id = 0;
  double detector_threshold = 0.0;
  std::vector<Detection> detections;
  /// Set when the scene held fewer than two detections and was passed through.
  bool skipped_mono_object = false;
};

/// Replaces every confidence with the model's probability of correctness.
/// Boxes, labels and order are untouched. Scenes with fewer than two
/// detections come back unchanged and flagged. Throws DataError when a
/// detection's class is outside the model vocabulary.
SceneDetections rescore_scene(const ContextModel& model, const SceneDetections& scene);

enum class RelabelStatus { kKept, kRelabeled, kRemoved };
std::string_view to_string(RelabelStatus status);

struct CandidateScore {
  ClassId class_id = 0;
  double detector_score = 0.0;
  double rescored = 0.0;
};

struct RelabelRecord {
  ImageId image_id = 0;
  BBox box;
  ClassId original_label = 0;
  double original_score = 0.0;
  double rescored = 0.0;  // first rescoring pass
  RelabelStatus status = RelabelStatus::kKept;
  std::optional<ClassId> final_label;  // empty when removed
  std::optional<double> final_score;   // empty when removed
  std::vector<CandidateScore> candidates_tried;
  std::string note;  // e.g. "top5 unavailable"
};

struct RelabelResult {
  std::vector<RelabelRecord> records;  // one per input detection, same order
  SceneDetections final_scene;         // survivors with final labels and scores
};

/// Relabeling procedure:
///  1. rescore every detection;
///  2. detections scoring below `threshold` become candidates;
///  3. each candidate is re-scored under every class of its detector top-5
///     (with that class's detector score as confidence, neighbours keeping
///     their original labels); the best one above `threshold` becomes the
///     new label, ties going to the lower class id; otherwise the detection
///     is removed as background;
///  4. the surviving scene, with new labels, is rescored once more.
RelabelResult relabel_scene(const ContextModel& model, const SceneDetections& scene,
                            double threshold = kDefaultRelabelThreshold);

/// One JSON object per line, one line per record. Labels are written as
/// the vocabulary's external category ids.
std::string audit_log_jsonl(const std::vector<RelabelRecord>& records, const ClassVocabulary& vocab);

}  // namespace ctxrel
