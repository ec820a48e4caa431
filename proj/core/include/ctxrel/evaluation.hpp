#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ctxrel/detection.hpp"

namespace ctxrel {

inline constexpr double kMatchIou = 0.5;

struct MatchResult {
  std::vector<bool> detection_correct;  // indexed like the input detections
  std::vector<int> matched_gt;          // gt index per detection, -1 when unmatched
  std::vector<bool> gt_matched;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

/// Greedy one-to-one matching within one image. Detections are visited by
/// descending confidence (ties broken on class and geometry, so the input
/// order never matters); each takes the highest-IoU unmatched ground truth of
/// its own class whose IoU reaches `iou_threshold`.
MatchResult match_detections(std::span<const Detection> detections,
                             std::span<const GroundTruthBox> ground_truth,
                             double iou_threshold = kMatchIou);

/// Visiting order used by match_detections.
std::vector<std::size_t> confidence_order(std::span<const Detection> detections);

/// Area under the ROC curve as the Mann-Whitney statistic; tied pairs count
/// one half. Throws DataError unless both labels occur.
double auc(std::span<const double> scores, std::span<const int> labels);

struct RankedMatch {
  double score = 0.0;
  bool correct = false;
};

/// All-point interpolated AP: area under the monotone precision envelope.
/// Input must already be ranked best-first. Zero when `num_ground_truth` is 0.
double average_precision(std::span<const RankedMatch> ranked, std::size_t num_ground_truth);

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Micro-averaged precision/recall/F1 from match totals. Any ratio with a
/// zero denominator is reported as 0.
PrecisionRecall f1_score(std::size_t tp, std::size_t fp, std::size_t fn);

struct MapResult {
  double map = 0.0;
  /// One entry per vocabulary class; empty for classes without ground truth.
  std::vector<std::optional<double>> per_class_ap;
  /// Classes that had detections but no ground truth, so were left out of the mean.
  std::vector<ClassId> excluded_classes;
};

MapResult mean_average_precision(const ImageDetections& detections,
                                 const ImageGroundTruth& ground_truth,
                                 std::size_t vocab_size,
                                 double iou_threshold = kMatchIou);

struct MetricsReport {
  double threshold = 0.0;
  /// Empty when the samples hold only one label.
  std::optional<double> auc;
  double map50 = 0.0;
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::map<std::string, double> per_class_ap;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// Per-detection correctness labels and scores for every kept detection,
/// plus removed ones at score 0 (labelled by whether they would have matched).
struct ScoredSample {
  double score = 0.0;
  int correct = 0;
};
std::vector<ScoredSample> scored_samples(const ImageDetections& kept,
                                         const ImageGroundTruth& ground_truth,
                                         const ImageDetections* removed = nullptr,
                                         double iou_threshold = kMatchIou);

/// AUC over `scored_samples`, mAP@0.5 and micro F1 over the kept detections.
/// Images without ground truth entries are treated as having none.
MetricsReport evaluate(const ImageDetections& kept,
                       const ImageGroundTruth& ground_truth,
                       const ClassVocabulary& vocab,
                       double threshold,
                       const ImageDetections* removed = nullptr);

std::string metrics_to_json(const MetricsReport& report);
MetricsReport metrics_from_json(std::string_view text);

}  // namespace ctxrel
