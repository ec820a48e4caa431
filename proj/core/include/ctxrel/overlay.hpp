#pragma once

#include <string>
#include <vector>

#include "ctxrel/detection.hpp"
#include "ctxrel/pipelines.hpp"

namespace ctxrel {

enum class OverlayVerdict { kCorrect, kIncorrect, kRemoved };

struct OverlayBox {
  BBox box;
  std::string label;
  double score = 0.0;
  OverlayVerdict verdict = OverlayVerdict::kIncorrect;
};

struct OverlayScene {
  ImageId image_id = 0;
  double width = 0.0;  // canvas size; 0 fits the boxes
  double height = 0.0;
  std::vector<OverlayBox> boxes;
};

/// Stroke colour per verdict: green correct, red incorrect, white removed.
std::string_view overlay_color(OverlayVerdict verdict);

/// Standalone SVG with one rectangle and caption ("label 0.1234") per box.
std::string render_overlay(const OverlayScene& scene);

/// Overlay for a relabeled scene: survivors are judged against ground truth
/// with their final labels, removed detections are drawn white.
OverlayScene overlay_from_relabel(const RelabelResult& result, const std::vector<GroundTruthBox>& ground_truth,
                                  const ClassVocabulary& vocab, double width = 0.0, double height = 0.0);

/// Overlay for plain (raw or rescored) detections judged against ground truth.
OverlayScene overlay_from_detections(ImageId image, const std::vector<Detection>& detections,
                                     const std::vector<GroundTruthBox>& ground_truth,
                                     const ClassVocabulary& vocab, double width = 0.0, double height = 0.0);

}  // namespace ctxrel
