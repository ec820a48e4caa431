#include "ctxrel/overlay.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "ctxrel/evaluation.hpp"

namespace ctxrel {

std::string_view overlay_color(OverlayVerdict verdict) {
  switch (verdict) {
    case OverlayVerdict::kCorrect: return "#00ff00";
    case OverlayVerdict::kIncorrect: return "#ff0000";
    case OverlayVerdict::kRemoved: return "#ffffff";
  }
  return "#ff0000";
}

namespace {

std::string escape_xml(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

std::string render_overlay(const OverlayScene& scene) {
  double width = scene.width;
  double height = scene.height;
  for (const auto& b : scene.boxes) {
    if (scene.width <= 0.0) width = std::max(width, b.box.right());
    if (scene.height <= 0.0) height = std::max(height, b.box.bottom());
  }
  width = std::max(width, 1.0);
  height = std::max(height, 1.0);

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\"" << num(height)
      << "\" viewBox=\"0 0 " << num(width) << ' ' << num(height) << "\" style=\"background:#404040\">\n"
      << "  <title>image " << scene.image_id << "</title>\n";
  for (const auto& b : scene.boxes) {
    const auto color = overlay_color(b.verdict);
    char score[32];
    std::snprintf(score, sizeof score, "%.4f", b.score);
    svg << "  <g>\n"
        << "    <rect x=\"" << num(b.box.x) << "\" y=\"" << num(b.box.y) << "\" width=\"" << num(b.box.w)
        << "\" height=\"" << num(b.box.h) << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
        << "    <text x=\"" << num(b.box.x + 2.0) << "\" y=\"" << num(std::max(b.box.y - 3.0, 10.0))
        << "\" fill=\"" << color << "\" font-family=\"sans-serif\" font-size=\"11\">" << escape_xml(b.label) << ' '
        << score << "</text>\n"
        << "  </g>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

OverlayScene overlay_from_detections(ImageId image, const std::vector<Detection>& detections,
                                     const std::vector<GroundTruthBox>& ground_truth,
                                     const ClassVocabulary& vocab, double width, double height) {
  OverlayScene scene{image, width, height, {}};
  const MatchResult m = match_detections(detections, ground_truth);
  for (std::size_t i = 0; i < detections.size(); ++i) {
    const auto& d = detections[i];
    scene.boxes.push_back({d.box, vocab.name(d.class_id), d.confidence,
                           m.detection_correct[i] ? OverlayVerdict::kCorrect : OverlayVerdict::kIncorrect});
  }
  return scene;
}

OverlayScene overlay_from_relabel(const RelabelResult& result, const std::vector<GroundTruthBox>& ground_truth,
                                  const ClassVocabulary& vocab, double width, double height) {
  OverlayScene scene = overlay_from_detections(result.final_scene.image_id, result.final_scene.detections,
                                               ground_truth, vocab, width, height);
  for (const auto& r : result.records) {
    if (r.status != RelabelStatus::kRemoved) continue;
    scene.boxes.push_back({r.box, "background", r.rescored, OverlayVerdict::kRemoved});
  }
  return scene;
}

}  // namespace ctxrel
