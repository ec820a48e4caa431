#include "ctxrel/evaluation.hpp"

#include <algorithm>
#include <numeric>
#include <tuple>

#include <json.hpp>

#include "ctxrel/error.hpp"

namespace ctxrel {

using json = nlohmann::json;

std::vector<std::size_t> confidence_order(std::span<const Detection> detections) {
  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto key = [&](std::size_t i) {
    const Detection& d = detections[i];
    return std::make_tuple(-d.confidence, d.class_id, d.box.x, d.box.y, d.box.w, d.box.h);
  };
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
  return order;
}

MatchResult match_detections(std::span<const Detection> detections,
                             std::span<const GroundTruthBox> ground_truth,
                             double iou_threshold) {
  MatchResult r;
  r.detection_correct.assign(detections.size(), false);
  r.matched_gt.assign(detections.size(), -1);
  r.gt_matched.assign(ground_truth.size(), false);

  for (std::size_t di : confidence_order(detections)) {
    const Detection& det = detections[di];
    int best = -1;
    double best_iou = -1.0;
    for (std::size_t g = 0; g < ground_truth.size(); ++g) {
      if (r.gt_matched[g] || ground_truth[g].class_id != det.class_id) continue;
      const double v = iou(det.box, ground_truth[g].box);
      if (v >= iou_threshold && v > best_iou) {
        best_iou = v;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0) {
      r.gt_matched[static_cast<std::size_t>(best)] = true;
      r.detection_correct[di] = true;
      r.matched_gt[di] = best;
      ++r.tp;
    } else {
      ++r.fp;
    }
  }
  r.fn = ground_truth.size() - r.tp;
  return r;
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DataError("auc: scores and labels differ in length");
  std::size_t pos = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw DataError("auc: labels must be 0 or 1");
    pos += static_cast<std::size_t>(l);
  }
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw DataError("auc: both positive and negative labels are required");

  // Mann-Whitney U via midranks.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k)
      if (labels[order[k]] == 1) pos_rank_sum += midrank;
    i = j + 1;
  }
  const double p = static_cast<double>(pos);
  const double u = pos_rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(neg));
}

double average_precision(std::span<const RankedMatch> ranked, std::size_t num_ground_truth) {
  if (num_ground_truth == 0) return 0.0;
  const double total = static_cast<double>(num_ground_truth);

  std::vector<double> precision;
  std::vector<double> recall;
  precision.reserve(ranked.size());
  recall.reserve(ranked.size());
  std::size_t tp = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (ranked[i].correct) ++tp;
    precision.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
    recall.push_back(static_cast<double>(tp) / total);
  }

  // Envelope: precision at each rank becomes the max precision at any later rank.
  for (std::size_t i = precision.size(); i-- > 1;)
    precision[i - 1] = std::max(precision[i - 1], precision[i]);

  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < recall.size(); ++i) {
    if (recall[i] > prev_recall) {
      ap += (recall[i] - prev_recall) * precision[i];
      prev_recall = recall[i];
    }
  }
  return ap;
}

PrecisionRecall f1_score(std::size_t tp, std::size_t fp, std::size_t fn) {
  PrecisionRecall r;
  const double t = static_cast<double>(tp);
  if (tp + fp > 0) r.precision = t / static_cast<double>(tp + fp);
  if (tp + fn > 0) r.recall = t / static_cast<double>(tp + fn);
  if (r.precision + r.recall > 0.0) r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

namespace {

const std::vector<GroundTruthBox>& gts_for(const ImageGroundTruth& ground_truth, ImageId id) {
  static const std::vector<GroundTruthBox> kNone;
  auto it = ground_truth.find(id);
  return it == ground_truth.end() ? kNone : it->second;
}

}  // namespace

MapResult mean_average_precision(const ImageDetections& detections,
                                 const ImageGroundTruth& ground_truth,
                                 std::size_t vocab_size,
                                 double iou_threshold) {
  std::vector<std::vector<RankedMatch>> per_class(vocab_size);
  std::vector<std::size_t> gt_count(vocab_size, 0);

  for (const auto& [image, gts] : ground_truth)
    for (const auto& g : gts)
      if (g.class_id >= 0 && static_cast<std::size_t>(g.class_id) < vocab_size)
        ++gt_count[static_cast<std::size_t>(g.class_id)];

  for (const auto& [image, dets] : detections) {
    const MatchResult m = match_detections(dets, gts_for(ground_truth, image), iou_threshold);
    for (std::size_t i : confidence_order(dets)) {
      const auto c = dets[i].class_id;
      if (c < 0 || static_cast<std::size_t>(c) >= vocab_size)
        throw DataError("mAP: detection class " + std::to_string(c) + " outside vocabulary");
      per_class[static_cast<std::size_t>(c)].push_back({dets[i].confidence, m.detection_correct[i]});
    }
  }

  MapResult result;
  result.per_class_ap.resize(vocab_size);
  double sum = 0.0;
  std::size_t evaluated = 0;
  for (std::size_t c = 0; c < vocab_size; ++c) {
    if (gt_count[c] == 0) {
      if (!per_class[c].empty()) result.excluded_classes.push_back(static_cast<ClassId>(c));
      continue;
    }
    auto& ranked = per_class[c];
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const RankedMatch& a, const RankedMatch& b) { return a.score > b.score; });
    const double ap = average_precision(ranked, gt_count[c]);
    result.per_class_ap[c] = ap;
    sum += ap;
    ++evaluated;
  }
  result.map = evaluated > 0 ? sum / static_cast<double>(evaluated) : 0.0;
  return result;
}

std::vector<ScoredSample> scored_samples(const ImageDetections& kept,
                                         const ImageGroundTruth& ground_truth,
                                         const ImageDetections* removed,
                                         double iou_threshold) {
  std::vector<ScoredSample> samples;
  auto add_image = [&](ImageId image, std::vector<Detection> dets) {
    const MatchResult m = match_detections(dets, gts_for(ground_truth, image), iou_threshold);
    for (std::size_t i = 0; i < dets.size(); ++i)
      samples.push_back({dets[i].confidence, m.detection_correct[i] ? 1 : 0});
  };

  std::map<ImageId, std::vector<Detection>> merged = kept;
  if (removed != nullptr) {
    for (const auto& [image, dets] : *removed) {
      auto& bucket = merged[image];
      for (Detection d : dets) {
        d.confidence = 0.0;
        bucket.push_back(std::move(d));
      }
    }
  }
  for (auto& [image, dets] : merged) add_image(image, std::move(dets));
  return samples;
}

MetricsReport evaluate(const ImageDetections& kept,
                       const ImageGroundTruth& ground_truth,
                       const ClassVocabulary& vocab,
                       double threshold,
                       const ImageDetections* removed) {
  MetricsReport report;
  report.threshold = threshold;

  const auto samples = scored_samples(kept, ground_truth, removed);
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& s : samples) {
    scores.push_back(s.score);
    labels.push_back(s.correct);
  }
  const bool both = std::count(labels.begin(), labels.end(), 1) > 0 &&
                    std::count(labels.begin(), labels.end(), 0) > 0;
  if (both) report.auc = auc(scores, labels);

  const MapResult map = mean_average_precision(kept, ground_truth, vocab.size());
  report.map50 = map.map;
  for (std::size_t c = 0; c < vocab.size(); ++c)
    if (map.per_class_ap[c]) report.per_class_ap[vocab.name(static_cast<ClassId>(c))] = *map.per_class_ap[c];

  std::size_t tp = 0, fp = 0, fn = 0;
  for (const auto& [image, gts] : ground_truth) {
    auto it = kept.find(image);
    if (it == kept.end()) {
      fn += gts.size();
      continue;
    }
    const MatchResult m = match_detections(it->second, gts);
    tp += m.tp;
    fp += m.fp;
    fn += m.fn;
  }
  for (const auto& [image, dets] : kept)
    if (!ground_truth.contains(image)) fp += dets.size();

  const PrecisionRecall pr = f1_score(tp, fp, fn);
  report.precision = pr.precision;
  report.recall = pr.recall;
  report.f1 = pr.f1;
  return report;
}

std::string metrics_to_json(const MetricsReport& report) {
  json j;
  j["format_version"] = 1;
  j["threshold"] = report.threshold;
  j["auc"] = report.auc ? json(*report.auc) : json(nullptr);
  j["map50"] = report.map50;
  j["f1"] = report.f1;
  j["precision"] = report.precision;
  j["recall"] = report.recall;
  j["per_class_ap"] = json::object();
  for (const auto& [name, ap] : report.per_class_ap) j["per_class_ap"][name] = ap;
  return j.dump(2) + "\n";
}

MetricsReport metrics_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    MetricsReport r;
    r.threshold = j.at("threshold").get<double>();
    if (!j.at("auc").is_null()) r.auc = j.at("auc").get<double>();
    r.map50 = j.at("map50").get<double>();
    r.f1 = j.at("f1").get<double>();
    r.precision = j.at("precision").get<double>();
    r.recall = j.at("recall").get<double>();
    for (const auto& [name, ap] : j.at("per_class_ap").items()) r.per_class_ap[name] = ap.get<double>();
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("metrics report: ") + e.what());
  }
}

}  // namespace ctxrel
