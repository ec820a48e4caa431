#include "ctxrel/pipelines.hpp"

#include <json.hpp>

#include "ctxrel/error.hpp"

namespace ctxrel {

namespace {

void check_scene(const ContextModel& model, const SceneDetections& scene) {
  for (const auto& d : scene.detections) {
    if (!model.vocab.contains(d.class_id))
      throw DataError("scene " + std::to_string(scene.image_id) + ": class id " + std::to_string(d.class_id) +
                      " outside the model vocabulary");
    if (d.image_id != scene.image_id)
      throw DataError("scene " + std::to_string(scene.image_id) + ": detection from image " +
                      std::to_string(d.image_id));
  }
}

std::vector<double> model_scores(const ContextModel& model, const std::vector<Detection>& dets) {
  std::vector<double> scores(dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i)
    scores[i] = model.score_reference(dets[i].box, dets[i].confidence, dets[i].class_id, dets, i);
  return scores;
}

}  // namespace

SceneDetections rescore_scene(const ContextModel& model, const SceneDetections& scene) {
  check_scene(model, scene);
  SceneDetections out = scene;
  if (scene.detections.size() < 2) {
    out.skipped_mono_object = true;
    return out;
  }
  const auto scores = model_scores(model, scene.detections);
  for (std::size_t i = 0; i < scores.size(); ++i) out.detections[i].confidence = scores[i];
  out.skipped_mono_object = false;
  return out;
}

std::string_view to_string(RelabelStatus status) {
  switch (status) {
    case RelabelStatus::kKept: return "kept";
    case RelabelStatus::kRelabeled: return "relabeled";
    case RelabelStatus::kRemoved: return "removed";
  }
  return "unknown";
}

RelabelResult relabel_scene(const ContextModel& model, const SceneDetections& scene, double threshold) {
  check_scene(model, scene);
  const auto& dets = scene.detections;
  RelabelResult result;
  result.final_scene.image_id = scene.image_id;
  result.final_scene.detector_threshold = scene.detector_threshold;

  auto base_record = [&](const Detection& d) {
    RelabelRecord r;
    r.image_id = d.image_id;
    r.box = d.box;
    r.original_label = d.class_id;
    r.original_score = d.confidence;
    return r;
  };

  if (dets.size() < 2) {
    for (const auto& d : dets) {
      RelabelRecord r = base_record(d);
      r.rescored = d.confidence;
      r.final_label = d.class_id;
      r.final_score = d.confidence;
      r.note = "skipped (mono-object)";
      result.records.push_back(std::move(r));
    }
    result.final_scene.detections = dets;
    result.final_scene.skipped_mono_object = true;
    return result;
  }

  // Step 1.
  const auto first_pass = model_scores(model, dets);

  // Steps 2 and 3. Surviving detections carry the confidence fed to step 4.
  std::vector<Detection> updated = dets;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    RelabelRecord r = base_record(dets[i]);
    r.rescored = first_pass[i];
    r.final_label = dets[i].class_id;

    if (first_pass[i] < threshold) {
      if (dets[i].top5.empty()) {
        r.status = RelabelStatus::kRemoved;
        r.note = "top5 unavailable";
      } else {
        std::optional<CandidateScore> best;
        for (const TopScore& cand : dets[i].top5) {
          if (!model.vocab.contains(cand.class_id)) continue;
          const double s = model.score_reference(dets[i].box, cand.score, cand.class_id, dets, i);
          r.candidates_tried.push_back({cand.class_id, cand.score, s});
          if (!best || s > best->rescored || (s == best->rescored && cand.class_id < best->class_id))
            best = r.candidates_tried.back();
        }
        if (best && best->rescored > threshold) {
          r.status = best->class_id == dets[i].class_id ? RelabelStatus::kKept : RelabelStatus::kRelabeled;
          r.final_label = best->class_id;
          updated[i].class_id = best->class_id;
          updated[i].confidence = best->detector_score;
        } else {
          r.status = RelabelStatus::kRemoved;
        }
      }
      if (r.status == RelabelStatus::kRemoved) r.final_label.reset();
    }
    result.records.push_back(std::move(r));
  }

  // Step 4.
  std::vector<std::size_t> survivors;
  for (std::size_t i = 0; i < dets.size(); ++i)
    if (result.records[i].status != RelabelStatus::kRemoved) survivors.push_back(i);

  std::vector<Detection> final_dets;
  for (std::size_t i : survivors) final_dets.push_back(updated[i]);

  if (final_dets.size() >= 2) {
    const auto final_scores = model_scores(model, final_dets);
    for (std::size_t k = 0; k < survivors.size(); ++k) {
      final_dets[k].confidence = final_scores[k];
      result.records[survivors[k]].final_score = final_scores[k];
    }
  } else {
    // A lone survivor keeps the last score the model gave it.
    for (std::size_t k = 0; k < survivors.size(); ++k) {
      auto& rec = result.records[survivors[k]];
      double s = rec.rescored;
      for (const auto& c : rec.candidates_tried)
        if (rec.final_label && c.class_id == *rec.final_label && rec.status == RelabelStatus::kRelabeled)
          s = c.rescored;
      final_dets[k].confidence = s;
      rec.final_score = s;
    }
  }
  result.final_scene.detections = std::move(final_dets);
  return result;
}

std::string audit_log_jsonl(const std::vector<RelabelRecord>& records, const ClassVocabulary& vocab) {
  using json = nlohmann::json;
  std::string out;
  for (const auto& r : records) {
    json j;
    j["image_id"] = r.image_id;
    j["box"] = {r.box.x, r.box.y, r.box.w, r.box.h};
    j["original_label"] = vocab.category_id(r.original_label);
    j["original_score"] = r.original_score;
    j["rescored"] = r.rescored;
    j["status"] = std::string(to_string(r.status));
    j["final_label"] = r.final_label ? json(vocab.category_id(*r.final_label)) : json(nullptr);
    j["final_score"] = r.final_score ? json(*r.final_score) : json(nullptr);
    json cands = json::array();
    for (const auto& c : r.candidates_tried)
      cands.push_back({{"label", vocab.category_id(c.class_id)}, {"detector_score", c.detector_score},
                       {"rescored", c.rescored}});
    j["candidates_tried"] = std::move(cands);
    if (!r.note.empty()) j["note"] = r.note;
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace ctxrel
