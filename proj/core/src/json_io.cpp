#include "json_io.hpp"

namespace ctxrel::detail {

json relation_config_to_json(const RelationConfig& c) {
  return json{
      {"cooccurrence", c.cooccurrence},
      {"overlapping", c.overlapping},
      {"scale", c.scale},
      {"boundary", c.boundary},
      {"central", c.central},
      {"near_far", c.near_far},
      {"eps_scale", c.eps_scale},
      {"overlap_mode", c.overlap_mode == OverlapMode::kIouThreshold ? "iou_threshold" : "any_positive"},
      {"overlap_threshold", c.overlap_threshold},
      {"central_form", c.central_form == CentralForm::kLiteral ? "literal" : "center"},
  };
}

RelationConfig relation_config_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("relation config: expected an object");
  RelationConfig c;
  c.cooccurrence = j.value("cooccurrence", c.cooccurrence);
  c.overlapping = j.value("overlapping", c.overlapping);
  c.scale = j.value("scale", c.scale);
  c.boundary = j.value("boundary", c.boundary);
  c.central = j.value("central", c.central);
  c.near_far = j.value("near_far", c.near_far);
  c.eps_scale = j.value("eps_scale", c.eps_scale);
  c.overlap_threshold = j.value("overlap_threshold", c.overlap_threshold);

  const std::string mode = j.value("overlap_mode", std::string("iou_threshold"));
  if (mode == "iou_threshold") c.overlap_mode = OverlapMode::kIouThreshold;
  else if (mode == "any_positive") c.overlap_mode = OverlapMode::kAnyPositive;
  else throw ParseError("relation config: unknown overlap_mode '" + mode + "'");

  const std::string form = j.value("central_form", std::string("literal"));
  if (form == "literal") c.central_form = CentralForm::kLiteral;
  else if (form == "center") c.central_form = CentralForm::kCenter;
  else throw ParseError("relation config: unknown central_form '" + form + "'");

  try {
    c.validate();
  } catch (const DataError& e) {
    throw ParseError(e.what());
  }
  return c;
}

json vocabulary_to_json(const ClassVocabulary& vocab) {
  json arr = json::array();
  for (std::size_t i = 0; i < vocab.size(); ++i)
    arr.push_back({{"name", vocab.names()[i]}, {"category_id", vocab.category_ids()[i]}});
  return arr;
}

ClassVocabulary vocabulary_from_json(const json& j) {
  if (!j.is_array()) throw ParseError("vocabulary: expected an array");
  std::vector<std::string> names;
  std::vector<std::int64_t> ids;
  for (std::size_t i = 0; i < j.size(); ++i) {
    try {
      names.push_back(j[i].at("name").get<std::string>());
      ids.push_back(j[i].at("category_id").get<std::int64_t>());
    } catch (const json::exception& e) {
      throw ParseError("vocabulary[" + std::to_string(i) + "]: " + e.what());
    }
  }
  try {
    return ClassVocabulary(std::move(names), std::move(ids));
  } catch (const DataError& e) {
    throw ParseError(e.what());
  }
}

json parse_json(std::string_view text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(what + ": malformed JSON: " + e.what());
  }
}

}  // namespace ctxrel::detail
