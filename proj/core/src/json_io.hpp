#pragma once

// JSON helpers shared by the model, config and dataset readers.

#include <json.hpp>
#include <string>

#include "ctxrel/detection.hpp"
#include "ctxrel/error.hpp"
#include "ctxrel/geometry.hpp"

namespace ctxrel::detail {

using json = nlohmann::json;

json relation_config_to_json(const RelationConfig& config);
/// Missing keys keep their defaults.
RelationConfig relation_config_from_json(const json& j);

json vocabulary_to_json(const ClassVocabulary& vocab);
ClassVocabulary vocabulary_from_json(const json& j);

json parse_json(std::string_view text, const std::string& what);

}  // namespace ctxrel::detail
