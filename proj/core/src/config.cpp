#include "ctxrel/config.hpp"

#include "ctxrel/error.hpp"
#include "json_io.hpp"

namespace ctxrel {

using detail::json;

void ToolConfig::validate() const {
  relations.validate();
  train.validate();
  if (detector_thresholds.empty()) throw DataError("config: at least one detector threshold is required");
  for (double t : detector_thresholds)
    if (!(t > 0.0 && t <= 1.0)) throw DataError("config: detector thresholds must lie in (0, 1]");
  if (!(relabel_threshold >= 0.0 && relabel_threshold < 1.0))
    throw DataError("config: relabel threshold must lie in [0, 1)");
}

std::string tool_config_to_json(const ToolConfig& c) {
  json j;
  j["format_version"] = kToolConfigFormatVersion;
  j["relations"] = detail::relation_config_to_json(c.relations);
  j["detector_thresholds"] = c.detector_thresholds;
  j["relabel_threshold"] = c.relabel_threshold;
  j["train"] = {
      {"hidden", c.train.hidden},
      {"max_epochs", c.train.max_epochs},
      {"sigma", c.train.sigma},
      {"lambda_init", c.train.lambda_init},
      {"min_gradient", c.train.min_gradient},
      {"validation_fraction", c.train.validation_fraction},
      {"max_validation_failures", c.train.max_validation_failures},
      {"seed", c.train.seed},
  };
  j["paths"] = {
      {"annotations", c.paths.annotations},
      {"detections", c.paths.detections},
      {"model", c.paths.model},
      {"output", c.paths.output},
  };
  return j.dump(2) + "\n";
}

ToolConfig tool_config_from_json(std::string_view text) {
  const json j = detail::parse_json(text, "config");
  if (!j.is_object()) throw ParseError("config: expected a JSON object");
  ToolConfig c;
  try {
    if (j.contains("format_version") && j.at("format_version").get<int>() != kToolConfigFormatVersion)
      throw ParseError("config: unsupported format_version");
    if (j.contains("relations")) c.relations = detail::relation_config_from_json(j.at("relations"));
    if (j.contains("detector_thresholds"))
      c.detector_thresholds = j.at("detector_thresholds").get<std::vector<double>>();
    c.relabel_threshold = j.value("relabel_threshold", c.relabel_threshold);
    if (j.contains("train")) {
      const json& t = j.at("train");
      c.train.hidden = t.value("hidden", c.train.hidden);
      c.train.max_epochs = t.value("max_epochs", c.train.max_epochs);
      c.train.sigma = t.value("sigma", c.train.sigma);
      c.train.lambda_init = t.value("lambda_init", c.train.lambda_init);
      c.train.min_gradient = t.value("min_gradient", c.train.min_gradient);
      c.train.validation_fraction = t.value("validation_fraction", c.train.validation_fraction);
      c.train.max_validation_failures = t.value("max_validation_failures", c.train.max_validation_failures);
      c.train.seed = t.value("seed", c.train.seed);
    }
    if (j.contains("paths")) {
      const json& p = j.at("paths");
      c.paths.annotations = p.value("annotations", c.paths.annotations);
      c.paths.detections = p.value("detections", c.paths.detections);
      c.paths.model = p.value("model", c.paths.model);
      c.paths.output = p.value("output", c.paths.output);
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  try {
    c.validate();
  } catch (const DataError& e) {
    throw ParseError(e.what());
  }
  return c;
}

}  // namespace ctxrel
