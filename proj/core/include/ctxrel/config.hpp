#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "ctxrel/geometry.hpp"
#include "ctxrel/mlp_scg.hpp"

namespace ctxrel {

struct ToolPaths {
  std::string annotations;
  std::string detections;
  std::string model;
  std::string output;

  friend bool operator==(const ToolPaths&, const ToolPaths&) = default;
};

/// Everything a CLI run can be configured with. Command-line flags override
/// values loaded from a config file.
struct ToolConfig {
  RelationConfig relations;
  std::vector<double> detector_thresholds{0.5, 0.6, 0.7};
  double relabel_threshold = 0.4;
  TrainConfig train;
  ToolPaths paths;

  /// Thresholds in (0, 1], relabel threshold in [0, 1), plus the nested
  /// relation and training checks. Throws DataError.
  void validate() const;

  friend bool operator==(const ToolConfig&, const ToolConfig&) = default;
};

inline constexpr int kToolConfigFormatVersion = 1;

std::string tool_config_to_json(const ToolConfig& config);
/// Missing keys keep their defaults. Throws ParseError.
ToolConfig tool_config_from_json(std::string_view text);

}  // namespace ctxrel
