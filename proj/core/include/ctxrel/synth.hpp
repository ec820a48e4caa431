#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ctxrel/dataset.hpp"
#include "ctxrel/geometry.hpp"

namespace ctxrel {

/// A single relation bit, read from the reference's point of view.
enum class RelationPredicate {
  kOverlapYes,
  kOverlapNo,
  kLarger,
  kSmaller,
  kEqual,
  kBoundaryAbove,
  kBoundaryBelow,
  kBoundaryLeft,
  kBoundaryRight,
  kCentralAbove,
  kCentralBelow,
  kCentralLeft,
  kCentralRight,
  kNear,
  kFar,
};

std::string_view to_string(RelationPredicate p);
std::optional<RelationPredicate> predicate_from_string(std::string_view name);
bool holds(RelationPredicate p, const RelationBits& bits);

enum class RuleEffect {
  kRequires,  // subject is correct only if such an object exists
  kForbids,   // subject is incorrect if such an object exists
};

/// "A `subject` detection needs (or must not have) an `object`-class
/// detection standing in every one of `relations` to it."
struct ContextRule {
  ClassId subject = 0;
  std::vector<RelationPredicate> relations;
  ClassId object = 0;
  RuleEffect effect = RuleEffect::kRequires;

  friend bool operator==(const ContextRule&, const ContextRule&) = default;
};

struct SynthSpec {
  std::size_t classes = 6;
  std::size_t images = 100;
  std::size_t min_objects = 3;
  std::size_t max_objects = 6;
  std::vector<ContextRule> rules = default_rules(6);
  /// Chance that placing a rule subject also places a partner satisfying its
  /// first requirement, so that consistent scenes are common.
  double partner_probability = 0.6;
  /// Chance that a detection's correctness is flipped away from its rule verdict.
  double label_noise = 0.0;
  /// Fraction of detections given a wrong label whose true class stays in top-5.
  double mislabel_fraction = 0.0;
  double image_width = 640.0;
  double image_height = 480.0;
  ImageId first_image_id = 1;
  std::uint64_t seed = 0;

  /// Throws DataError for probabilities outside [0, 1], empty ranges, or
  /// rules naming classes the spec does not have.
  void validate() const;

  /// Six-class default used by the tests and the CLI: every class gets one
  /// rule over boundary, scale and distance relations.
  static std::vector<ContextRule> default_rules(std::size_t classes);
};

/// Relation predicates are evaluated with this config.
RelationConfig synth_relation_config();

/// True when a detection labelled `label` at `box` satisfies every rule for
/// that label against `scene` (excluding index `skip`).
bool context_consistent(ClassId label, const BBox& box, std::span<const Detection> scene, std::size_t skip,
                        std::span<const ContextRule> rules);

struct SynthTruth {
  bool correct = false;            // matches a ground-truth box of its class
  bool rule_consistent = false;    // verdict of the planted rules
  bool planted_mislabel = false;
  std::optional<ClassId> true_class;  // class of the ground-truth object under the box, if any
};

struct SynthResult {
  DatasetBundle bundle;
  /// Parallel to bundle.detections.
  std::map<ImageId, std::vector<SynthTruth>> truth;
  std::size_t correct = 0;
  std::size_t incorrect = 0;
  std::size_t planted_mislabels = 0;
  /// Every detection received the same correctness label, so ranking
  /// metrics are undefined on this data.
  bool single_label = false;
};

/// Deterministic for a given spec. With no rules every detection is correct
/// and the result is flagged single_label.
SynthResult synth_generate(const SynthSpec& spec);

std::string synth_spec_to_json(const SynthSpec& spec);
SynthSpec synth_spec_from_json(std::string_view text);

}  // namespace ctxrel
