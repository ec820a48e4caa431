#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ctxrel/geometry.hpp"

namespace ctxrel {

using ImageId = std::int64_t;
using ClassId = int;  // contiguous vocabulary index, 0-based

/// Ordered class names with contiguous ids starting at 0. Each class also
/// remembers the external category id it was loaded with (COCO ids are not
/// contiguous).
class ClassVocabulary {
 public:
  ClassVocabulary() = default;

  /// External ids default to the contiguous index.
  explicit ClassVocabulary(std::vector<std::string> names);
  ClassVocabulary(std::vector<std::string> names, std::vector<std::int64_t> category_ids);

  std::size_t size() const { return names_.size(); }
  bool empty() const { return names_.empty(); }
  bool contains(ClassId id) const { return id >= 0 && static_cast<std::size_t>(id) < size(); }

  const std::string& name(ClassId id) const;
  std::int64_t category_id(ClassId id) const;

  const std::vector<std::string>& names() const { return names_; }
  const std::vector<std::int64_t>& category_ids() const { return category_ids_; }

  std::optional<ClassId> find_name(std::string_view name) const;
  std::optional<ClassId> find_category(std::int64_t category_id) const;

  /// Vocabulary of `n` classes named "class0".."class{n-1}".
  static ClassVocabulary numbered(std::size_t n);

  friend bool operator==(const ClassVocabulary& a, const ClassVocabulary& b) {
    return a.names_ == b.names_ && a.category_ids_ == b.category_ids_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<std::int64_t> category_ids_;
  std::unordered_map<std::int64_t, ClassId> by_category_;
};

/// One entry of the detector's class distribution for a box.
struct TopScore {
  ClassId class_id = 0;
  double score = 0.0;

  friend bool operator==(const TopScore&, const TopScore&) = default;
};

inline constexpr std::size_t kMaxTopScores = 5;

struct Detection {
  ImageId image_id = 0;
  ClassId class_id = 0;
  BBox box;
  double confidence = 0.0;
  /// Detector's top classes, descending by score. Empty when the detector
  /// did not export them.
  std::vector<TopScore> top5;

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct GroundTruthBox {
  ClassId class_id = 0;
  BBox box;

  friend bool operator==(const GroundTruthBox&, const GroundTruthBox&) = default;
};

/// Per-image collections, ordered by image id so iteration is deterministic.
using ImageDetections = std::map<ImageId, std::vector<Detection>>;
using ImageGroundTruth = std::map<ImageId, std::vector<GroundTruthBox>>;

}  // namespace ctxrel
