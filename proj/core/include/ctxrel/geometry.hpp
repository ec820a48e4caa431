#pragma once

#include <array>
#include <cstddef>
#include <span>

namespace ctxrel {

/// Axis-aligned box in pixel coordinates. Origin is top-left and y grows downward.
struct BBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double right() const { return x + w; }
  double bottom() const { return y + h; }
  double area() const { return w * h; }
  double diagonal() const;

  /// w > 0, h > 0 and every coordinate finite.
  bool valid() const;

  friend bool operator==(const BBox&, const BBox&) = default;
};

double iou(const BBox& a, const BBox& b);

struct DirectionBits {
  bool above = false;
  bool below = false;
  bool left = false;
  bool right = false;

  friend bool operator==(const DirectionBits&, const DirectionBits&) = default;
};

enum class Distance { kNear, kFar };
enum class Overlap { kYes, kNo };
enum class Scale { kLarger, kSmaller, kEqual };

enum class OverlapMode {
  kIouThreshold,  // yes iff IoU >= threshold
  kAnyPositive,   // yes iff IoU > 0
};

enum class CentralForm {
  kLiteral,  // compares (y + h) * 0.5
  kCenter,   // compares y + h * 0.5
};

/// Edge-based above/below/left/right of `ref` with respect to `obj`.
DirectionBits boundary_relations(const BBox& ref, const BBox& obj);

/// Midpoint comparisons with their guard conditions.
DirectionBits central_relations(const BBox& ref, const BBox& obj,
                                CentralForm form = CentralForm::kLiteral);

/// Horizontal gap from ref's left edge to obj's right edge against ref's
/// diagonal. Equality resolves to near.
Distance distance_relation(const BBox& ref, const BBox& obj);

Overlap overlap_relation(const BBox& ref, const BBox& obj,
                         OverlapMode mode = OverlapMode::kIouThreshold,
                         double threshold = 0.5);

/// Diagonal comparison; equal when the diagonals differ by at most
/// `eps * max(diagonals)`.
Scale scale_relation(const BBox& ref, const BBox& obj, double eps = 0.05);

/// Which relation families contribute to the context encoding, plus the
/// parameters of the ones that take any.
struct RelationConfig {
  bool cooccurrence = true;
  bool overlapping = true;
  bool scale = true;
  bool boundary = true;
  bool central = true;
  bool near_far = true;

  double eps_scale = 0.05;
  OverlapMode overlap_mode = OverlapMode::kIouThreshold;
  double overlap_threshold = 0.5;
  CentralForm central_form = CentralForm::kLiteral;

  /// Widths of the active families summed: cooc 1, overlap 2, scale 3,
  /// boundary 4, central 4, near/far 2.
  std::size_t active_feature_count() const;
  bool any_active() const { return active_feature_count() > 0; }

  /// Throws DataError when no family is active or a parameter is out of range.
  void validate() const;

  static RelationConfig all();
  static RelationConfig none();

  friend bool operator==(const RelationConfig&, const RelationConfig&) = default;
};

/// All 16 relation bits between an ordered (ref, obj) pair. Families
/// disabled by the config are left zero.
struct RelationBits {
  bool cooccur = false;
  bool overlap_yes = false;
  bool overlap_no = false;
  bool larger = false;
  bool smaller = false;
  bool equal = false;
  DirectionBits boundary;
  DirectionBits central;
  bool near = false;
  bool far = false;

  /// Writes the active families in layout order (cooc, overlap, scale,
  /// boundary, central, near/far). `out` must hold active_feature_count()
  /// values; each is OR'ed into the existing contents.
  void accumulate_into(std::span<double> out, const RelationConfig& config) const;

  friend bool operator==(const RelationBits&, const RelationBits&) = default;
};

inline constexpr std::size_t kRelationCount = 16;

RelationBits relation_bits(const BBox& ref, const BBox& obj, const RelationConfig& config);

}  // namespace ctxrel
