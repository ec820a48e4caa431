#include "ctxrel/geometry.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

#include "ctxrel/error.hpp"

namespace ctxrel {

double BBox::diagonal() const { return std::sqrt(w * w + h * h); }

bool BBox::valid() const {
  return std::isfinite(x) && std::isfinite(y) && std::isfinite(w) && std::isfinite(h) &&
         w > 0.0 && h > 0.0;
}

double iou(const BBox& a, const BBox& b) {
  const double ix = std::min(a.right(), b.right()) - std::max(a.x, b.x);
  const double iy = std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y);
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

DirectionBits boundary_relations(const BBox& ref, const BBox& obj) {
  DirectionBits bits;
  bits.above = ref.bottom() < obj.y;
  bits.below = ref.y > obj.bottom();
  bits.left = ref.right() < obj.x;
  bits.right = ref.x > obj.right();
  return bits;
}

namespace {

double midpoint(double origin, double extent, CentralForm form) {
  return form == CentralForm::kLiteral ? (origin + extent) * 0.5 : origin + extent * 0.5;
}

}  // namespace

DirectionBits central_relations(const BBox& ref, const BBox& obj, CentralForm form) {
  const double ref_my = midpoint(ref.y, ref.h, form);
  const double obj_my = midpoint(obj.y, obj.h, form);
  const double ref_mx = midpoint(ref.x, ref.w, form);
  const double obj_mx = midpoint(obj.x, obj.w, form);

  DirectionBits bits;
  bits.above = ref_my < obj_my && ref.y < obj.y;
  bits.below = ref_my > obj_my && ref.bottom() > obj.bottom();
  bits.left = ref_mx < obj_mx && ref.x < obj.x;
  bits.right = ref_mx > obj_mx && ref.right() > obj.right();
  return bits;
}

Distance distance_relation(const BBox& ref, const BBox& obj) {
  const double gap = ref.x - obj.right();
  return gap > ref.diagonal() ? Distance::kFar : Distance::kNear;
}

Overlap overlap_relation(const BBox& ref, const BBox& obj, OverlapMode mode, double threshold) {
  const double v = iou(ref, obj);
  const bool yes = mode == OverlapMode::kAnyPositive ? v > 0.0 : v >= threshold;
  return yes ? Overlap::kYes : Overlap::kNo;
}

Scale scale_relation(const BBox& ref, const BBox& obj, double eps) {
  const double dr = ref.diagonal();
  const double d_o = obj.diagonal();
  if (std::abs(dr - d_o) <= eps * std::max(dr, d_o)) return Scale::kEqual;
  return dr > d_o ? Scale::kLarger : Scale::kSmaller;
}

std::size_t RelationConfig::active_feature_count() const {
  std::size_t n = 0;
  if (cooccurrence) n += 1;
  if (overlapping) n += 2;
  if (scale) n += 3;
  if (boundary) n += 4;
  if (central) n += 4;
  if (near_far) n += 2;
  return n;
}

void RelationConfig::validate() const {
  if (!any_active()) throw DataError("relation config: at least one relation family must be active");
  if (!(eps_scale >= 0.0) || !std::isfinite(eps_scale))
    throw DataError("relation config: eps_scale must be a finite value >= 0");
  if (!(overlap_threshold >= 0.0 && overlap_threshold <= 1.0))
    throw DataError("relation config: overlap_threshold must lie in [0, 1]");
}

RelationConfig RelationConfig::all() { return RelationConfig{}; }

RelationConfig RelationConfig::none() {
  RelationConfig c;
  c.cooccurrence = c.overlapping = c.scale = c.boundary = c.central = c.near_far = false;
  return c;
}

namespace {

inline void set_bit(double& slot, bool bit) {
  if (bit) slot = 1.0;
}

}  // namespace

void RelationBits::accumulate_into(std::span<double> out, const RelationConfig& config) const {
  assert(out.size() >= config.active_feature_count());
  std::size_t i = 0;
  if (config.cooccurrence) {
    set_bit(out[i++], cooccur);
  }
  if (config.overlapping) {
    set_bit(out[i++], overlap_yes);
    set_bit(out[i++], overlap_no);
  }
  if (config.scale) {
    set_bit(out[i++], larger);
    set_bit(out[i++], smaller);
    set_bit(out[i++], equal);
  }
  if (config.boundary) {
    set_bit(out[i++], boundary.above);
    set_bit(out[i++], boundary.below);
    set_bit(out[i++], boundary.left);
    set_bit(out[i++], boundary.right);
  }
  if (config.central) {
    set_bit(out[i++], central.above);
    set_bit(out[i++], central.below);
    set_bit(out[i++], central.left);
    set_bit(out[i++], central.right);
  }
  if (config.near_far) {
    set_bit(out[i++], near);
    set_bit(out[i++], far);
  }
}

RelationBits relation_bits(const BBox& ref, const BBox& obj, const RelationConfig& config) {
  RelationBits bits;
  if (config.cooccurrence) bits.cooccur = true;
  if (config.overlapping) {
    const bool yes =
        overlap_relation(ref, obj, config.overlap_mode, config.overlap_threshold) == Overlap::kYes;
    bits.overlap_yes = yes;
    bits.overlap_no = !yes;
  }
  if (config.scale) {
    const Scale s = scale_relation(ref, obj, config.eps_scale);
    bits.larger = s == Scale::kLarger;
    bits.smaller = s == Scale::kSmaller;
    bits.equal = s == Scale::kEqual;
  }
  if (config.boundary) bits.boundary = boundary_relations(ref, obj);
  if (config.central) bits.central = central_relations(ref, obj, config.central_form);
  if (config.near_far) {
    const bool near = distance_relation(ref, obj) == Distance::kNear;
    bits.near = near;
    bits.far = !near;
  }
  return bits;
}

}  // namespace ctxrel
