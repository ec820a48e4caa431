#include "ctxrel/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <tuple>
#include <numeric>
#include <random>

#include "ctxrel/error.hpp"
#include "json_io.hpp"

namespace ctxrel {

namespace {

constexpr std::array<std::pair<RelationPredicate, std::string_view>, 15> kPredicateNames{{
    {RelationPredicate::kOverlapYes, "overlap_yes"},
    {RelationPredicate::kOverlapNo, "overlap_no"},
    {RelationPredicate::kLarger, "larger"},
    {RelationPredicate::kSmaller, "smaller"},
    {RelationPredicate::kEqual, "equal"},
    {RelationPredicate::kBoundaryAbove, "boundary_above"},
    {RelationPredicate::kBoundaryBelow, "boundary_below"},
    {RelationPredicate::kBoundaryLeft, "boundary_left"},
    {RelationPredicate::kBoundaryRight, "boundary_right"},
    {RelationPredicate::kCentralAbove, "central_above"},
    {RelationPredicate::kCentralBelow, "central_below"},
    {RelationPredicate::kCentralLeft, "central_left"},
    {RelationPredicate::kCentralRight, "central_right"},
    {RelationPredicate::kNear, "near"},
    {RelationPredicate::kFar, "far"},
}};

constexpr double kMinSide = 24.0;
constexpr double kMaxSide = 140.0;
constexpr int kPlacementTries = 400;

}  // namespace

std::string_view to_string(RelationPredicate p) {
  for (const auto& [pred, name] : kPredicateNames)
    if (pred == p) return name;
  return "unknown";
}

std::optional<RelationPredicate> predicate_from_string(std::string_view name) {
  for (const auto& [pred, n] : kPredicateNames)
    if (n == name) return pred;
  return std::nullopt;
}

bool holds(RelationPredicate p, const RelationBits& b) {
  switch (p) {
    case RelationPredicate::kOverlapYes: return b.overlap_yes;
    case RelationPredicate::kOverlapNo: return b.overlap_no;
    case RelationPredicate::kLarger: return b.larger;
    case RelationPredicate::kSmaller: return b.smaller;
    case RelationPredicate::kEqual: return b.equal;
    case RelationPredicate::kBoundaryAbove: return b.boundary.above;
    case RelationPredicate::kBoundaryBelow: return b.boundary.below;
    case RelationPredicate::kBoundaryLeft: return b.boundary.left;
    case RelationPredicate::kBoundaryRight: return b.boundary.right;
    case RelationPredicate::kCentralAbove: return b.central.above;
    case RelationPredicate::kCentralBelow: return b.central.below;
    case RelationPredicate::kCentralLeft: return b.central.left;
    case RelationPredicate::kCentralRight: return b.central.right;
    case RelationPredicate::kNear: return b.near;
    case RelationPredicate::kFar: return b.far;
  }
  return false;
}

void SynthSpec::validate() const {
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (classes < 1) throw DataError("synth spec: at least one class is required");
  if (min_objects < 1 || min_objects > max_objects)
    throw DataError("synth spec: objects-per-image range must satisfy 1 <= min <= max");
  if (!prob(partner_probability) || !prob(label_noise) || !prob(mislabel_fraction))
    throw DataError("synth spec: probabilities must lie in [0, 1]");
  if (!(image_width > 2 * kMaxSide && image_height > 2 * kMaxSide))
    throw DataError("synth spec: image must be larger than " + std::to_string(2 * kMaxSide) + " pixels per side");
  for (std::size_t i = 0; i < rules.size(); ++i) {
    const auto& r = rules[i];
    const auto n = static_cast<ClassId>(classes);
    if (r.subject < 0 || r.subject >= n || r.object < 0 || r.object >= n)
      throw DataError("synth spec: rule " + std::to_string(i) + " references a class outside 0.." +
                      std::to_string(classes - 1));
    if (r.relations.empty()) throw DataError("synth spec: rule " + std::to_string(i) + " has no relations");
  }
}

std::vector<ContextRule> SynthSpec::default_rules(std::size_t classes) {
  using P = RelationPredicate;
  // Each rule reads "a <subject> needs an <object> such that the subject is ...".
  const std::vector<std::tuple<std::vector<P>, RuleEffect>> templates = {
      {{P::kBoundaryAbove}, RuleEffect::kRequires},
      {{P::kLarger}, RuleEffect::kRequires},
      {{P::kBoundaryLeft}, RuleEffect::kRequires},
      {{P::kBoundaryBelow, P::kSmaller}, RuleEffect::kRequires},
      {{P::kFar}, RuleEffect::kRequires},
      {{P::kBoundaryRight, P::kLarger}, RuleEffect::kRequires},
  };
  std::vector<ContextRule> rules;
  if (classes < 2) return rules;
  for (std::size_t c = 0; c < classes; ++c) {
    const auto& [relations, effect] = templates[c % templates.size()];
    // Partner chosen two classes ahead so rule chains are not trivially symmetric.
    const auto partner = static_cast<ClassId>((c + 2) % classes == c ? (c + 1) % classes : (c + 2) % classes);
    rules.push_back({static_cast<ClassId>(c), relations, partner, effect});
  }
  return rules;
}

RelationConfig synth_relation_config() { return RelationConfig::all(); }

bool context_consistent(ClassId label, const BBox& box, std::span<const Detection> scene, std::size_t skip,
                        std::span<const ContextRule> rules) {
  const RelationConfig cfg = synth_relation_config();
  for (const auto& rule : rules) {
    if (rule.subject != label) continue;
    bool found = false;
    for (std::size_t k = 0; k < scene.size() && !found; ++k) {
      if (k == skip || scene[k].class_id != rule.object) continue;
      const RelationBits bits = relation_bits(box, scene[k].box, cfg);
      found = std::all_of(rule.relations.begin(), rule.relations.end(),
                          [&](RelationPredicate p) { return holds(p, bits); });
    }
    if (rule.effect == RuleEffect::kRequires && !found) return false;
    if (rule.effect == RuleEffect::kForbids && found) return false;
  }
  return true;
}

namespace {

class SceneBuilder {
 public:
  SceneBuilder(const SynthSpec& spec, std::mt19937_64& rng) : spec_(spec), rng_(rng) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  bool chance(double p) { return p > 0.0 && uniform(0.0, 1.0) < p; }
  std::size_t pick(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }

  BBox random_box() {
    const double w = std::round(uniform(kMinSide, kMaxSide));
    const double h = std::round(uniform(kMinSide, kMaxSide));
    const double x = std::round(uniform(0.0, spec_.image_width - w));
    const double y = std::round(uniform(0.0, spec_.image_height - h));
    return {x, y, w, h};
  }

  // Keeps any two boxes below the matching IoU so ground truth assignment
  // is unambiguous.
  bool fits(const BBox& b, const std::vector<Detection>& placed) const {
    return std::none_of(placed.begin(), placed.end(), [&](const Detection& d) { return iou(b, d.box) >= 0.5; });
  }

  std::optional<BBox> place(const std::vector<Detection>& placed) {
    for (int t = 0; t < kPlacementTries; ++t) {
      BBox b = random_box();
      if (fits(b, placed)) return b;
    }
    return std::nullopt;
  }

  std::optional<BBox> place_partner(const BBox& ref, const ContextRule& rule, const std::vector<Detection>& placed) {
    const RelationConfig cfg = synth_relation_config();
    for (int t = 0; t < kPlacementTries; ++t) {
      BBox b = random_box();
      if (!fits(b, placed)) continue;
      const RelationBits bits = relation_bits(ref, b, cfg);
      if (std::all_of(rule.relations.begin(), rule.relations.end(), [&](RelationPredicate p) { return holds(p, bits); }))
        return b;
    }
    return std::nullopt;
  }

  std::vector<Detection> layout(ImageId image) {
    const std::size_t target =
        spec_.min_objects + pick(spec_.max_objects - spec_.min_objects + 1);
    std::vector<Detection> objs;
    while (objs.size() < target) {
      const auto cls = static_cast<ClassId>(pick(spec_.classes));
      auto box = place(objs);
      if (!box) break;
      objs.push_back(make(image, cls, *box));
      if (objs.size() >= target || !chance(spec_.partner_probability)) continue;
      auto rule = std::find_if(spec_.rules.begin(), spec_.rules.end(), [&](const ContextRule& r) {
        return r.subject == cls && r.effect == RuleEffect::kRequires;
      });
      if (rule == spec_.rules.end()) continue;
      if (auto pb = place_partner(*box, *rule, objs)) objs.push_back(make(image, rule->object, *pb));
    }
    return objs;
  }

  static Detection make(ImageId image, ClassId cls, const BBox& box) {
    Detection d;
    d.image_id = image;
    d.class_id = cls;
    d.box = box;
    return d;
  }

  // Remaining top-5 entries after the leading ones, with scores decreasing
  // below `ceiling`.
  void fill_top5(Detection& d, std::vector<ClassId> preferred, double ceiling) {
    std::vector<ClassId> used;
    for (const auto& t : d.top5) used.push_back(t.class_id);
    std::vector<ClassId> rest;
    for (std::size_t c = 0; c < spec_.classes; ++c) rest.push_back(static_cast<ClassId>(c));
    std::shuffle(rest.begin(), rest.end(), rng_);
    std::stable_partition(rest.begin(), rest.end(), [&](ClassId c) {
      return std::find(preferred.begin(), preferred.end(), c) != preferred.end();
    });
    double s = ceiling;
    for (ClassId c : rest) {
      if (d.top5.size() >= kMaxTopScores) break;
      if (std::find(used.begin(), used.end(), c) != used.end()) continue;
      s *= uniform(0.3, 0.8);
      d.top5.push_back({c, s});
      used.push_back(c);
    }
  }

 private:
  const SynthSpec& spec_;
  std::mt19937_64& rng_;
};

}  // namespace

SynthResult synth_generate(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  SceneBuilder builder(spec, rng);

  SynthResult result;
  DatasetBundle& bundle = result.bundle;
  std::vector<std::string> names;
  std::vector<std::int64_t> ids;
  for (std::size_t c = 0; c < spec.classes; ++c) {
    names.push_back("class" + std::to_string(c));
    ids.push_back(static_cast<std::int64_t>(c) + 1);
  }
  bundle.vocab = ClassVocabulary(std::move(names), std::move(ids));

  for (std::size_t img = 0; img < spec.images; ++img) {
    const ImageId image = spec.first_image_id + static_cast<ImageId>(img);
    bundle.images[image] = ImageInfo{image, spec.image_width, spec.image_height, ""};
    auto& gts = bundle.ground_truth[image];

    std::vector<Detection> dets = builder.layout(image);
    const std::size_t n = dets.size();
    std::vector<SynthTruth> truth(n);
    for (std::size_t i = 0; i < n; ++i)
      truth[i].rule_consistent = context_consistent(dets[i].class_id, dets[i].box, dets, i, spec.rules);

    // Planted mislabels: only on detections that would otherwise be correct,
    // and only where the new label changes no other detection's verdict.
    std::vector<bool> planted(n, false);
    std::vector<ClassId> original_class(n);
    for (std::size_t i = 0; i < n; ++i) original_class[i] = dets[i].class_id;
    if (spec.mislabel_fraction > 0.0 && spec.classes > 1) {
      std::size_t wanted = 0;
      for (std::size_t i = 0; i < n; ++i)
        if (builder.chance(spec.mislabel_fraction)) ++wanted;
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t i : order) {
        if (wanted == 0) break;
        if (!truth[i].rule_consistent) continue;
        std::vector<ClassId> options;
        for (std::size_t c = 0; c < spec.classes; ++c) {
          const auto w = static_cast<ClassId>(c);
          if (w == dets[i].class_id || context_consistent(w, dets[i].box, dets, i, spec.rules)) continue;
          auto trial = dets;
          trial[i].class_id = w;
          bool stable = true;
          for (std::size_t j = 0; j < n && stable; ++j)
            if (j != i)
              stable = context_consistent(trial[j].class_id, trial[j].box, trial, j, spec.rules) ==
                       truth[j].rule_consistent;
          if (stable) options.push_back(w);
        }
        if (options.empty()) continue;
        dets[i].class_id = options[builder.pick(options.size())];
        truth[i].rule_consistent = false;
        planted[i] = true;
        --wanted;
      }
    }

    for (std::size_t i = 0; i < n; ++i) {
      Detection& d = dets[i];
      SynthTruth& t = truth[i];
      bool real = planted[i] || t.rule_consistent;
      if (!planted[i] && builder.chance(spec.label_noise)) real = !real;
      t.planted_mislabel = planted[i];
      if (real) {
        t.true_class = planted[i] ? original_class[i] : d.class_id;
        gts.push_back({*t.true_class, d.box});
      }
      t.correct = real && !planted[i];

      // Confidences overlap between the two groups so raw scores carry
      // only a weak signal.
      if (planted[i]) {
        d.confidence = builder.uniform(0.6, 0.9);
        d.top5.push_back({d.class_id, d.confidence});
        d.top5.push_back({original_class[i], builder.uniform(0.5, d.confidence)});
        std::vector<ClassId> implausible;
        for (std::size_t c = 0; c < spec.classes; ++c)
          if (!context_consistent(static_cast<ClassId>(c), d.box, dets, i, spec.rules))
            implausible.push_back(static_cast<ClassId>(c));
        builder.fill_top5(d, implausible, d.top5.back().score);
      } else {
        d.confidence = t.correct ? builder.uniform(0.55, 1.0) : builder.uniform(0.5, 0.9);
        d.top5.push_back({d.class_id, d.confidence});
        builder.fill_top5(d, {}, d.confidence);
      }

      if (t.correct) ++result.correct;
      else ++result.incorrect;
      if (planted[i]) ++result.planted_mislabels;
    }

    bundle.detections[image] = std::move(dets);
    result.truth[image] = std::move(truth);
  }
  bundle.detector_threshold = 0.5;
  result.single_label = result.correct == 0 || result.incorrect == 0;
  return result;
}

std::string synth_spec_to_json(const SynthSpec& spec) {
  using detail::json;
  json rules = json::array();
  for (const auto& r : spec.rules) {
    json rel = json::array();
    for (auto p : r.relations) rel.push_back(std::string(to_string(p)));
    rules.push_back({{"subject", r.subject},
                     {"relations", std::move(rel)},
                     {"object", r.object},
                     {"effect", r.effect == RuleEffect::kRequires ? "requires" : "forbids"}});
  }
  json j{{"format_version", 1},
         {"classes", spec.classes},
         {"images", spec.images},
         {"min_objects", spec.min_objects},
         {"max_objects", spec.max_objects},
         {"rules", std::move(rules)},
         {"partner_probability", spec.partner_probability},
         {"label_noise", spec.label_noise},
         {"mislabel_fraction", spec.mislabel_fraction},
         {"image_width", spec.image_width},
         {"image_height", spec.image_height},
         {"first_image_id", spec.first_image_id},
         {"seed", spec.seed}};
  return j.dump(2) + "\n";
}

SynthSpec synth_spec_from_json(std::string_view text) {
  using detail::json;
  const json j = detail::parse_json(text, "synth spec");
  SynthSpec s;
  try {
    s.classes = j.value("classes", s.classes);
    s.images = j.value("images", s.images);
    s.min_objects = j.value("min_objects", s.min_objects);
    s.max_objects = j.value("max_objects", s.max_objects);
    s.partner_probability = j.value("partner_probability", s.partner_probability);
    s.label_noise = j.value("label_noise", s.label_noise);
    s.mislabel_fraction = j.value("mislabel_fraction", s.mislabel_fraction);
    s.image_width = j.value("image_width", s.image_width);
    s.image_height = j.value("image_height", s.image_height);
    s.first_image_id = j.value("first_image_id", s.first_image_id);
    s.seed = j.value("seed", s.seed);
    if (auto it = j.find("rules"); it != j.end()) {
      s.rules.clear();
      for (std::size_t i = 0; i < it->size(); ++i) {
        const json& r = (*it)[i];
        ContextRule rule;
        rule.subject = r.at("subject").get<ClassId>();
        rule.object = r.at("object").get<ClassId>();
        const auto effect = r.value("effect", std::string("requires"));
        if (effect == "requires") rule.effect = RuleEffect::kRequires;
        else if (effect == "forbids") rule.effect = RuleEffect::kForbids;
        else throw ParseError("synth spec: rules[" + std::to_string(i) + "]: unknown effect '" + effect + "'");
        for (const auto& p : r.at("relations")) {
          const auto name = p.get<std::string>();
          auto pred = predicate_from_string(name);
          if (!pred) throw ParseError("synth spec: rules[" + std::to_string(i) + "]: unknown relation '" + name + "'");
          rule.relations.push_back(*pred);
        }
        s.rules.push_back(std::move(rule));
      }
    } else {
      s.rules = SynthSpec::default_rules(s.classes);
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("synth spec: ") + e.what());
  }
  return s;
}

}  // namespace ctxrel
