#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ctxrel/detection.hpp"
#include "ctxrel/geometry.hpp"

namespace ctxrel {

/// Image-level co-occurrence counts. count(i, j) is the number of images
/// containing both classes; the normalized value divides by count(i, i).
class CoocMatrix {
 public:
  explicit CoocMatrix(std::size_t classes = 0) : n_(classes), counts_(classes * classes, 0) {}

  std::size_t size() const { return n_; }
  std::uint64_t count(ClassId i, ClassId j) const { return counts_[index(i, j)]; }
  std::uint64_t class_count(ClassId i) const { return count(i, i); }

  /// count(i, j) / count(i, i), or 0 for a class that never appears.
  double value(ClassId i, ClassId j) const;

  void add_image(std::span<const ClassId> classes_present);

 private:
  std::size_t index(ClassId i, ClassId j) const {
    return static_cast<std::size_t>(i) * n_ + static_cast<std::size_t>(j);
  }

  std::size_t n_;
  std::vector<std::uint64_t> counts_;
};

/// Throws ParseError on an empty image set or a class outside the vocabulary.
CoocMatrix build_cooccurrence(std::span<const std::vector<ClassId>> image_classes,
                              const ClassVocabulary& vocab);

/// Header row and first column carry class names; values use 6 decimals.
void write_cooccurrence_csv(std::ostream& out, const CoocMatrix& matrix, const ClassVocabulary& vocab);

struct CoocTable {
  std::vector<std::string> names;
  std::vector<std::vector<double>> values;
};
CoocTable read_cooccurrence_csv(std::istream& in);

/// vocab_size * config.active_feature_count() + 1.
std::size_t feature_length(const RelationConfig& config, std::size_t vocab_size);

/// Per-class relation blocks followed by the reference confidence.
using FeatureVector = std::vector<double>;

/// Context encoding of `ref` against the other detections of its image.
/// Each class block ORs the relation bits over every other detection of that
/// class; a class with no detection keeps an all-zero block.
FeatureVector build_feature_vector(const Detection& ref,
                                   std::span<const Detection> others,
                                   const RelationConfig& config,
                                   const ClassVocabulary& vocab);

/// Same encoding for a hypothetical reference at `box` with `confidence`.
/// `skip` (when in range) is an index into `scene` that is left out.
FeatureVector build_feature_vector(const BBox& box, double confidence,
                                   std::span<const Detection> scene, std::size_t skip,
                                   const RelationConfig& config,
                                   const ClassVocabulary& vocab);

/// The classifier sees the context encoding followed by a one-hot block for
/// the reference detection's own class.
std::vector<double> network_input(std::span<const double> features, ClassId ref_class,
                                  std::size_t vocab_size);
std::size_t network_input_length(const RelationConfig& config, std::size_t vocab_size);

struct TrainingSet {
  std::vector<FeatureVector> features;
  std::vector<ClassId> ref_classes;
  std::vector<int> labels;  // 1 = detection matches ground truth
  std::vector<ImageId> image_ids;

  std::size_t size() const { return labels.size(); }
};

/// One row per detection in images holding at least two detections. Labels
/// come from greedy IoU >= 0.5 same-class matching. Throws DataError listing
/// any image that has detections but no ground-truth entry.
TrainingSet build_training_set(const ImageDetections& detections,
                               const ImageGroundTruth& ground_truth,
                               const RelationConfig& config,
                               const ClassVocabulary& vocab);

/// Dense design matrix ready for training: network inputs plus binary labels.
struct FeatureTable {
  std::size_t width = 0;
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;

  friend bool operator==(const FeatureTable&, const FeatureTable&) = default;
};

FeatureTable to_feature_table(const TrainingSet& set, std::size_t vocab_size);

/// Header `f0,...,f{N-1},label`; values are written with enough digits to
/// read back bit-identically.
void write_feature_csv(std::ostream& out, const FeatureTable& table);
FeatureTable read_feature_csv(std::istream& in);

}  // namespace ctxrel
