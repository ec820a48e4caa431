#include "ctxrel/context_features.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "ctxrel/error.hpp"
#include "ctxrel/evaluation.hpp"

namespace ctxrel {

double CoocMatrix::value(ClassId i, ClassId j) const {
  const auto denom = class_count(i);
  if (denom == 0) return 0.0;
  return static_cast<double>(count(i, j)) / static_cast<double>(denom);
}

void CoocMatrix::add_image(std::span<const ClassId> classes_present) {
  std::vector<ClassId> unique(classes_present.begin(), classes_present.end());
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  for (ClassId a : unique)
    for (ClassId b : unique) ++counts_[index(a, b)];
}

CoocMatrix build_cooccurrence(std::span<const std::vector<ClassId>> image_classes,
                              const ClassVocabulary& vocab) {
  if (image_classes.empty()) throw ParseError("co-occurrence: no images given");
  CoocMatrix m(vocab.size());
  for (std::size_t img = 0; img < image_classes.size(); ++img) {
    for (ClassId c : image_classes[img])
      if (!vocab.contains(c))
        throw ParseError("co-occurrence: image " + std::to_string(img) + " has unknown class id " +
                         std::to_string(c));
    m.add_image(image_classes[img]);
  }
  return m;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) {
    if (ch == '"') q += '"';
    q += ch;
  }
  return q + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

double parse_double(const std::string& field, const std::string& where) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) throw ParseError(where + ": not a number: '" + field + "'");
  return v;
}

std::string format_shortest(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

void write_cooccurrence_csv(std::ostream& out, const CoocMatrix& matrix, const ClassVocabulary& vocab) {
  out << "class";
  for (const auto& name : vocab.names()) out << ',' << csv_field(name);
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < matrix.size(); ++i) {
    out << csv_field(vocab.names()[i]);
    for (std::size_t j = 0; j < matrix.size(); ++j) {
      std::snprintf(buf, sizeof buf, "%.6f", matrix.value(static_cast<ClassId>(i), static_cast<ClassId>(j)));
      out << ',' << buf;
    }
    out << '\n';
  }
}

CoocTable read_cooccurrence_csv(std::istream& in) {
  CoocTable t;
  std::string line;
  if (!std::getline(in, line)) throw ParseError("co-occurrence csv: empty input");
  auto header = split_csv_line(line);
  t.names.assign(header.begin() + 1, header.end());
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    const std::string where = "co-occurrence csv row " + std::to_string(row + 1);
    if (fields.size() != t.names.size() + 1) throw ParseError(where + ": wrong column count");
    if (row >= t.names.size() || fields[0] != t.names[row]) throw ParseError(where + ": row label mismatch");
    std::vector<double> values;
    for (std::size_t k = 1; k < fields.size(); ++k) values.push_back(parse_double(fields[k], where));
    t.values.push_back(std::move(values));
    ++row;
  }
  if (row != t.names.size()) throw ParseError("co-occurrence csv: expected a square matrix");
  return t;
}

std::size_t feature_length(const RelationConfig& config, std::size_t vocab_size) {
  return vocab_size * config.active_feature_count() + 1;
}

FeatureVector build_feature_vector(const BBox& box, double confidence,
                                   std::span<const Detection> scene, std::size_t skip,
                                   const RelationConfig& config,
                                   const ClassVocabulary& vocab) {
  const std::size_t width = config.active_feature_count();
  FeatureVector fv(feature_length(config, vocab.size()), 0.0);
  for (std::size_t k = 0; k < scene.size(); ++k) {
    if (k == skip) continue;
    const Detection& obj = scene[k];
    if (!vocab.contains(obj.class_id))
      throw DataError("feature vector: class id " + std::to_string(obj.class_id) + " outside vocabulary");
    const auto block = static_cast<std::size_t>(obj.class_id) * width;
    relation_bits(box, obj.box, config).accumulate_into(std::span(fv).subspan(block, width), config);
  }
  fv.back() = confidence;
  return fv;
}

FeatureVector build_feature_vector(const Detection& ref,
                                   std::span<const Detection> others,
                                   const RelationConfig& config,
                                   const ClassVocabulary& vocab) {
  if (!vocab.contains(ref.class_id))
    throw DataError("feature vector: reference class id " + std::to_string(ref.class_id) +
                    " outside vocabulary");
  for (const auto& o : others)
    if (o.image_id != ref.image_id)
      throw DataError("feature vector: context detection from image " + std::to_string(o.image_id) +
                      " does not share reference image " + std::to_string(ref.image_id));
  return build_feature_vector(ref.box, ref.confidence, others, others.size(), config, vocab);
}

std::vector<double> network_input(std::span<const double> features, ClassId ref_class,
                                  std::size_t vocab_size) {
  if (ref_class < 0 || static_cast<std::size_t>(ref_class) >= vocab_size)
    throw DataError("network input: class id " + std::to_string(ref_class) + " outside vocabulary");
  std::vector<double> x(features.size() + vocab_size, 0.0);
  std::copy(features.begin(), features.end(), x.begin());
  x[features.size() + static_cast<std::size_t>(ref_class)] = 1.0;
  return x;
}

std::size_t network_input_length(const RelationConfig& config, std::size_t vocab_size) {
  return feature_length(config, vocab_size) + vocab_size;
}

TrainingSet build_training_set(const ImageDetections& detections,
                               const ImageGroundTruth& ground_truth,
                               const RelationConfig& config,
                               const ClassVocabulary& vocab) {
  config.validate();
  std::vector<ImageId> missing;
  for (const auto& [image, dets] : detections)
    if (!dets.empty() && !ground_truth.contains(image)) missing.push_back(image);
  if (!missing.empty()) {
    std::ostringstream msg;
    msg << "training set: images with detections but no ground truth:";
    for (ImageId id : missing) msg << ' ' << id;
    throw DataError(msg.str());
  }

  TrainingSet set;
  for (const auto& [image, dets] : detections) {
    if (dets.size() < 2) continue;
    const MatchResult m = match_detections(dets, ground_truth.at(image));
    for (std::size_t i = 0; i < dets.size(); ++i) {
      if (dets[i].image_id != image)
        throw DataError("training set: detection filed under image " + std::to_string(image) +
                        " carries image id " + std::to_string(dets[i].image_id));
      if (!vocab.contains(dets[i].class_id))
        throw DataError("training set: class id " + std::to_string(dets[i].class_id) + " outside vocabulary");
      set.features.push_back(build_feature_vector(dets[i].box, dets[i].confidence, dets, i, config, vocab));
      set.ref_classes.push_back(dets[i].class_id);
      set.labels.push_back(m.detection_correct[i] ? 1 : 0);
      set.image_ids.push_back(image);
    }
  }
  return set;
}

FeatureTable to_feature_table(const TrainingSet& set, std::size_t vocab_size) {
  FeatureTable t;
  t.rows.reserve(set.size());
  for (std::size_t i = 0; i < set.size(); ++i)
    t.rows.push_back(network_input(set.features[i], set.ref_classes[i], vocab_size));
  t.labels = set.labels;
  t.width = t.rows.empty() ? 0 : t.rows.front().size();
  return t;
}

void write_feature_csv(std::ostream& out, const FeatureTable& table) {
  for (std::size_t k = 0; k < table.width; ++k) out << 'f' << k << ',';
  out << "label\n";
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    for (double v : table.rows[i]) out << format_shortest(v) << ',';
    out << table.labels[i] << '\n';
  }
}

FeatureTable read_feature_csv(std::istream& in) {
  FeatureTable t;
  std::string line;
  if (!std::getline(in, line)) throw ParseError("feature csv: empty input");
  const auto header = split_csv_line(line);
  if (header.empty() || header.back() != "label") throw ParseError("feature csv: last column must be 'label'");
  for (std::size_t k = 0; k + 1 < header.size(); ++k)
    if (header[k] != "f" + std::to_string(k))
      throw ParseError("feature csv: header column " + std::to_string(k) + " should be f" + std::to_string(k));
  t.width = header.size() - 1;

  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++row;
    const std::string where = "feature csv row " + std::to_string(row);
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) throw ParseError(where + ": wrong column count");
    std::vector<double> values(t.width);
    for (std::size_t k = 0; k < t.width; ++k) values[k] = parse_double(fields[k], where);
    const std::string& lab = fields.back();
    if (lab != "0" && lab != "1") throw ParseError(where + ": label must be 0 or 1");
    t.rows.push_back(std::move(values));
    t.labels.push_back(lab == "1" ? 1 : 0);
  }
  return t;
}

}  // namespace ctxrel
