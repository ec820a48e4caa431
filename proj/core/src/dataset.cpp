#include "ctxrel/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "ctxrel/error.hpp"
#include "json_io.hpp"

namespace ctxrel {

using detail::json;

std::vector<std::vector<ClassId>> DatasetBundle::image_class_sets() const {
  std::vector<std::vector<ClassId>> sets;
  sets.reserve(ground_truth.size());
  for (const auto& [image, gts] : ground_truth) {
    std::vector<ClassId> classes;
    for (const auto& g : gts) classes.push_back(g.class_id);
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    sets.push_back(std::move(classes));
  }
  return sets;
}

std::size_t DatasetBundle::detection_count() const {
  std::size_t n = 0;
  for (const auto& [image, dets] : detections) n += dets.size();
  return n;
}

namespace {

std::string record(const char* array, std::size_t index) {
  return std::string(array) + "[" + std::to_string(index) + "]";
}

BBox parse_bbox(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 4) throw ParseError(where + ": bbox must be an array of 4 numbers");
  for (const auto& v : j)
    if (!v.is_number()) throw ParseError(where + ": bbox must be an array of 4 numbers");
  BBox b{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
  if (!(b.w > 0.0)) throw ParseError(where + ": bbox width must be positive");
  if (!(b.h > 0.0)) throw ParseError(where + ": bbox height must be positive");
  if (!b.valid()) throw ParseError(where + ": bbox coordinates must be finite");
  return b;
}

const json& require(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) throw ParseError(where + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(where + ": missing key '" + key + "'");
  return *it;
}

template <typename T>
T require_as(const json& obj, const char* key, const std::string& where) {
  const json& v = require(obj, key, where);
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ParseError(where + ": key '" + key + "' has the wrong type");
  }
}

}  // namespace

DatasetBundle parse_annotations(std::string_view json_text) {
  const json root = detail::parse_json(json_text, "annotations");
  const std::string top = "annotations file";
  const json& images = require(root, "images", top);
  const json& annotations = require(root, "annotations", top);
  const json& categories = require(root, "categories", top);
  if (!images.is_array() || !annotations.is_array() || !categories.is_array())
    throw ParseError(top + ": images, annotations and categories must be arrays");

  std::vector<std::pair<std::int64_t, std::string>> cats;
  for (std::size_t i = 0; i < categories.size(); ++i) {
    const std::string where = record("categories", i);
    cats.emplace_back(require_as<std::int64_t>(categories[i], "id", where),
                      require_as<std::string>(categories[i], "name", where));
  }
  std::sort(cats.begin(), cats.end());
  std::vector<std::string> names;
  std::vector<std::int64_t> ids;
  for (auto& [id, name] : cats) {
    ids.push_back(id);
    names.push_back(std::move(name));
  }

  DatasetBundle bundle;
  try {
    bundle.vocab = ClassVocabulary(std::move(names), std::move(ids));
  } catch (const DataError& e) {
    throw ParseError(std::string("categories: ") + e.what());
  }

  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::string where = record("images", i);
    ImageInfo info;
    info.id = require_as<std::int64_t>(images[i], "id", where);
    info.width = images[i].value("width", 0.0);
    info.height = images[i].value("height", 0.0);
    info.file_name = images[i].value("file_name", std::string());
    if (!bundle.images.emplace(info.id, info).second)
      throw ParseError(where + ": duplicate image id " + std::to_string(info.id));
    bundle.ground_truth[info.id];
  }

  for (std::size_t i = 0; i < annotations.size(); ++i) {
    const std::string where = record("annotations", i);
    const auto image_id = require_as<std::int64_t>(annotations[i], "image_id", where);
    const auto category = require_as<std::int64_t>(annotations[i], "category_id", where);
    const BBox box = parse_bbox(require(annotations[i], "bbox", where), where);
    if (!bundle.images.contains(image_id))
      throw ParseError(where + ": unknown image_id " + std::to_string(image_id));
    const auto cls = bundle.vocab.find_category(category);
    if (!cls) throw ParseError(where + ": unknown category_id " + std::to_string(category));
    bundle.ground_truth[image_id].push_back({*cls, box});
  }
  return bundle;
}

DatasetBundle load_annotations(const std::filesystem::path& path) {
  return parse_annotations(read_text_file(path));
}

void parse_detections(std::string_view json_text, DatasetBundle& bundle, double threshold) {
  const json root = detail::parse_json(json_text, "detections");
  if (!root.is_array()) throw ParseError("detections file: expected a JSON array of results");

  ImageDetections out;
  for (std::size_t i = 0; i < root.size(); ++i) {
    const std::string where = record("detections", i);
    const json& r = root[i];
    Detection d;
    d.image_id = require_as<std::int64_t>(r, "image_id", where);
    const auto category = require_as<std::int64_t>(r, "category_id", where);
    d.box = parse_bbox(require(r, "bbox", where), where);
    d.confidence = require_as<double>(r, "score", where);
    if (!(d.confidence >= 0.0 && d.confidence <= 1.0)) throw ParseError(where + ": score must lie in [0, 1]");

    if (!bundle.images.contains(d.image_id))
      throw DataError(where + ": unknown image_id " + std::to_string(d.image_id));
    const auto cls = bundle.vocab.find_category(category);
    if (!cls) throw DataError(where + ": unknown category_id " + std::to_string(category));
    d.class_id = *cls;

    if (auto it = r.find("top_scores"); it != r.end() && !it->is_null()) {
      if (!it->is_array()) throw ParseError(where + ": top_scores must be an array");
      if (it->size() > kMaxTopScores)
        throw ParseError(where + ": top_scores holds " + std::to_string(it->size()) + " entries, at most 5 allowed");
      for (std::size_t k = 0; k < it->size(); ++k) {
        const std::string sub = where + ".top_scores[" + std::to_string(k) + "]";
        const auto cat = require_as<std::int64_t>((*it)[k], "category_id", sub);
        const auto score = require_as<double>((*it)[k], "score", sub);
        if (!(score >= 0.0 && score <= 1.0)) throw ParseError(sub + ": score must lie in [0, 1]");
        const auto c = bundle.vocab.find_category(cat);
        if (!c) throw DataError(sub + ": unknown category_id " + std::to_string(cat));
        d.top5.push_back({*c, score});
      }
      std::stable_sort(d.top5.begin(), d.top5.end(),
                       [](const TopScore& a, const TopScore& b) { return a.score > b.score; });
    }

    if (d.confidence < threshold) continue;
    out[d.image_id].push_back(std::move(d));
  }
  bundle.detections = std::move(out);
  bundle.detector_threshold = threshold;
}

void load_detections(const std::filesystem::path& path, DatasetBundle& bundle, double threshold) {
  parse_detections(read_text_file(path), bundle, threshold);
}

std::string annotations_to_json(const DatasetBundle& bundle) {
  json images = json::array();
  for (const auto& [id, info] : bundle.images) {
    json img{{"id", id}};
    if (info.width > 0.0) img["width"] = info.width;
    if (info.height > 0.0) img["height"] = info.height;
    if (!info.file_name.empty()) img["file_name"] = info.file_name;
    images.push_back(std::move(img));
  }
  json annotations = json::array();
  std::int64_t next_id = 1;
  for (const auto& [image, gts] : bundle.ground_truth) {
    for (const auto& g : gts) {
      annotations.push_back({{"id", next_id++},
                             {"image_id", image},
                             {"category_id", bundle.vocab.category_id(g.class_id)},
                             {"bbox", {g.box.x, g.box.y, g.box.w, g.box.h}},
                             {"area", g.box.area()},
                             {"iscrowd", 0}});
    }
  }
  json categories = json::array();
  for (std::size_t c = 0; c < bundle.vocab.size(); ++c)
    categories.push_back({{"id", bundle.vocab.category_ids()[c]}, {"name", bundle.vocab.names()[c]}});

  json root{{"images", std::move(images)}, {"annotations", std::move(annotations)},
            {"categories", std::move(categories)}};
  return root.dump(1) + "\n";
}

std::string detections_to_json(const ImageDetections& detections, const ClassVocabulary& vocab) {
  json root = json::array();
  for (const auto& [image, dets] : detections) {
    for (const auto& d : dets) {
      json r{{"image_id", d.image_id},
             {"category_id", vocab.category_id(d.class_id)},
             {"bbox", {d.box.x, d.box.y, d.box.w, d.box.h}},
             {"score", d.confidence}};
      if (!d.top5.empty()) {
        json top = json::array();
        for (const auto& t : d.top5) top.push_back({{"category_id", vocab.category_id(t.class_id)}, {"score", t.score}});
        r["top_scores"] = std::move(top);
      }
      root.push_back(std::move(r));
    }
  }
  return root.dump(1) + "\n";
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

}  // namespace ctxrel
