#include "ctxrel_tools/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include "ctxrel/config.hpp"
#include "ctxrel/context_features.hpp"
#include "ctxrel/dataset.hpp"
#include "ctxrel/error.hpp"
#include "ctxrel/evaluation.hpp"
#include "ctxrel/mlp_scg.hpp"
#include "ctxrel/overlay.hpp"
#include "ctxrel/pipelines.hpp"
#include "ctxrel/synth.hpp"

namespace ctxrel::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flags shared by several subcommands. Anything left unset falls back to
/// the config file, then to the built-in defaults.
struct Flags {
  std::string config;
  std::string annotations;
  std::string detections;
  std::string model;
  std::string out;
  std::optional<double> threshold;
  std::optional<double> relabel_threshold;
  std::optional<std::string> relations;
  std::optional<std::string> central_form;
  std::optional<std::string> overlap_mode;
  std::optional<std::size_t> hidden;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
  std::optional<double> validation_fraction;
  std::string mode = "detector";
  std::string audit;
  std::string report;
  std::optional<ImageId> image;

  // synth
  std::string spec;
  std::optional<std::size_t> classes;
  std::optional<std::size_t> images;
  std::optional<double> mislabel_fraction;
  std::optional<double> label_noise;
  std::optional<ImageId> first_image_id;
};

RelationConfig parse_relations(const std::string& list, RelationConfig base) {
  if (list == "all") {
    RelationConfig all = RelationConfig::all();
    all.eps_scale = base.eps_scale;
    all.overlap_mode = base.overlap_mode;
    all.overlap_threshold = base.overlap_threshold;
    all.central_form = base.central_form;
    return all;
  }
  base.cooccurrence = base.overlapping = base.scale = base.boundary = base.central = base.near_far = false;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "cooc") base.cooccurrence = true;
    else if (item == "overlap") base.overlapping = true;
    else if (item == "scale") base.scale = true;
    else if (item == "boundary") base.boundary = true;
    else if (item == "central") base.central = true;
    else if (item == "near_far") base.near_far = true;
    else throw UsageError("unknown relation family '" + item + "'");
  }
  return base;
}

ToolConfig resolve_config(const Flags& f) {
  ToolConfig c;
  if (!f.config.empty()) c = tool_config_from_json(read_text_file(f.config));
  if (!f.annotations.empty()) c.paths.annotations = f.annotations;
  if (!f.detections.empty()) c.paths.detections = f.detections;
  if (!f.model.empty()) c.paths.model = f.model;
  if (!f.out.empty()) c.paths.output = f.out;
  if (f.threshold) c.detector_thresholds = {*f.threshold};
  if (f.relabel_threshold) c.relabel_threshold = *f.relabel_threshold;
  if (f.relations) c.relations = parse_relations(*f.relations, c.relations);
  if (f.central_form) {
    if (*f.central_form == "literal") c.relations.central_form = CentralForm::kLiteral;
    else if (*f.central_form == "center") c.relations.central_form = CentralForm::kCenter;
    else throw UsageError("--central-form must be 'literal' or 'center'");
  }
  if (f.overlap_mode) {
    if (*f.overlap_mode == "iou") c.relations.overlap_mode = OverlapMode::kIouThreshold;
    else if (*f.overlap_mode == "any") c.relations.overlap_mode = OverlapMode::kAnyPositive;
    else throw UsageError("--overlap-mode must be 'iou' or 'any'");
  }
  if (f.hidden) c.train.hidden = *f.hidden;
  if (f.epochs) c.train.max_epochs = *f.epochs;
  if (f.seed) c.train.seed = *f.seed;
  if (f.validation_fraction) c.train.validation_fraction = *f.validation_fraction;
  try {
    c.validate();
  } catch (const DataError& e) {
    throw UsageError(e.what());
  }
  return c;
}

void log_config(std::ostream& err, const std::string& command, const ToolConfig& c) {
  err << "[ctxrel] " << command << " config: " << json::parse(tool_config_to_json(c)).dump() << '\n'
      << "[ctxrel] seed: " << c.train.seed << '\n';
}

const std::string& need(const std::string& path, const char* flag) {
  if (path.empty()) throw UsageError(std::string(flag) + " is required");
  return path;
}

double detector_threshold(const ToolConfig& c) { return c.detector_thresholds.front(); }

DatasetBundle load_bundle(const ToolConfig& c, bool with_detections) {
  DatasetBundle b = load_annotations(need(c.paths.annotations, "--annotations"));
  if (with_detections) {
    load_detections(need(c.paths.detections, "--detections"), b, detector_threshold(c));
    b.detector_threshold = detector_threshold(c);
  }
  return b;
}

ContextModel load_model(const ToolConfig& c, const DatasetBundle& bundle) {
  ContextModel m = model_from_json(read_text_file(need(c.paths.model, "--model")));
  if (!(m.vocab == bundle.vocab))
    throw DataError("model vocabulary does not match the annotation categories");
  return m;
}

void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") out << text;
  else write_text_file(path, text);
}

SceneDetections scene_of(const DatasetBundle& b, ImageId image, const std::vector<Detection>& dets) {
  SceneDetections s;
  s.image_id = image;
  s.detector_threshold = b.detector_threshold;
  s.detections = dets;
  return s;
}

ImageDetections rescore_all(const ContextModel& m, const DatasetBundle& b) {
  ImageDetections result;
  for (const auto& [image, dets] : b.detections) result[image] = rescore_scene(m, scene_of(b, image, dets)).detections;
  return result;
}

struct RelabelAll {
  ImageDetections kept;
  ImageDetections removed;
  std::vector<RelabelRecord> records;
};

RelabelAll relabel_all(const ContextModel& m, const DatasetBundle& b, double threshold) {
  RelabelAll all;
  for (const auto& [image, dets] : b.detections) {
    RelabelResult r = relabel_scene(m, scene_of(b, image, dets), threshold);
    all.kept[image] = std::move(r.final_scene.detections);
    for (std::size_t i = 0; i < r.records.size(); ++i) {
      if (r.records[i].status != RelabelStatus::kRemoved) continue;
      Detection gone = dets[i];
      gone.confidence = 0.0;
      all.removed[image].push_back(gone);
    }
    for (auto& rec : r.records) all.records.push_back(std::move(rec));
  }
  return all;
}

// ---------------------------------------------------------------------------

int cmd_synth(const Flags& f, std::ostream& out, std::ostream& err) {
  SynthSpec spec = f.spec.empty() ? SynthSpec{} : synth_spec_from_json(read_text_file(f.spec));
  if (f.classes) {
    spec.classes = *f.classes;
    if (f.spec.empty()) spec.rules = SynthSpec::default_rules(spec.classes);
  }
  if (f.images) spec.images = *f.images;
  if (f.seed) spec.seed = *f.seed;
  if (f.mislabel_fraction) spec.mislabel_fraction = *f.mislabel_fraction;
  if (f.label_noise) spec.label_noise = *f.label_noise;
  if (f.first_image_id) spec.first_image_id = *f.first_image_id;
  try {
    spec.validate();
  } catch (const DataError& e) {
    throw UsageError(e.what());
  }
  const std::string& dir = need(f.out, "--out");
  err << "[ctxrel] synth spec: " << json::parse(synth_spec_to_json(spec)).dump() << '\n'
      << "[ctxrel] seed: " << spec.seed << '\n';

  const SynthResult r = synth_generate(spec);
  write_text_file(fs::path(dir) / "annotations.json", annotations_to_json(r.bundle));
  write_text_file(fs::path(dir) / "detections.json", detections_to_json(r.bundle.detections, r.bundle.vocab));
  write_text_file(fs::path(dir) / "spec.json", synth_spec_to_json(spec));
  out << "images " << r.bundle.images.size() << " detections " << r.bundle.detection_count() << " correct "
      << r.correct << " incorrect " << r.incorrect << " planted_mislabels " << r.planted_mislabels << '\n';
  if (r.single_label) err << "[ctxrel] warning: every detection has the same correctness label\n";
  return kExitOk;
}

int cmd_cooc(const Flags& f, std::ostream& out, std::ostream& err) {
  const ToolConfig c = resolve_config(f);
  log_config(err, "cooc", c);
  const DatasetBundle b = load_bundle(c, false);
  const CoocMatrix m = build_cooccurrence(b.image_class_sets(), b.vocab);
  std::ostringstream csv;
  write_cooccurrence_csv(csv, m, b.vocab);
  emit(c.paths.output, csv.str(), out);
  return kExitOk;
}

int cmd_features(const Flags& f, std::ostream& out, std::ostream& err) {
  const ToolConfig c = resolve_config(f);
  log_config(err, "features", c);
  const DatasetBundle b = load_bundle(c, true);
  const TrainingSet set = build_training_set(b.detections, b.ground_truth, c.relations, b.vocab);
  std::ostringstream csv;
  write_feature_csv(csv, to_feature_table(set, b.vocab.size()));
  emit(c.paths.output, csv.str(), out);
  err << "[ctxrel] rows " << set.size() << " width " << network_input_length(c.relations, b.vocab.size()) << '\n';
  return kExitOk;
}

json train_report_json(const TrainReport& r) {
  return {{"format_version", 1},
          {"stop", std::string(to_string(r.stop))},
          {"epochs", r.epochs},
          {"accepted_steps", r.accepted_steps},
          {"best_epoch", r.best_epoch},
          {"final_train_loss", r.final_train_loss},
          {"final_validation_loss", r.final_validation_loss},
          {"final_gradient_norm", r.final_gradient_norm},
          {"train_rows", r.train_rows},
          {"validation_rows", r.validation_rows},
          {"train_loss", r.train_loss},
          {"validation_loss", r.validation_loss}};
}

int cmd_train(const Flags& f, std::ostream& out, std::ostream& err) {
  const ToolConfig c = resolve_config(f);
  log_config(err, "train", c);
  need(c.paths.output.empty() ? c.paths.model : c.paths.output, "--out");
  const DatasetBundle b = load_bundle(c, true);
  const TrainingSet set = build_training_set(b.detections, b.ground_truth, c.relations, b.vocab);
  if (set.size() == 0) throw DataError("no training rows: every image holds fewer than two detections");
  const Batch batch = Batch::from_table(to_feature_table(set, b.vocab.size()));
  const TrainResult r = train_scg(batch, c.train);

  ContextModel m;
  m.network = r.params;
  m.vocab = b.vocab;
  m.relations = c.relations;
  m.seed = c.train.seed;
  write_text_file(c.paths.output.empty() ? c.paths.model : c.paths.output, model_to_json(m));
  if (!f.report.empty()) write_text_file(f.report, train_report_json(r.report).dump(2) + "\n");
  out << "rows " << set.size() << " epochs " << r.report.epochs << " stop " << to_string(r.report.stop)
      << " train_loss " << r.report.final_train_loss << " validation_loss " << r.report.final_validation_loss << '\n';
  return kExitOk;
}

int cmd_rescore(const Flags& f, std::ostream& out, std::ostream& err) {
  const ToolConfig c = resolve_config(f);
  log_config(err, "rescore", c);
  const DatasetBundle b = load_bundle(c, true);
  const ContextModel m = load_model(c, b);
  emit(c.paths.output, detections_to_json(rescore_all(m, b), b.vocab), out);
  return kExitOk;
}

int cmd_relabel(const Flags& f, std::ostream& out, std::ostream& err) {
  const ToolConfig c = resolve_config(f);
  log_config(err, "relabel", c);
  const DatasetBundle b = load_bundle(c, true);
  const ContextModel m = load_model(c, b);
  const RelabelAll all = relabel_all(m, b, c.relabel_threshold);
  emit(c.paths.output, detections_to_json(all.kept, b.vocab), out);
  if (!f.audit.empty()) write_text_file(f.audit, audit_log_jsonl(all.records, b.vocab));
  std::size_t relabeled = 0, removed = 0;
  for (const auto& r : all.records) {
    relabeled += r.status == RelabelStatus::kRelabeled;
    removed += r.status == RelabelStatus::kRemoved;
  }
  err << "[ctxrel] relabeled " << relabeled << " removed " << removed << " of " << all.records.size() << '\n';
  return kExitOk;
}

int cmd_eval(const Flags& f, std::ostream& out, std::ostream& err) {
  if (f.mode != "detector" && f.mode != "rescore" && f.mode != "relabel")
    throw UsageError("--mode must be detector, rescore or relabel");
  const ToolConfig c = resolve_config(f);
  if (f.mode != "detector" && c.paths.model.empty()) throw UsageError("--mode " + f.mode + " needs --model");
  log_config(err, "eval", c);
  const DatasetBundle b = load_bundle(c, true);
  MetricsReport report;
  if (f.mode == "detector") {
    report = evaluate(b.detections, b.ground_truth, b.vocab, detector_threshold(c));
  } else if (f.mode == "rescore") {
    report = evaluate(rescore_all(load_model(c, b), b), b.ground_truth, b.vocab, detector_threshold(c));
  } else {
    const RelabelAll all = relabel_all(load_model(c, b), b, c.relabel_threshold);
    report = evaluate(all.kept, b.ground_truth, b.vocab, detector_threshold(c), &all.removed);
  }
  if (!report.auc) err << "[ctxrel] warning: AUC undefined, every detection has the same label\n";
  emit(c.paths.output, metrics_to_json(report), out);
  return kExitOk;
}

int cmd_viz(const Flags& f, std::ostream& out, std::ostream& err) {
  if (f.mode != "detector" && f.mode != "rescore" && f.mode != "relabel")
    throw UsageError("--mode must be detector, rescore or relabel");
  if (!f.image) throw UsageError("--image is required");
  const ToolConfig c = resolve_config(f);
  if (f.mode != "detector" && c.paths.model.empty()) throw UsageError("--mode " + f.mode + " needs --model");
  log_config(err, "viz", c);
  const DatasetBundle b = load_bundle(c, true);
  const auto info = b.images.find(*f.image);
  if (info == b.images.end()) throw DataError("unknown image id " + std::to_string(*f.image));
  const auto& gt = b.ground_truth.at(*f.image);
  const auto found = b.detections.find(*f.image);
  const std::vector<Detection> dets = found == b.detections.end() ? std::vector<Detection>{} : found->second;
  const double w = info->second.width, h = info->second.height;

  OverlayScene scene;
  if (f.mode == "detector") {
    scene = overlay_from_detections(*f.image, dets, gt, b.vocab, w, h);
  } else if (f.mode == "rescore") {
    const SceneDetections s = rescore_scene(load_model(c, b), scene_of(b, *f.image, dets));
    scene = overlay_from_detections(*f.image, s.detections, gt, b.vocab, w, h);
  } else {
    const RelabelResult r = relabel_scene(load_model(c, b), scene_of(b, *f.image, dets), c.relabel_threshold);
    scene = overlay_from_relabel(r, gt, b.vocab, w, h);
  }
  emit(c.paths.output, render_overlay(scene), out);
  return kExitOk;
}

void add_paths(CLI::App* sub, Flags& f, bool detections, bool model) {
  sub->add_option("--annotations", f.annotations, "COCO annotation JSON");
  if (detections) {
    sub->add_option("--detections", f.detections, "COCO results JSON");
    sub->add_option("--threshold", f.threshold, "Detector score threshold");
  }
  if (model) sub->add_option("--model", f.model, "Model JSON");
  sub->add_option("--out", f.out, "Output file (stdout when omitted)");
}

void add_relations(CLI::App* sub, Flags& f) {
  sub->add_option("--relations", f.relations, "Comma list of cooc,overlap,scale,boundary,central,near_far or 'all'");
  sub->add_option("--central-form", f.central_form, "literal or center");
  sub->add_option("--overlap-mode", f.overlap_mode, "iou or any");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Contextual rescoring and relabeling of object detections", "ctxrel"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config, "ToolConfig JSON file");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset with planted context rules");
  synth->add_option("--spec", f.spec, "SynthSpec JSON");
  synth->add_option("--classes", f.classes, "Number of classes");
  synth->add_option("--images", f.images, "Number of images");
  synth->add_option("--seed", f.seed, "Random seed");
  synth->add_option("--mislabel-fraction", f.mislabel_fraction, "Fraction of planted wrong labels");
  synth->add_option("--label-noise", f.label_noise, "Probability of flipping correctness");
  synth->add_option("--first-image-id", f.first_image_id, "Id of the first image");
  synth->add_option("--out", f.out, "Output directory");

  auto* cooc = app.add_subcommand("cooc", "Class co-occurrence matrix as CSV");
  add_paths(cooc, f, false, false);

  auto* features = app.add_subcommand("features", "Feature CSV of network inputs and labels");
  add_paths(features, f, true, false);
  add_relations(features, f);

  auto* train = app.add_subcommand("train", "Train the context classifier");
  add_paths(train, f, true, false);
  add_relations(train, f);
  train->add_option("--hidden", f.hidden, "Hidden units");
  train->add_option("--epochs", f.epochs, "Maximum SCG epochs");
  train->add_option("--seed", f.seed, "Initialization and split seed");
  train->add_option("--validation-fraction", f.validation_fraction, "Held-out fraction for early stopping");
  train->add_option("--report", f.report, "Training report JSON");

  auto* rescore = app.add_subcommand("rescore", "Replace detector confidences with context scores");
  add_paths(rescore, f, true, true);

  auto* relabel = app.add_subcommand("relabel", "Rescore, relabel or remove low-scoring detections");
  add_paths(relabel, f, true, true);
  relabel->add_option("--relabel-threshold", f.relabel_threshold, "Relabel threshold T");
  relabel->add_option("--audit", f.audit, "JSON Lines audit log");

  auto* eval = app.add_subcommand("eval", "AUC, mAP@0.5 and F1 for a pipeline");
  add_paths(eval, f, true, true);
  eval->add_option("--mode", f.mode, "detector, rescore or relabel");
  eval->add_option("--relabel-threshold", f.relabel_threshold, "Relabel threshold T");

  auto* viz = app.add_subcommand("viz", "SVG overlay for one image");
  add_paths(viz, f, true, true);
  viz->add_option("--image", f.image, "Image id");
  viz->add_option("--mode", f.mode, "detector, rescore or relabel");
  viz->add_option("--relabel-threshold", f.relabel_threshold, "Relabel threshold T");

  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a == "--config") ++i;
    if (a.empty() || a[0] == '-') continue;
    const auto subs = app.get_subcommands([](CLI::App*) { return true; });
    if (std::none_of(subs.begin(), subs.end(), [&](CLI::App* s) { return s->get_name() == a; })) {
      err << "error: unknown subcommand '" << a << "'\n\n" << app.help();
      return kExitUsage;
    }
    break;
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(f, out, err);
    if (cooc->parsed()) return cmd_cooc(f, out, err);
    if (features->parsed()) return cmd_features(f, out, err);
    if (train->parsed()) return cmd_train(f, out, err);
    if (rescore->parsed()) return cmd_rescore(f, out, err);
    if (relabel->parsed()) return cmd_relabel(f, out, err);
    if (eval->parsed()) return cmd_eval(f, out, err);
    if (viz->parsed()) return cmd_viz(f, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace ctxrel::cli
