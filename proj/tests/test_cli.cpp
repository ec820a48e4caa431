#include <doctest.h>

#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "ctxrel/context_features.hpp"
#include "ctxrel/dataset.hpp"
#include "ctxrel/evaluation.hpp"
#include "ctxrel/mlp_scg.hpp"
#include "ctxrel_tools/cli.hpp"

using namespace ctxrel;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Run r;
  r.code = cli::run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& leaf) const { return (path / leaf).string(); }
};

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit 1") {
  CHECK(run({}).code == cli::kExitUsage);
  const Run bogus = run({"frobnicate"});
  CHECK(bogus.code == cli::kExitUsage);
  CHECK(bogus.err.find("unknown subcommand") != std::string::npos);
  CHECK(bogus.err.find("Subcommands:") != std::string::npos);
  CHECK(run({"eval", "--mode", "sideways"}).code == cli::kExitUsage);
  CHECK(run({"eval", "--bogus-flag"}).code == cli::kExitUsage);
  CHECK(run({"--help"}).code == cli::kExitOk);
}

TEST_CASE("synth, features, train, rescore and eval chain") {
  TempDir dir("ctxrel_cli_chain");
  REQUIRE(run({"synth", "--images", "60", "--seed", "3", "--out", dir / "train"}).code == 0);
  REQUIRE(run({"synth", "--images", "30", "--seed", "4", "--first-image-id", "500", "--out", dir / "test"}).code == 0);
  const std::string ann = dir / "train/annotations.json", det = dir / "train/detections.json";

  const Run cooc = run({"cooc", "--annotations", ann});
  REQUIRE(cooc.code == 0);
  CHECK(cooc.out.rfind("class,class0,", 0) == 0);

  REQUIRE(run({"features", "--annotations", ann, "--detections", det, "--out", dir / "f.csv"}).code == 0);
  std::istringstream csv(read_text_file(dir / "f.csv"));
  const FeatureTable table = read_feature_csv(csv);
  CHECK(table.width == feature_length(RelationConfig::all(), 6) + 6);

  const Run train = run({"train", "--annotations", ann, "--detections", det, "--hidden", "6", "--epochs", "40",
                         "--seed", "2", "--out", dir / "model.json", "--report", dir / "report.json"});
  REQUIRE(train.code == 0);
  CHECK(train.err.find("[ctxrel] seed: 2") != std::string::npos);
  CHECK(train.err.find("\"hidden\":6") != std::string::npos);
  const ContextModel model = model_from_json(read_text_file(dir / "model.json"));
  CHECK(model.network.hidden_dim() == 6);
  CHECK(nlohmann::json::parse(read_text_file(dir / "report.json")).contains("train_loss"));

  const std::string tann = dir / "test/annotations.json", tdet = dir / "test/detections.json";
  REQUIRE(run({"rescore", "--annotations", tann, "--detections", tdet, "--model", dir / "model.json", "--out",
               dir / "rescored.json"}).code == 0);
  const Run direct = run({"eval", "--mode", "rescore", "--annotations", tann, "--detections", tdet, "--model",
                          dir / "model.json"});
  REQUIRE(direct.code == 0);
  // The rescored file, evaluated without a gate, gives the same report.
  DatasetBundle rescored = load_annotations(tann);
  parse_detections(read_text_file(dir / "rescored.json"), rescored, 0.0);
  const MetricsReport via_file = evaluate(rescored.detections, rescored.ground_truth, rescored.vocab, 0.5);
  CHECK(metrics_from_json(direct.out) == metrics_from_json(metrics_to_json(via_file)));

  const Run relabel = run({"relabel", "--annotations", tann, "--detections", tdet, "--model", dir / "model.json",
                           "--out", dir / "relabeled.json", "--audit", dir / "audit.jsonl"});
  REQUIRE(relabel.code == 0);
  CHECK(fs::file_size(dir / "audit.jsonl") > 0);
  const Run rl_eval = run({"eval", "--mode", "relabel", "--annotations", tann, "--detections", tdet, "--model",
                           dir / "model.json", "--relabel-threshold", "0.3"});
  REQUIRE(rl_eval.code == 0);
  CHECK(metrics_from_json(rl_eval.out).map50 >= 0.0);

  const Run viz = run({"viz", "--annotations", tann, "--detections", tdet, "--model", dir / "model.json", "--mode",
                       "relabel", "--image", "500"});
  REQUIRE(viz.code == 0);
  CHECK(viz.out.find("<svg") != std::string::npos);
}

TEST_CASE("config file values are overridden by flags") {
  TempDir dir("ctxrel_cli_config");
  REQUIRE(run({"synth", "--images", "20", "--out", dir.path.string()}).code == 0);
  write_text_file(dir / "cfg.json", R"({"detector_thresholds": [0.9], "train": {"seed": 77, "hidden": 3}})");
  const Run r = run({"--config", dir / "cfg.json", "features", "--annotations", dir / "annotations.json",
                     "--detections", dir / "detections.json", "--out", dir / "f.csv"});
  REQUIRE(r.code == 0);
  CHECK(r.err.find("[ctxrel] seed: 77") != std::string::npos);
  CHECK(r.err.find("\"detector_thresholds\":[0.9]") != std::string::npos);
  const Run o = run({"features", "--config", dir / "cfg.json", "--annotations", dir / "annotations.json",
                     "--detections", dir / "detections.json", "--threshold", "0.5", "--out", dir / "g.csv"});
  REQUIRE(o.code == 0);
  CHECK(o.err.find("\"detector_thresholds\":[0.5]") != std::string::npos);
}

TEST_CASE("data errors exit 2") {
  TempDir dir("ctxrel_cli_errors");
  // Every detection correct: training labels hold one class.
  write_text_file(dir / "spec.json", R"({"classes": 3, "images": 20, "rules": []})");
  REQUIRE(run({"synth", "--spec", dir / "spec.json", "--out", dir.path.string()}).code == 0);
  const Run train = run({"train", "--annotations", dir / "annotations.json", "--detections",
                         dir / "detections.json", "--hidden", "2", "--out", dir / "m.json"});
  CHECK(train.code == cli::kExitData);
  CHECK(train.err.find("error: ") != std::string::npos);
  CHECK(train.err.find("label") != std::string::npos);

  const Run no_model = run({"eval", "--mode", "rescore", "--annotations", dir / "annotations.json", "--detections",
                            dir / "detections.json"});
  CHECK(no_model.code == cli::kExitUsage);

  const Run missing = run({"cooc", "--annotations", dir / "nope.json"});
  CHECK(missing.code == cli::kExitData);
  write_text_file(dir / "bad.json", R"({"images": [{"id": 1}], "annotations": [{"image_id": 1, "category_id": 1, "bbox": [0, 0, 0, 1]}], "categories": [{"id": 1, "name": "a"}]})");
  const Run bad = run({"cooc", "--annotations", dir / "bad.json"});
  CHECK(bad.code == cli::kExitData);
  CHECK(bad.err.find("annotations[0]: bbox width must be positive") != std::string::npos);
}

}  // TEST_SUITE
