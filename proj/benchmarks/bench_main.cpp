#include <benchmark/benchmark.h>

#include <random>

#include "ctxrel/context_features.hpp"
#include "ctxrel/evaluation.hpp"
#include "ctxrel/mlp_scg.hpp"
#include "ctxrel/synth.hpp"

using namespace ctxrel;

namespace {

std::vector<Detection> random_scene(std::size_t n, std::size_t classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pos(0, 600), ext(10, 120), conf(0.5, 1.0);
  std::vector<Detection> scene(n);
  for (auto& d : scene) {
    d.class_id = static_cast<ClassId>(rng() % classes);
    d.box = {pos(rng), pos(rng), ext(rng), ext(rng)};
    d.confidence = conf(rng);
  }
  return scene;
}

void BM_Iou(benchmark::State& state) {
  const auto scene = random_scene(64, 1, 1);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(iou(scene[i % 64].box, scene[(i * 7 + 3) % 64].box));
    ++i;
  }
}
BENCHMARK(BM_Iou);

void BM_RelationBits(benchmark::State& state) {
  const auto scene = random_scene(64, 1, 2);
  const auto cfg = RelationConfig::all();
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(relation_bits(scene[i % 64].box, scene[(i * 7 + 3) % 64].box, cfg));
    ++i;
  }
}
BENCHMARK(BM_RelationBits);

// Feature vector for one reference in an 80-class vocabulary, scene size varied.
void BM_FeatureVector(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto scene = random_scene(n, 80, 3);
  const auto vocab = ClassVocabulary::numbered(80);
  const auto cfg = RelationConfig::all();
  for (auto _ : state)
    benchmark::DoNotOptimize(build_feature_vector(scene[0].box, scene[0].confidence, scene, 0, cfg, vocab));
}
BENCHMARK(BM_FeatureVector)->Arg(2)->Arg(8)->Arg(32);

// Full-batch loss and gradient at the COCO input width.
void BM_LossGradient(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const auto hidden = static_cast<std::size_t>(state.range(1));
  const std::size_t cols = network_input_length(RelationConfig::all(), 80);
  std::mt19937_64 rng(4);
  Batch b;
  b.rows = rows;
  b.cols = cols;
  b.values.resize(rows * cols);
  for (auto& v : b.values) v = (rng() % 16 == 0) ? 1.0 : 0.0;
  for (std::size_t i = 0; i < rows; ++i) b.labels.push_back(static_cast<int>(rng() % 2));
  const NetworkParams p = init_network(cols, hidden, 5);
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_gradient(p, b).loss);
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * rows));
}
BENCHMARK(BM_LossGradient)->Args({256, 20})->Args({256, 1000})->Unit(benchmark::kMillisecond);

void BM_Auc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> s(n);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = u(rng);
    y[i] = static_cast<int>(rng() % 2);
  }
  for (auto _ : state) benchmark::DoNotOptimize(auc(s, y));
}
BENCHMARK(BM_Auc)->Arg(1000)->Arg(100000);

void BM_SynthGenerate(benchmark::State& state) {
  SynthSpec spec;
  spec.images = 100;
  for (auto _ : state) benchmark::DoNotOptimize(synth_generate(spec).correct);
}
BENCHMARK(BM_SynthGenerate)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
