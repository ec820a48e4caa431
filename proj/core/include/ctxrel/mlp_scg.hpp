#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ctxrel/context_features.hpp"
#include "ctxrel/detection.hpp"
#include "ctxrel/geometry.hpp"

namespace ctxrel {

/// Two-layer network: sigmoid hidden layer, two-way softmax output. Output 0
/// is "detection correct", output 1 "incorrect".
///
/// Parameters live in one flat buffer laid out as W1 (hidden x input,
/// row-major), b1, W2 (2 x hidden, row-major), b2, which is also the layout
/// the optimizer and the gradient use.
class NetworkParams {
 public:
  static constexpr std::size_t kOutputs = 2;

  NetworkParams() = default;
  /// All-zero parameters. Throws DataError when either dimension is 0.
  NetworkParams(std::size_t input_dim, std::size_t hidden_dim);

  std::size_t input_dim() const { return input_; }
  std::size_t hidden_dim() const { return hidden_; }
  std::size_t parameter_count() const { return theta_.size(); }

  std::span<double> values() { return theta_; }
  std::span<const double> values() const { return theta_; }

  std::span<double> w1() { return std::span(theta_).subspan(0, hidden_ * input_); }
  std::span<double> b1() { return std::span(theta_).subspan(hidden_ * input_, hidden_); }
  std::span<double> w2() { return std::span(theta_).subspan(hidden_ * (input_ + 1), kOutputs * hidden_); }
  std::span<double> b2() { return std::span(theta_).subspan(hidden_ * (input_ + 3), kOutputs); }
  std::span<const double> w1() const { return const_cast<NetworkParams*>(this)->w1(); }
  std::span<const double> b1() const { return const_cast<NetworkParams*>(this)->b1(); }
  std::span<const double> w2() const { return const_cast<NetworkParams*>(this)->w2(); }
  std::span<const double> b2() const { return const_cast<NetworkParams*>(this)->b2(); }

  bool finite() const;

  friend bool operator==(const NetworkParams&, const NetworkParams&) = default;

 private:
  std::size_t input_ = 0;
  std::size_t hidden_ = 0;
  std::vector<double> theta_;
};

/// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
/// Deterministic for a given seed.
NetworkParams init_network(std::size_t input_dim, std::size_t hidden_dim, std::uint64_t seed);

struct OutputProbabilities {
  double correct = 0.5;
  double incorrect = 0.5;
};

OutputProbabilities forward(const NetworkParams& params, std::span<const double> x);

/// Probability that the detection is correct.
double score(const NetworkParams& params, std::span<const double> x);

/// Row-major sample matrix with binary labels (1 = correct).
struct Batch {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  std::vector<int> labels;

  std::span<const double> row(std::size_t i) const { return std::span(values).subspan(i * cols, cols); }

  static Batch from_table(const FeatureTable& table);
  /// Rows selected by index, in the given order.
  Batch subset(std::span<const std::size_t> indices) const;
};

struct LossGradient {
  double loss = 0.0;
  std::vector<double> gradient;  // same layout as NetworkParams::values()
};

/// Mean cross-entropy over the batch and its exact gradient. Throws
/// DataError for an empty batch or mismatched widths.
LossGradient loss_and_gradient(const NetworkParams& params, const Batch& batch);
double mean_loss(const NetworkParams& params, const Batch& batch);

/// Fraction of rows whose argmax output agrees with the label.
double accuracy(const NetworkParams& params, const Batch& batch);

// ---------------------------------------------------------------------------
// Scaled conjugate gradient

struct ScgOptions {
  std::size_t max_epochs = 1000;
  double sigma = 5e-5;
  double lambda_init = 5e-7;
  double min_gradient = 1e-6;
};

enum class StopReason {
  kMaxEpochs,
  kMinGradient,
  kValidationStop,
  kStalled,  // scaling parameter grew without bound; no further progress possible
};

std::string_view to_string(StopReason reason);

struct ScgEpoch {
  std::size_t epoch = 0;  // 1-based
  bool accepted = false;
  double loss = 0.0;  // loss at the current point after this epoch
  double gradient_norm = 0.0;
  double lambda = 0.0;
};

/// Objective: value and gradient at a point.
using Objective = std::function<double(std::span<const double> x, std::vector<double>* gradient)>;

/// Return true to stop early (reported as kValidationStop).
using ScgObserver = std::function<bool(const ScgEpoch& epoch, std::span<const double> x)>;

struct ScgResult {
  std::vector<double> x;
  double loss = 0.0;
  double gradient_norm = 0.0;
  std::size_t epochs = 0;
  std::size_t accepted_steps = 0;
  StopReason stop = StopReason::kMaxEpochs;
};

/// Moller's scaled conjugate gradient on a full-batch objective. One epoch
/// is one pass of the algorithm whether or not its step is accepted; the
/// direction restarts to steepest descent every `x.size()` accepted steps.
/// Throws TrainingError if the objective returns a non-finite value.
ScgResult scg_minimize(const Objective& objective, std::vector<double> x, const ScgOptions& options,
                       const ScgObserver& observer = {});

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  std::size_t hidden = 1000;
  std::size_t max_epochs = 1000;
  double sigma = 5e-5;
  double lambda_init = 5e-7;
  double min_gradient = 1e-6;
  double validation_fraction = 0.15;
  /// Training stops after this many accepted steps in a row that each raise
  /// the validation loss over the step before.
  std::size_t max_validation_failures = 6;
  std::uint64_t seed = 0;

  /// Throws DataError when a field is out of range.
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct TrainReport {
  std::vector<double> train_loss;       // per epoch
  std::vector<double> validation_loss;  // per epoch; empty without a validation split
  StopReason stop = StopReason::kMaxEpochs;
  std::size_t epochs = 0;
  std::size_t accepted_steps = 0;
  std::size_t best_epoch = 0;  // 0 = initial parameters
  double final_train_loss = 0.0;
  /// Validation loss of the returned parameters (the best seen).
  double final_validation_loss = 0.0;
  double final_gradient_norm = 0.0;
  std::size_t train_rows = 0;
  std::size_t validation_rows = 0;
};

struct TrainResult {
  NetworkParams params;
  TrainReport report;
};

/// Stratified train/validation split by seed, then SCG from init_network.
/// Returns the parameters with the lowest validation loss (or the final
/// ones when validation_fraction is 0). Throws DataError if the labels hold
/// a single class and TrainingError on a non-finite loss.
TrainResult train_scg(const Batch& data, const TrainConfig& config);

// ---------------------------------------------------------------------------
// Model file

/// Trained network plus everything needed to rebuild its inputs.
struct ContextModel {
  NetworkParams network;
  ClassVocabulary vocab;
  RelationConfig relations;
  std::uint64_t seed = 0;

  /// Score for a reference at `box`/`confidence` with class `ref_class`
  /// against `scene` minus index `skip`.
  double score_reference(const BBox& box, double confidence, ClassId ref_class,
                         std::span<const Detection> scene, std::size_t skip) const;

  friend bool operator==(const ContextModel&, const ContextModel&) = default;
};

inline constexpr int kModelFormatVersion = 1;

std::string model_to_json(const ContextModel& model);
ContextModel model_from_json(std::string_view text);

}  // namespace ctxrel
