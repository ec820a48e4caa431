#include "ctxrel/mlp_scg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <Eigen/Dense>

#include "ctxrel/error.hpp"
#include "json_io.hpp"

namespace ctxrel {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMatrix>;
using RowMap = Eigen::Map<RowMatrix>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;
using VecMap = Eigen::Map<Eigen::VectorXd>;

// log(1 + exp(v)) without overflow.
double softplus(double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); }

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

struct Views {
  ConstRowMap w1;
  ConstVecMap b1;
  ConstRowMap w2;
  ConstVecMap b2;
};

Views views_of(std::span<const double> theta, std::size_t input, std::size_t hidden) {
  const double* p = theta.data();
  const auto h = static_cast<Eigen::Index>(hidden);
  const auto d = static_cast<Eigen::Index>(input);
  return Views{ConstRowMap(p, h, d), ConstVecMap(p + h * d, h), ConstRowMap(p + h * (d + 1), 2, h),
               ConstVecMap(p + h * (d + 3), 2)};
}

void check_batch(const NetworkParams& params, const Batch& batch) {
  if (batch.rows == 0) throw DataError("empty batch");
  if (batch.cols != params.input_dim())
    throw DataError("batch width " + std::to_string(batch.cols) + " does not match network input " +
                    std::to_string(params.input_dim()));
  if (batch.values.size() != batch.rows * batch.cols || batch.labels.size() != batch.rows)
    throw DataError("batch storage is inconsistent with its shape");
}

// Hidden activations (n x hidden) and output margins z0 - z1 (n).
struct ForwardPass {
  RowMatrix hidden;
  Eigen::VectorXd margin;
};

ForwardPass run_forward(const Views& v, const Batch& batch) {
  ConstRowMap x(batch.values.data(), static_cast<Eigen::Index>(batch.rows),
                static_cast<Eigen::Index>(batch.cols));
  ForwardPass f;
  f.hidden.noalias() = x * v.w1.transpose();
  f.hidden.rowwise() += v.b1.transpose();
  f.hidden = f.hidden.unaryExpr([](double a) { return sigmoid(a); });
  const Eigen::VectorXd dw = (v.w2.row(0) - v.w2.row(1)).transpose();
  f.margin.noalias() = f.hidden * dw;
  f.margin.array() += v.b2(0) - v.b2(1);
  return f;
}

double loss_from_margin(const Eigen::VectorXd& margin, std::span<const int> labels) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < margin.size(); ++i) {
    // -log p_label, p_correct = sigmoid(margin)
    sum += labels[static_cast<std::size_t>(i)] == 1 ? softplus(-margin(i)) : softplus(margin(i));
  }
  return sum / static_cast<double>(margin.size());
}

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

}  // namespace

NetworkParams::NetworkParams(std::size_t input_dim, std::size_t hidden_dim)
    : input_(input_dim), hidden_(hidden_dim) {
  if (input_dim == 0 || hidden_dim == 0) throw DataError("network dimensions must be at least 1");
  theta_.assign(hidden_ * (input_ + 1) + kOutputs * hidden_ + kOutputs, 0.0);
}

bool NetworkParams::finite() const {
  return std::all_of(theta_.begin(), theta_.end(), [](double v) { return std::isfinite(v); });
}

NetworkParams init_network(std::size_t input_dim, std::size_t hidden_dim, std::uint64_t seed) {
  NetworkParams p(input_dim, hidden_dim);
  std::mt19937_64 rng(seed);
  const double r1 = 1.0 / std::sqrt(static_cast<double>(input_dim));
  const double r2 = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  std::uniform_real_distribution<double> u1(-r1, r1);
  std::uniform_real_distribution<double> u2(-r2, r2);
  for (double& w : p.w1()) w = u1(rng);
  for (double& w : p.w2()) w = u2(rng);
  return p;
}

OutputProbabilities forward(const NetworkParams& params, std::span<const double> x) {
  if (x.size() != params.input_dim())
    throw DataError("input length " + std::to_string(x.size()) + " does not match network input " +
                    std::to_string(params.input_dim()));
  const Views v = views_of(params.values(), params.input_dim(), params.hidden_dim());
  const ConstVecMap xv(x.data(), static_cast<Eigen::Index>(x.size()));
  Eigen::VectorXd h = v.w1 * xv + v.b1;
  h = h.unaryExpr([](double a) { return sigmoid(a); });
  const Eigen::Vector2d z = v.w2 * h + v.b2;
  // Two-way softmax written so both outputs are computed from the same
  // margin and sum to one up to a single rounding.
  OutputProbabilities out;
  out.correct = sigmoid(z(0) - z(1));
  out.incorrect = 1.0 - out.correct;
  return out;
}

double score(const NetworkParams& params, std::span<const double> x) { return forward(params, x).correct; }

Batch Batch::from_table(const FeatureTable& table) {
  Batch b;
  b.rows = table.rows.size();
  b.cols = table.width;
  b.values.reserve(b.rows * b.cols);
  for (const auto& r : table.rows) {
    if (r.size() != b.cols) throw DataError("feature table rows have inconsistent width");
    b.values.insert(b.values.end(), r.begin(), r.end());
  }
  b.labels = table.labels;
  return b;
}

Batch Batch::subset(std::span<const std::size_t> indices) const {
  Batch b;
  b.rows = indices.size();
  b.cols = cols;
  b.values.reserve(b.rows * cols);
  for (std::size_t i : indices) {
    auto r = row(i);
    b.values.insert(b.values.end(), r.begin(), r.end());
    b.labels.push_back(labels[i]);
  }
  return b;
}

double mean_loss(const NetworkParams& params, const Batch& batch) {
  check_batch(params, batch);
  const Views v = views_of(params.values(), params.input_dim(), params.hidden_dim());
  return loss_from_margin(run_forward(v, batch).margin, batch.labels);
}

LossGradient loss_and_gradient(const NetworkParams& params, const Batch& batch) {
  check_batch(params, batch);
  const std::size_t input = params.input_dim();
  const std::size_t hidden = params.hidden_dim();
  const Views v = views_of(params.values(), input, hidden);
  ForwardPass f = run_forward(v, batch);

  LossGradient out;
  out.loss = loss_from_margin(f.margin, batch.labels);
  out.gradient.assign(params.parameter_count(), 0.0);

  const auto n = static_cast<Eigen::Index>(batch.rows);
  const double inv_n = 1.0 / static_cast<double>(batch.rows);
  // dL/dz0 = (p0 - y) / n, dL/dz1 = -(p0 - y) / n.
  Eigen::VectorXd dz0(n);
  for (Eigen::Index i = 0; i < n; ++i)
    dz0(i) = (sigmoid(f.margin(i)) - static_cast<double>(batch.labels[static_cast<std::size_t>(i)])) * inv_n;

  const auto h = static_cast<Eigen::Index>(hidden);
  const auto d = static_cast<Eigen::Index>(input);
  double* g = out.gradient.data();
  RowMap gw1(g, h, d);
  VecMap gb1(g + h * d, h);
  RowMap gw2(g + h * (d + 1), 2, h);
  VecMap gb2(g + h * (d + 3), 2);

  const Eigen::RowVectorXd gw2_row0 = dz0.transpose() * f.hidden;
  gw2.row(0) = gw2_row0;
  gw2.row(1) = -gw2_row0;
  gb2(0) = dz0.sum();
  gb2(1) = -gb2(0);

  // Back through the hidden layer: dA = dz0 * (w2_0 - w2_1), then sigmoid'.
  const Eigen::RowVectorXd dw = v.w2.row(0) - v.w2.row(1);
  RowMatrix delta = dz0 * dw;
  delta.array() *= f.hidden.array() * (1.0 - f.hidden.array());

  ConstRowMap x(batch.values.data(), n, d);
  gw1.noalias() = delta.transpose() * x;
  gb1 = delta.colwise().sum().transpose();
  return out;
}

double accuracy(const NetworkParams& params, const Batch& batch) {
  check_batch(params, batch);
  const Views v = views_of(params.values(), params.input_dim(), params.hidden_dim());
  const ForwardPass f = run_forward(v, batch);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < batch.rows; ++i) {
    const int predicted = f.margin(static_cast<Eigen::Index>(i)) > 0.0 ? 1 : 0;
    if (predicted == batch.labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(batch.rows);
}

std::string_view to_string(StopReason reason) {
  switch (reason) {
    case StopReason::kMaxEpochs: return "max_epochs";
    case StopReason::kMinGradient: return "min_gradient";
    case StopReason::kValidationStop: return "validation_stop";
    case StopReason::kStalled: return "stalled";
  }
  return "unknown";
}

ScgResult scg_minimize(const Objective& objective, std::vector<double> x, const ScgOptions& options,
                       const ScgObserver& observer) {
  constexpr double kLambdaMax = 1e20;
  const std::size_t n = x.size();
  ScgResult result;

  std::vector<double> g(n);
  double f = objective(x, &g);
  if (!std::isfinite(f)) throw TrainingError("scg: non-finite loss at the initial point");

  std::vector<double> r(n), p(n), s(n), g_probe(n), trial(n), r_old(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = -g[i];
  p = r;

  double lambda = options.lambda_init;
  double lambda_bar = 0.0;
  double delta = 0.0;
  double p_norm2 = 0.0;
  bool success = true;
  std::size_t accepted = 0;
  std::size_t epoch = 0;
  StopReason stop = StopReason::kMaxEpochs;

  auto grad_norm = [&] { return std::sqrt(dot(g, g)); };

  while (true) {
    if (grad_norm() < options.min_gradient) {
      stop = StopReason::kMinGradient;
      break;
    }
    if (epoch >= options.max_epochs) {
      stop = StopReason::kMaxEpochs;
      break;
    }
    ++epoch;

    if (success) {
      p_norm2 = dot(p, p);
      // Second-order information along p from a finite gradient difference.
      const double sigma_k = options.sigma / std::sqrt(p_norm2);
      for (std::size_t i = 0; i < n; ++i) trial[i] = x[i] + sigma_k * p[i];
      const double f_probe = objective(trial, &g_probe);
      if (!std::isfinite(f_probe)) throw TrainingError("scg: non-finite loss at epoch " + std::to_string(epoch));
      for (std::size_t i = 0; i < n; ++i) s[i] = (g_probe[i] - g[i]) / sigma_k;
      delta = dot(p, s);
    }

    // Scale, then force the Hessian estimate positive definite.
    delta += (lambda - lambda_bar) * p_norm2;
    if (delta <= 0.0) {
      lambda_bar = 2.0 * (lambda - delta / p_norm2);
      delta = -delta + lambda * p_norm2;
      lambda = lambda_bar;
    }

    const double mu = dot(p, r);
    const double alpha = mu / delta;
    for (std::size_t i = 0; i < n; ++i) trial[i] = x[i] + alpha * p[i];
    const double f_new = objective(trial, nullptr);
    if (!std::isfinite(f_new)) throw TrainingError("scg: non-finite loss at epoch " + std::to_string(epoch));

    // Comparison parameter: actual vs predicted reduction.
    const double comparison = 2.0 * delta * (f - f_new) / (mu * mu);
    const bool accept = comparison >= 0.0;
    if (accept) {
      x.swap(trial);
      f = objective(x, &g);
      r_old.swap(r);
      for (std::size_t i = 0; i < n; ++i) r[i] = -g[i];
      lambda_bar = 0.0;
      success = true;
      ++accepted;
      if (accepted % n == 0) {
        p = r;
      } else {
        const double beta = (dot(r, r) - dot(r, r_old)) / mu;
        for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
      }
      if (comparison >= 0.75) lambda *= 0.25;
    } else {
      lambda_bar = lambda;
      success = false;
    }
    if (comparison < 0.25) lambda += delta * (1.0 - comparison) / p_norm2;

    const ScgEpoch info{epoch, accept, f, grad_norm(), lambda};
    if (observer && observer(info, x)) {
      stop = StopReason::kValidationStop;
      break;
    }
    if (!(lambda < kLambdaMax)) {
      stop = StopReason::kStalled;
      break;
    }
  }

  result.x = std::move(x);
  result.loss = f;
  result.gradient_norm = grad_norm();
  result.epochs = epoch;
  result.accepted_steps = accepted;
  result.stop = stop;
  return result;
}

void TrainConfig::validate() const {
  if (hidden < 1) throw DataError("train config: hidden must be at least 1");
  if (!(sigma > 0.0)) throw DataError("train config: sigma must be positive");
  if (!(lambda_init > 0.0)) throw DataError("train config: lambda_init must be positive");
  if (!(min_gradient >= 0.0)) throw DataError("train config: min_gradient must be >= 0");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw DataError("train config: validation_fraction must lie in [0, 1)");
}

namespace {

// Stratified split: the same fraction of each label goes to validation.
void split_indices(const Batch& data, double fraction, std::uint64_t seed, std::vector<std::size_t>& train,
                   std::vector<std::size_t>& validation) {
  std::vector<std::size_t> by_label[2];
  for (std::size_t i = 0; i < data.rows; ++i) by_label[data.labels[i]].push_back(i);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  for (auto& group : by_label) {
    std::shuffle(group.begin(), group.end(), rng);
    const auto n_val = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(group.size())));
    // Keep at least one row of each label for training.
    const std::size_t take = std::min(n_val, group.size() - 1);
    validation.insert(validation.end(), group.begin(), group.begin() + static_cast<std::ptrdiff_t>(take));
    train.insert(train.end(), group.begin() + static_cast<std::ptrdiff_t>(take), group.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(validation.begin(), validation.end());
}

}  // namespace

TrainResult train_scg(const Batch& data, const TrainConfig& config) {
  config.validate();
  if (data.rows < 2) throw DataError("training needs at least 2 samples");
  const auto positives = static_cast<std::size_t>(std::count(data.labels.begin(), data.labels.end(), 1));
  if (positives + static_cast<std::size_t>(std::count(data.labels.begin(), data.labels.end(), 0)) != data.rows)
    throw DataError("training labels must be 0 or 1");
  if (positives == 0 || positives == data.rows)
    throw DataError("training labels contain a single class; both correct and incorrect samples are required");

  std::vector<std::size_t> train_idx, val_idx;
  split_indices(data, config.validation_fraction, config.seed, train_idx, val_idx);
  const Batch train = val_idx.empty() ? data : data.subset(train_idx);
  const Batch validation = data.subset(val_idx);

  NetworkParams params = init_network(data.cols, config.hidden, config.seed);
  NetworkParams scratch = params;

  auto objective = [&](std::span<const double> theta, std::vector<double>* gradient) {
    std::copy(theta.begin(), theta.end(), scratch.values().begin());
    if (gradient == nullptr) return mean_loss(scratch, train);
    LossGradient lg = loss_and_gradient(scratch, train);
    *gradient = std::move(lg.gradient);
    return lg.loss;
  };

  TrainReport report;
  report.train_rows = train.rows;
  report.validation_rows = validation.rows;

  const bool use_validation = validation.rows > 0;
  NetworkParams best = params;
  double best_val = use_validation ? mean_loss(params, validation) : 0.0;
  double previous_val = best_val;
  std::size_t failures = 0;

  auto observer = [&](const ScgEpoch& e, std::span<const double> theta) {
    report.train_loss.push_back(e.loss);
    if (!use_validation) return false;
    std::copy(theta.begin(), theta.end(), scratch.values().begin());
    const double val = mean_loss(scratch, validation);
    report.validation_loss.push_back(val);
    if (!e.accepted) return false;
    if (val < best_val) {
      best_val = val;
      best = scratch;
      report.best_epoch = e.epoch;
    }
    failures = val > previous_val ? failures + 1 : 0;
    previous_val = val;
    return failures >= config.max_validation_failures;
  };

  ScgOptions options;
  options.max_epochs = config.max_epochs;
  options.sigma = config.sigma;
  options.lambda_init = config.lambda_init;
  options.min_gradient = config.min_gradient;
  ScgResult scg = scg_minimize(objective, std::vector<double>(params.values().begin(), params.values().end()),
                               options, observer);

  std::copy(scg.x.begin(), scg.x.end(), params.values().begin());
  report.stop = scg.stop;
  report.epochs = scg.epochs;
  report.accepted_steps = scg.accepted_steps;

  TrainResult result;
  result.params = use_validation ? best : params;
  if (!use_validation) report.best_epoch = scg.epochs;
  const LossGradient final_lg = loss_and_gradient(result.params, train);
  report.final_train_loss = final_lg.loss;
  report.final_gradient_norm = std::sqrt(dot(final_lg.gradient, final_lg.gradient));
  report.final_validation_loss = use_validation ? best_val : 0.0;
  if (!result.params.finite()) throw TrainingError("training produced non-finite parameters");
  result.report = std::move(report);
  return result;
}

double ContextModel::score_reference(const BBox& box, double confidence, ClassId ref_class,
                                     std::span<const Detection> scene, std::size_t skip) const {
  const FeatureVector fv = build_feature_vector(box, confidence, scene, skip, relations, vocab);
  return score(network, network_input(fv, ref_class, vocab.size()));
}

std::string model_to_json(const ContextModel& model) {
  using detail::json;
  const NetworkParams& net = model.network;
  json j;
  j["format_version"] = kModelFormatVersion;
  j["metadata"] = {
      {"vocabulary", detail::vocabulary_to_json(model.vocab)},
      {"relation_config", detail::relation_config_to_json(model.relations)},
      {"input_dim", net.input_dim()},
      {"hidden", net.hidden_dim()},
      {"seed", model.seed},
  };
  auto vec = [](std::span<const double> s) { return json(std::vector<double>(s.begin(), s.end())); };
  j["weights"] = {
      {"W1", {{"rows", net.hidden_dim()}, {"cols", net.input_dim()}, {"data", vec(net.w1())}}},
      {"b1", vec(net.b1())},
      {"W2", {{"rows", NetworkParams::kOutputs}, {"cols", net.hidden_dim()}, {"data", vec(net.w2())}}},
      {"b2", vec(net.b2())},
  };
  return j.dump() + "\n";
}

ContextModel model_from_json(std::string_view text) {
  using detail::json;
  const json j = detail::parse_json(text, "model");
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kModelFormatVersion)
      throw ParseError("model: unsupported format_version " + std::to_string(version));
    const json& meta = j.at("metadata");
    ContextModel m;
    m.vocab = detail::vocabulary_from_json(meta.at("vocabulary"));
    m.relations = detail::relation_config_from_json(meta.at("relation_config"));
    m.seed = meta.at("seed").get<std::uint64_t>();
    const auto input = meta.at("input_dim").get<std::size_t>();
    const auto hidden = meta.at("hidden").get<std::size_t>();
    if (input != network_input_length(m.relations, m.vocab.size()))
      throw ParseError("model: input_dim " + std::to_string(input) +
                       " does not match the vocabulary and relation config");
    m.network = NetworkParams(input, hidden);

    const json& w = j.at("weights");
    auto fill = [](const json& src, std::span<double> dst, const char* name) {
      const auto values = src.get<std::vector<double>>();
      if (values.size() != dst.size())
        throw ParseError(std::string("model: weight block ") + name + " has " + std::to_string(values.size()) +
                         " values, expected " + std::to_string(dst.size()));
      std::copy(values.begin(), values.end(), dst.begin());
    };
    if (w.at("W1").at("rows").get<std::size_t>() != hidden || w.at("W1").at("cols").get<std::size_t>() != input)
      throw ParseError("model: W1 shape mismatch");
    if (w.at("W2").at("rows").get<std::size_t>() != NetworkParams::kOutputs ||
        w.at("W2").at("cols").get<std::size_t>() != hidden)
      throw ParseError("model: W2 shape mismatch");
    fill(w.at("W1").at("data"), m.network.w1(), "W1");
    fill(w.at("b1"), m.network.b1(), "b1");
    fill(w.at("W2").at("data"), m.network.w2(), "W2");
    fill(w.at("b2"), m.network.b2(), "b2");
    if (!m.network.finite()) throw ParseError("model: non-finite weight");
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("model: ") + e.what());
  } catch (const DataError& e) {
    throw ParseError(std::string("model: ") + e.what());
  }
}

}  // namespace ctxrel
