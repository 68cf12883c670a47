#include "fairgrad/model.hpp"

#include <chrono>
#include <cmath>
#include <random>

#include "fairgrad/data.hpp"
#include "fairgrad/errors.hpp"

namespace fairgrad::model {

namespace {

constexpr double kLogitClamp = 30.0;

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

ad::Tensor matrix_constant(const Eigen::MatrixXd& m) {
  const RowMatrix row_major = m;
  return ad::Tensor::constant(
      Eigen::Map<const Eigen::ArrayXd>(row_major.data(), row_major.size()),
      ad::Shape{m.rows(), m.cols()});
}

}  // namespace

MlpParams MlpParams::init(Eigen::Index input_dim, const std::vector<Eigen::Index>& hidden,
                          std::uint64_t seed) {
  if (input_dim < 1) throw ConfigError("mlp needs input_dim >= 1");
  for (const Eigen::Index width : hidden)
    if (width < 1) throw ConfigError("mlp hidden widths must be >= 1");

  std::vector<Eigen::Index> dims;
  dims.push_back(input_dim);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(1);

  std::mt19937_64 rng(data::mix_seed(seed, 0x1417));
  MlpParams params;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const Eigen::Index in = dims[l];
    const Eigen::Index out = dims[l + 1];
    const double limit = 1.0 / std::sqrt(static_cast<double>(in));
    RowMatrix w(in, out);
    for (Eigen::Index i = 0; i < in; ++i)
      for (Eigen::Index j = 0; j < out; ++j) w(i, j) = (2.0 * uniform01(rng) - 1.0) * limit;
    Eigen::VectorXd b(out);
    for (Eigen::Index j = 0; j < out; ++j) b(j) = (2.0 * uniform01(rng) - 1.0) * limit;
    params.weights.push_back(std::move(w));
    params.biases.push_back(std::move(b));
  }
  return params;
}

Eigen::Index MlpParams::input_dim() const {
  if (weights.empty()) throw ConfigError("mlp has no layers");
  return weights.front().rows();
}

Eigen::Index MlpParams::parameter_count() const {
  Eigen::Index count = 0;
  for (const auto& w : weights) count += w.size();
  for (const auto& b : biases) count += b.size();
  return count;
}

void MlpParams::validate() const {
  if (weights.empty() || weights.size() != biases.size())
    throw ConfigError("mlp parameter lists are empty or mismatched");
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (biases[l].size() != weights[l].cols())
      throw ShapeError("layer " + std::to_string(l) + " bias width " +
                       std::to_string(biases[l].size()) + " does not match weight columns " +
                       std::to_string(weights[l].cols()));
    if (l + 1 < weights.size() && weights[l].cols() != weights[l + 1].rows())
      throw ShapeError("layer " + std::to_string(l) + " output width " +
                       std::to_string(weights[l].cols()) + " does not chain into layer " +
                       std::to_string(l + 1));
  }
  if (weights.back().cols() != 1)
    throw ShapeError("final layer must emit one logit, got width " +
                     std::to_string(weights.back().cols()));
}

BoundParams bind(ad::Tape& tape, const MlpParams& params) {
  params.validate();
  BoundParams bound;
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    const auto& w = params.weights[l];
    bound.weights.push_back(tape.leaf(Eigen::Map<const Eigen::ArrayXd>(w.data(), w.size()),
                                      ad::Shape{w.rows(), w.cols()}, true));
    bound.biases.push_back(tape.leaf(params.biases[l], true));
  }
  return bound;
}

BoundParams bind_constant(const MlpParams& params) {
  params.validate();
  BoundParams bound;
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    const auto& w = params.weights[l];
    bound.weights.push_back(ad::Tensor::constant(
        Eigen::Map<const Eigen::ArrayXd>(w.data(), w.size()), ad::Shape{w.rows(), w.cols()}));
    bound.biases.push_back(ad::Tensor::constant(params.biases[l]));
  }
  return bound;
}

ad::Tensor forward(const BoundParams& params, const Eigen::MatrixXd& features,
                   double surrogate_scale) {
  if (params.weights.empty()) throw ConfigError("forward on an empty model");
  if (!(surrogate_scale > 0.0))
    throw ConfigError("surrogate_scale must be > 0, got " + std::to_string(surrogate_scale));
  if (features.cols() != params.weights.front().shape()[0])
    throw ShapeError("forward got " + std::to_string(features.cols()) + " features, model expects " +
                     std::to_string(params.weights.front().shape()[0]));

  ad::Tensor activations = matrix_constant(features);
  const std::size_t layers = params.weights.size();
  for (std::size_t l = 0; l < layers; ++l) {
    ad::Tensor z = ad::add_rowwise(ad::matmul(activations, params.weights[l]), params.biases[l]);
    activations = l + 1 < layers ? ad::relu(z) : z;
  }
  const ad::Tensor logits = ad::reshape(activations, ad::Shape{features.rows()});
  return ad::sigmoid(ad::clamp(surrogate_scale * logits, -kLogitClamp, kLogitClamp));
}

Eigen::VectorXd predict(const MlpParams& params, const Eigen::MatrixXd& features,
                        double surrogate_scale) {
  return forward(bind_constant(params), features, surrogate_scale).vector();
}

ad::Tensor bce_loss(const ad::Tensor& probabilities, const Eigen::VectorXd& labels) {
  if (probabilities.rank() != 1 || probabilities.size() != labels.size())
    throw ShapeError("bce_loss got " + std::to_string(probabilities.size()) +
                     " probabilities for " + std::to_string(labels.size()) + " labels");
  const auto& p = probabilities.values();
  if ((p <= 0.0).any() || (p >= 1.0).any())
    throw DomainError("bce_loss needs probabilities strictly inside (0,1)");
  const ad::Tensor y = ad::Tensor::constant(labels);
  return ad::neg(ad::mean(ad::add(ad::mul(y, ad::log(probabilities)),
                                  ad::mul(1.0 - y, ad::log(1.0 - probabilities)))));
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (warmup_epochs < 0 || warmup_epochs > epochs)
    throw ConfigError("warmup_epochs must lie in [0, epochs]");
  if (!(strength >= 0.0)) throw ConfigError("strength must be >= 0");
  if (!(surrogate_scale > 0.0)) throw ConfigError("surrogate_scale must be > 0");
  for (const Eigen::Index width : hidden)
    if (width < 1) throw ConfigError("hidden layer widths must be >= 1");
  stats::make_statistic(statistic);  // throws on unknown names
}

ObjectiveResult objective(const BoundParams& params, const stats::SampleBatch& batch,
                          const stats::StatisticDef& stat, const penalty::PenaltySpec& spec,
                          double strength, double surrogate_scale,
                          Eigen::VectorXd* warm_duals) {
  batch.validate();
  ObjectiveResult result;
  result.probabilities = forward(params, batch.features, surrogate_scale);
  const ad::Tensor loss = bce_loss(result.probabilities, batch.labels);
  result.loss_value = loss.scalar();
  result.value = loss;
  if (strength > 0.0) {
    try {
      const ad::Tensor term =
          penalty::evaluate_penalty(spec, stat, batch, result.probabilities, warm_duals);
      result.penalty_value = term.scalar();
      result.value = loss + strength * term;
    } catch (const DegenerateGroupError&) {
      result.penalty_skipped = true;
    }
  }
  return result;
}

Gradients extract_gradients(const ad::GradientMap& map, const BoundParams& bound,
                            const MlpParams& shape) {
  Gradients grads;
  for (std::size_t l = 0; l < bound.weights.size(); ++l) {
    const Eigen::ArrayXd& gw = map.at(bound.weights[l]);
    grads.weights.push_back(Eigen::Map<const RowMatrix>(gw.data(), shape.weights[l].rows(),
                                                        shape.weights[l].cols()));
    grads.biases.push_back(map.vector_at(bound.biases[l]));
  }
  return grads;
}

AdamState AdamState::like(const MlpParams& params) {
  AdamState state;
  for (const auto& w : params.weights) {
    state.weight_m.push_back(RowMatrix::Zero(w.rows(), w.cols()));
    state.weight_v.push_back(RowMatrix::Zero(w.rows(), w.cols()));
  }
  for (const auto& b : params.biases) {
    state.bias_m.push_back(Eigen::VectorXd::Zero(b.size()));
    state.bias_v.push_back(Eigen::VectorXd::Zero(b.size()));
  }
  return state;
}

void adam_step(MlpParams& params, const Gradients& gradients, AdamState& state,
               double learning_rate) {
  const std::size_t layers = params.weights.size();
  if (gradients.weights.size() != layers || gradients.biases.size() != layers ||
      state.weight_m.size() != layers)
    throw ShapeError("adam_step got mismatched layer counts");
  for (std::size_t l = 0; l < layers; ++l) {
    if (gradients.weights[l].rows() != params.weights[l].rows() ||
        gradients.weights[l].cols() != params.weights[l].cols() ||
        gradients.biases[l].size() != params.biases[l].size())
      throw ShapeError("adam_step gradient shapes do not match layer " + std::to_string(l));
    if (!gradients.weights[l].allFinite() || !gradients.biases[l].allFinite())
      throw NumericError("adam_step got a non-finite gradient at layer " + std::to_string(l));
  }

  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  state.step += 1;
  const double correction1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));

  const auto update = [&](auto& p, auto& m, auto& v, const auto& g) {
    m = beta1 * m + (1.0 - beta1) * g;
    v.array() = beta2 * v.array() + (1.0 - beta2) * g.array().square();
    p.array() -= learning_rate * (m.array() / correction1) /
                 ((v.array() / correction2).sqrt() + eps);
  };
  for (std::size_t l = 0; l < layers; ++l) {
    update(params.weights[l], state.weight_m[l], state.weight_v[l], gradients.weights[l]);
    update(params.biases[l], state.bias_m[l], state.bias_v[l], gradients.biases[l]);
  }
}

TrainOutcome train(const stats::SampleBatch& train_set, const TrainConfig& config) {
  config.validate();
  train_set.validate();
  const stats::StatisticDef stat = stats::make_statistic(config.statistic);
  const auto started = std::chrono::steady_clock::now();

  TrainOutcome outcome;
  outcome.params = MlpParams::init(train_set.features.cols(), config.hidden, config.seed);
  AdamState adam = AdamState::like(outcome.params);
  Eigen::VectorXd warm_duals;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const double strength_now = epoch <= config.warmup_epochs ? 0.0 : config.strength;
    const auto batches = data::batch_indices(train_set.size(), config.batch_size, config.seed,
                                             static_cast<std::uint64_t>(epoch));
    EpochStats stats_row;
    stats_row.epoch = epoch;
    stats_row.strength = strength_now;
    double loss_sum = 0.0;
    double penalty_sum = 0.0;
    Eigen::Index penalty_batches = 0;

    for (const auto& indices : batches) {
      const stats::SampleBatch batch = data::subset(train_set, indices);
      ad::Tape tape;
      const BoundParams bound = bind(tape, outcome.params);
      const ObjectiveResult step = objective(bound, batch, stat, config.penalty, strength_now,
                                             config.surrogate_scale, &warm_duals);
      const ad::GradientMap grads_map = tape.backward(step.value);
      const Gradients grads = extract_gradients(grads_map, bound, outcome.params);
      adam_step(outcome.params, grads, adam, config.learning_rate);

      loss_sum += step.loss_value;
      if (strength_now > 0.0 && !step.penalty_skipped) {
        penalty_sum += step.penalty_value;
        ++penalty_batches;
      }
      if (step.penalty_skipped) ++stats_row.skipped_batches;
    }

    stats_row.mean_loss = loss_sum / static_cast<double>(batches.size());
    stats_row.mean_penalty =
        penalty_batches > 0 ? penalty_sum / static_cast<double>(penalty_batches) : 0.0;
    outcome.skipped_batches += stats_row.skipped_batches;
    outcome.epochs.push_back(stats_row);
  }

  outcome.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return outcome;
}

}  // namespace fairgrad::model
