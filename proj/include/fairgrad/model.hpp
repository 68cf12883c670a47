#ifndef FAIRGRAD_MODEL_HPP
#define FAIRGRAD_MODEL_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "fairgrad/penalties.hpp"
#include "fairgrad/statistics.hpp"
#include "fairgrad/tensor.hpp"

namespace fairgrad::model {

/// Row-major so parameter blocks bind to tape arrays without reshuffling.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct MlpParams {
  std::vector<RowMatrix> weights;       // layer l: in x out
  std::vector<Eigen::VectorXd> biases;  // layer l: out

  /// Uniform init in +-1/sqrt(fan_in) per layer, seeded. The final layer
  /// always emits one logit.
  static MlpParams init(Eigen::Index input_dim, const std::vector<Eigen::Index>& hidden,
                        std::uint64_t seed);

  Eigen::Index layer_count() const { return static_cast<Eigen::Index>(weights.size()); }
  Eigen::Index input_dim() const;
  Eigen::Index parameter_count() const;
  void validate() const;  // layer dimensions chain, final width 1
};

/// Tape-recorded views of the parameters (gradients flow) or constants.
struct BoundParams {
  std::vector<ad::Tensor> weights, biases;
};
BoundParams bind(ad::Tape& tape, const MlpParams& params);
BoundParams bind_constant(const MlpParams& params);

/// Rectifier hidden layers, then sigmoid(clamp(scale * logit, +-30)): outputs
/// stay strictly interior however hard the logits saturate.
ad::Tensor forward(const BoundParams& params, const Eigen::MatrixXd& features,
                   double surrogate_scale = 1.0);

/// Plain prediction without recording anything.
Eigen::VectorXd predict(const MlpParams& params, const Eigen::MatrixXd& features,
                        double surrogate_scale = 1.0);

ad::Tensor bce_loss(const ad::Tensor& probabilities, const Eigen::VectorXd& labels);

struct TrainConfig {
  double learning_rate = 0.001;
  Eigen::Index batch_size = 4096;
  int epochs = 100;
  int warmup_epochs = 20;  // penalty strength is 0 during these epochs
  double strength = 0.0;   // weight of the fairness term
  penalty::PenaltySpec penalty;
  std::string statistic = "demographic_parity";
  std::uint64_t seed = 0;
  double surrogate_scale = 1.0;
  std::vector<Eigen::Index> hidden = {256, 128, 32};

  void validate() const;
};

struct ObjectiveResult {
  ad::Tensor value;          // loss + strength * penalty (penalty absent when skipped)
  ad::Tensor probabilities;  // forward output, shared with the objective tape
  double loss_value = 0.0;
  double penalty_value = 0.0;
  bool penalty_skipped = false;  // batch was degenerate for the statistic
};

/// One mini-batch objective on a single tape. strength 0 skips the penalty
/// entirely; a degenerate batch (missing group) falls back to the plain loss
/// and flags penalty_skipped.
ObjectiveResult objective(const BoundParams& params, const stats::SampleBatch& batch,
                          const stats::StatisticDef& stat, const penalty::PenaltySpec& spec,
                          double strength, double surrogate_scale,
                          Eigen::VectorXd* warm_duals = nullptr);

struct Gradients {
  std::vector<RowMatrix> weights;
  std::vector<Eigen::VectorXd> biases;
};
Gradients extract_gradients(const ad::GradientMap& map, const BoundParams& bound,
                            const MlpParams& shape);

struct AdamState {
  std::vector<RowMatrix> weight_m, weight_v;
  std::vector<Eigen::VectorXd> bias_m, bias_v;
  long step = 0;

  static AdamState like(const MlpParams& params);
};

/// Standard Adam update: decay 0.9/0.999, epsilon 1e-8, bias correction.
/// Rejects non-finite gradients before touching any state.
void adam_step(MlpParams& params, const Gradients& gradients, AdamState& state,
               double learning_rate);

struct EpochStats {
  int epoch = 0;  // 1-based
  double mean_loss = 0.0;
  double mean_penalty = 0.0;  // over batches where the penalty was evaluated
  double strength = 0.0;      // effective strength this epoch (0 during warmup)
  Eigen::Index skipped_batches = 0;
};

struct TrainOutcome {
  MlpParams params;
  std::vector<EpochStats> epochs;
  Eigen::Index skipped_batches = 0;
  double seconds = 0.0;
};

/// Full training loop: seeded init, per-epoch reshuffled mini-batches, Adam,
/// warmup, degenerate-batch skipping, projection dual warm starts across
/// batches. Deterministic given the config.
TrainOutcome train(const stats::SampleBatch& train_set, const TrainConfig& config);

}  // namespace fairgrad::model

#endif
