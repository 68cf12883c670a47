#ifndef FAIRGRAD_STATISTICS_HPP
#define FAIRGRAD_STATISTICS_HPP

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fairgrad/tensor.hpp"

namespace fairgrad::stats {

/// One batch of samples. `sensitive` holds non-negative group weights, one
/// column per group; columns may overlap (multiple axes) or form a partition
/// (one-hot rows). Sensitive columns are never model inputs.
struct SampleBatch {
  Eigen::MatrixXd features;   // n x d_x
  Eigen::VectorXd labels;     // n, each 0 or 1
  Eigen::MatrixXd sensitive;  // n x d_s
  std::optional<Eigen::VectorXd> condition_weights;  // per-sample weights for conditional parity

  Eigen::Index size() const { return labels.size(); }
  Eigen::Index group_count() const { return sensitive.cols(); }

  /// Throws DataError on inconsistent sizes, non-binary labels, negative
  /// group weights or non-finite entries. With require_partition also demands
  /// one-hot sensitive rows.
  void validate(bool require_partition = false) const;
};

/// Rows all one-hot (exactly one 1, rest 0).
bool rows_are_one_hot(const Eigen::MatrixXd& sensitive);

/// Per-sample coefficients of a linear-fractional statistic
///   stat(k; f) = E[S_k (a0 + f b0)] / E[S_k (a1 + f b1)].
struct Coefficients {
  Eigen::VectorXd a0, b0, a1, b1;
};

/// A fairness notion expressed through its coefficient vectors. The evaluator
/// sees features, labels and condition weights only; group membership and
/// scores cannot leak into the coefficients by construction.
class StatisticDef {
 public:
  using Evaluator = std::function<Coefficients(
      const Eigen::MatrixXd& features, const Eigen::VectorXd& labels,
      const std::optional<Eigen::VectorXd>& condition_weights)>;

  StatisticDef(std::string name, bool linear, Evaluator evaluator);

  const std::string& name() const { return name_; }
  /// True when b1 is identically zero, making the statistic linear in f.
  bool is_linear() const { return linear_; }

  Coefficients coefficients(const SampleBatch& batch) const;

 private:
  std::string name_;
  bool linear_;
  Evaluator evaluator_;
};

/// Builds one of the known notions by name: demographic_parity,
/// conditional_demographic_parity, equal_opportunity, false_positive_parity,
/// predictive_parity, false_omission_parity, accuracy_equality,
/// treatment_equality.
StatisticDef make_statistic(const std::string& name);

const std::vector<std::string>& statistic_names();

/// Per-group values stat(k; h) plus the overall value (no group weighting).
/// Tensors, so gradients flow back to h when it is on a tape.
struct GroupStatistics {
  std::vector<ad::Tensor> per_group;
  ad::Tensor overall;
};

/// Raises DegenerateGroupError when a group's denominator vanishes
/// (|E[S_k (a1 + h b1)]| below 1e-12).
GroupStatistics group_statistics(const StatisticDef& stat, const SampleBatch& batch,
                                 const ad::Tensor& h);

/// v_k = |stat(k;h) / overall - 1|, or |stat(k;h)| when the overall value is
/// zero (fallback_used reports which form applied).
struct ViolationVector {
  ad::Tensor values;  // shape {d_s}, entries >= 0
  bool fallback_used = false;
};

ViolationVector violation(const StatisticDef& stat, const SampleBatch& batch,
                          const ad::Tensor& h);

/// The statistic pinned to value c, rewritten as one linear constraint per
/// group: (1/n) sum_i S_ik (alpha_i + f_i beta_i) = 0 with
/// alpha = a0 - c a1 and beta = b0 - c b1.
struct LinearConstraintSystem {
  Eigen::VectorXd alpha_c, beta_c;
  Eigen::MatrixXd sensitive;
  double c = 0.0;

  Eigen::Index group_count() const { return sensitive.cols(); }
  double residual(Eigen::Index group, const Eigen::VectorXd& f) const;
  Eigen::VectorXd residuals(const Eigen::VectorXd& f) const;
};

LinearConstraintSystem fixed_constraints(const StatisticDef& stat, const SampleBatch& batch,
                                         double c);

}  // namespace fairgrad::stats

#endif
