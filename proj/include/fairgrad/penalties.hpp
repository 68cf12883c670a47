#ifndef FAIRGRAD_PENALTIES_HPP
#define FAIRGRAD_PENALTIES_HPP

#include <string>

#include "fairgrad/projection.hpp"
#include "fairgrad/statistics.hpp"
#include "fairgrad/tensor.hpp"

namespace fairgrad::penalty {

enum class NormOrder { one, two, inf };

NormOrder norm_order_from_name(const std::string& name);
std::string norm_order_name(NormOrder order);

/// Norm of the violation vector. All three orders vanish exactly when every
/// group matches the overall statistic and are positive otherwise.
ad::Tensor norm_penalty(const stats::ViolationVector& v, NormOrder order);

/// logsumexp(v) - log d: a smooth stand-in for the max violation, always
/// within log d below it and never above.
ad::Tensor smoothmax_penalty(const stats::ViolationVector& v);

struct PenaltySpec {
  enum class Kind { norm, smoothmax, projection };

  Kind kind = Kind::norm;
  NormOrder order = NormOrder::one;        // norm only
  Divergence divergence = Divergence::kl;  // projection only
  SolverConfig solver;                     // projection only
};

PenaltySpec::Kind penalty_kind_from_name(const std::string& name);
std::string penalty_kind_name(PenaltySpec::Kind kind);

/// One penalty term for a batch under the given fairness notion, ready to sit
/// in a training objective. h must live on a tape.
///
/// For the projection kind the solver runs on h's current values; pass
/// warm_duals to reuse multipliers across batches (updated in place) and
/// solve_info to observe the inner solve. Both are ignored by the violation
/// kinds. Raises DegenerateGroupError for batches missing a whole group so a
/// training loop can skip them uniformly across penalty kinds.
ad::Tensor evaluate_penalty(const PenaltySpec& spec, const stats::StatisticDef& stat,
                            const stats::SampleBatch& batch, const ad::Tensor& h,
                            Eigen::VectorXd* warm_duals = nullptr,
                            ProjectionResult* solve_info = nullptr);

}  // namespace fairgrad::penalty

#endif
