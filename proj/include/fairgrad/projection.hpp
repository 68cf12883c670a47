#ifndef FAIRGRAD_PROJECTION_HPP
#define FAIRGRAD_PROJECTION_HPP

#include <Eigen/Dense>
#include <optional>
#include <string>

#include "fairgrad/statistics.hpp"
#include "fairgrad/tensor.hpp"

namespace fairgrad::penalty {

enum class Divergence { kl, js, sed };

Divergence divergence_from_name(const std::string& name);
std::string divergence_name(Divergence kind);

/// Per-sample divergence between score f and reference h (both Bernoulli
/// parameters). h must be strictly interior for kl and js; f may touch 0 or 1
/// (0 log 0 reads as 0). sed is 2 (f - h)^2.
double divergence(Divergence kind, double f, double h);
Eigen::ArrayXd divergence_array(Divergence kind, const Eigen::ArrayXd& f,
                                const Eigen::ArrayXd& h);
double mean_divergence(Divergence kind, const Eigen::VectorXd& f, const Eigen::VectorXd& h);

struct SolverConfig {
  int max_iterations = 10;
  double residual_tolerance = 1e-6;
  /// Initial duals, one per group (size 0 or absent means a cold start).
  std::optional<Eigen::VectorXd> warm_start;
  /// Pin the statistic to this value instead of the batch's overall value.
  std::optional<double> fixed_target;
};

struct ProjectionResult {
  Eigen::VectorXd f_star;       // feasible scores in [0,1], interior for kl/js
  Eigen::VectorXd duals;        // one multiplier per group (0 for vacuous groups)
  Eigen::VectorXd residuals;    // per-group constraint residuals at f_star
  Eigen::VectorXd dual_values;  // dual objective after each accepted step
  int iterations = 0;           // accepted Newton steps
  bool converged = false;       // dual residual met the tolerance within the cap
  double target = 0.0;          // the pinned statistic value
};

/// Finds the divergence-nearest score vector whose per-group statistics all
/// equal the target (the batch's overall value unless overridden).
///
/// The equality system is linear in f once the target is pinned, so the
/// solve runs as damped Newton ascent on the dual, with the per-sample
/// minimizer in closed form (kl: shifted sigmoid of logit h; sed: clamped
/// shift of h; js: bracketed bisection). A final Euclidean restoration step
/// makes the returned scores exactly feasible, which keeps the reported
/// divergence an upper bound on the true minimum when the iteration cap cuts
/// the ascent short.
///
/// Groups whose constraint cannot be moved by f raise InfeasibleError unless
/// the constraint already holds, in which case they are dropped as vacuous.
ProjectionResult solve_projection(Divergence kind, const stats::StatisticDef& stat,
                                  const stats::SampleBatch& batch, const Eigen::VectorXd& h,
                                  const SolverConfig& config = {});

/// Mean divergence from the fixed projection to h, differentiable in h only
/// (the projection enters as a constant).
ad::Tensor projection_penalty(Divergence kind, const Eigen::VectorXd& f_star,
                              const ad::Tensor& h);

}  // namespace fairgrad::penalty

#endif
