#include "fairgrad/penalties.hpp"

#include <cmath>

#include "fairgrad/errors.hpp"

namespace fairgrad::penalty {

NormOrder norm_order_from_name(const std::string& name) {
  if (name == "l1") return NormOrder::one;
  if (name == "l2") return NormOrder::two;
  if (name == "linf") return NormOrder::inf;
  throw ConfigError("unknown norm order \"" + name + "\" (expected l1, l2, or linf)");
}

std::string norm_order_name(NormOrder order) {
  switch (order) {
    case NormOrder::one: return "l1";
    case NormOrder::two: return "l2";
    case NormOrder::inf: return "linf";
  }
  throw ConfigError("unhandled norm order");
}

ad::Tensor norm_penalty(const stats::ViolationVector& v, NormOrder order) {
  switch (order) {
    case NormOrder::one:
      return ad::sum(v.values);
    case NormOrder::two:
      return ad::pow(ad::sum(ad::mul(v.values, v.values)), 0.5);
    case NormOrder::inf:
      return ad::max_coeff(v.values);
  }
  throw ConfigError("unhandled norm order");
}

ad::Tensor smoothmax_penalty(const stats::ViolationVector& v) {
  const double groups = static_cast<double>(v.values.size());
  return ad::logsumexp(v.values) - std::log(groups);
}

PenaltySpec::Kind penalty_kind_from_name(const std::string& name) {
  if (name == "norm") return PenaltySpec::Kind::norm;
  if (name == "smoothmax") return PenaltySpec::Kind::smoothmax;
  if (name == "projection") return PenaltySpec::Kind::projection;
  throw ConfigError("unknown penalty kind \"" + name +
                    "\" (expected norm, smoothmax, or projection)");
}

std::string penalty_kind_name(PenaltySpec::Kind kind) {
  switch (kind) {
    case PenaltySpec::Kind::norm: return "norm";
    case PenaltySpec::Kind::smoothmax: return "smoothmax";
    case PenaltySpec::Kind::projection: return "projection";
  }
  throw ConfigError("unhandled penalty kind");
}

ad::Tensor evaluate_penalty(const PenaltySpec& spec, const stats::StatisticDef& stat,
                            const stats::SampleBatch& batch, const ad::Tensor& h,
                            Eigen::VectorXd* warm_duals, ProjectionResult* solve_info) {
  switch (spec.kind) {
    case PenaltySpec::Kind::norm:
      return norm_penalty(stats::violation(stat, batch, h), spec.order);
    case PenaltySpec::Kind::smoothmax:
      return smoothmax_penalty(stats::violation(stat, batch, h));
    case PenaltySpec::Kind::projection: {
      for (Eigen::Index k = 0; k < batch.group_count(); ++k)
        if ((batch.sensitive.col(k).array() == 0.0).all())
          throw DegenerateGroupError(
              "batch has no samples in group " + std::to_string(k), k);
      SolverConfig config = spec.solver;
      if (warm_duals && warm_duals->size() != 0) config.warm_start = *warm_duals;
      ProjectionResult solved =
          solve_projection(spec.divergence, stat, batch, h.vector(), config);
      if (warm_duals) *warm_duals = solved.duals;
      ad::Tensor value = projection_penalty(spec.divergence, solved.f_star, h);
      if (solve_info) *solve_info = std::move(solved);
      return value;
    }
  }
  throw ConfigError("unhandled penalty kind");
}

}  // namespace fairgrad::penalty
