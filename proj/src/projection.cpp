#include "fairgrad/projection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "fairgrad/errors.hpp"

namespace fairgrad::penalty {

namespace {

constexpr double kInterior = 1e-12;      // kl/js scores live in [eps, 1-eps]
constexpr double kRestoreTol = 1e-11;    // feasibility restoration target
constexpr double kDenominatorFloor = 1e-12;

double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

double logit(double p) { return std::log(p) - std::log1p(-p); }

double stable_sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double binary_kl(double f, double h) {
  return xlogx(f) - f * std::log(h) + xlogx(1.0 - f) - (1.0 - f) * std::log1p(-h);
}

void check_reference_domain(Divergence kind, const Eigen::VectorXd& h) {
  for (Eigen::Index i = 0; i < h.size(); ++i) {
    const double v = h(i);
    if (!std::isfinite(v) || v < 0.0 || v > 1.0)
      throw DomainError("projection reference score " + std::to_string(i) +
                        " outside [0,1]: " + std::to_string(v));
    if (kind != Divergence::sed && (v <= 0.0 || v >= 1.0))
      throw DomainError("projection under kl/js needs interior reference scores, got " +
                        std::to_string(v) + " at sample " + std::to_string(i));
  }
}

/// Root of 0.5 (logit f - logit m) + u = 0 with m = (f + h) / 2. The left
/// side is increasing in f and spans -inf..+inf over the open interval, so a
/// plain bisection on a hard bracket is enough.
double js_primal(double h, double u) {
  const auto phi = [&](double f) {
    const double m = 0.5 * (f + h);
    return 0.5 * (logit(f) - logit(m)) + u;
  };
  double lo = kInterior;
  double hi = 1.0 - kInterior;
  if (phi(lo) >= 0.0) return lo;
  if (phi(hi) <= 0.0) return hi;
  for (int it = 0; it < 100 && hi - lo > kInterior; ++it) {
    const double mid = 0.5 * (lo + hi);
    (phi(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

Divergence divergence_from_name(const std::string& name) {
  if (name == "kl") return Divergence::kl;
  if (name == "js") return Divergence::js;
  if (name == "sed") return Divergence::sed;
  throw ConfigError("unknown divergence \"" + name + "\" (expected kl, js, or sed)");
}

std::string divergence_name(Divergence kind) {
  switch (kind) {
    case Divergence::kl: return "kl";
    case Divergence::js: return "js";
    case Divergence::sed: return "sed";
  }
  throw ConfigError("unhandled divergence kind");
}

double divergence(Divergence kind, double f, double h) {
  if (!(f >= 0.0 && f <= 1.0))
    throw DomainError("divergence needs f in [0,1], got " + std::to_string(f));
  if (!(h >= 0.0 && h <= 1.0))
    throw DomainError("divergence needs h in [0,1], got " + std::to_string(h));
  switch (kind) {
    case Divergence::kl:
      if (h <= 0.0 || h >= 1.0)
        throw DomainError("kl divergence needs interior h, got " + std::to_string(h));
      return binary_kl(f, h);
    case Divergence::js: {
      if (h <= 0.0 || h >= 1.0)
        throw DomainError("js divergence needs interior h, got " + std::to_string(h));
      const double m = 0.5 * (f + h);
      return 0.5 * (binary_kl(f, m) + binary_kl(h, m));
    }
    case Divergence::sed:
      return 2.0 * (f - h) * (f - h);
  }
  throw ConfigError("unhandled divergence kind");
}

Eigen::ArrayXd divergence_array(Divergence kind, const Eigen::ArrayXd& f,
                                const Eigen::ArrayXd& h) {
  if (f.size() != h.size())
    throw ShapeError("divergence_array size mismatch: " + std::to_string(f.size()) +
                     " vs " + std::to_string(h.size()));
  Eigen::ArrayXd out(f.size());
  for (Eigen::Index i = 0; i < f.size(); ++i) out(i) = divergence(kind, f(i), h(i));
  return out;
}

double mean_divergence(Divergence kind, const Eigen::VectorXd& f, const Eigen::VectorXd& h) {
  if (f.size() == 0) throw ShapeError("mean_divergence over empty vectors");
  return divergence_array(kind, f.array(), h.array()).mean();
}

ProjectionResult solve_projection(Divergence kind, const stats::StatisticDef& stat,
                                  const stats::SampleBatch& batch, const Eigen::VectorXd& h,
                                  const SolverConfig& config) {
  batch.validate();
  const Eigen::Index n = batch.size();
  const Eigen::Index d = batch.group_count();
  if (h.size() != n)
    throw ShapeError("projection got " + std::to_string(h.size()) + " scores for " +
                     std::to_string(n) + " samples");
  check_reference_domain(kind, h);
  if (config.max_iterations < 0) throw ConfigError("max_iterations must be >= 0");
  if (!(config.residual_tolerance >= 0.0))
    throw ConfigError("residual_tolerance must be >= 0");

  const stats::Coefficients co = stat.coefficients(batch);
  double target;
  if (config.fixed_target) {
    target = *config.fixed_target;
  } else {
    const double num = (co.a0.array() + h.array() * co.b0.array()).mean();
    const double den = (co.a1.array() + h.array() * co.b1.array()).mean();
    if (std::abs(den) < kDenominatorFloor)
      throw DegenerateGroupError("overall statistic denominator vanished for " + stat.name(),
                                 -1);
    target = num / den;
  }

  const stats::LinearConstraintSystem sys = stats::fixed_constraints(stat, batch, target);
  const Eigen::ArrayXd alpha = sys.alpha_c.array();
  const Eigen::ArrayXd beta = sys.beta_c.array();

  // Split the groups into those whose constraint actually depends on f and
  // those it cannot move. The latter must already hold or no f satisfies the
  // system.
  const double vacuous_tol = std::max(config.residual_tolerance, 1e-12);
  std::vector<Eigen::Index> active;
  for (Eigen::Index k = 0; k < d; ++k) {
    const Eigen::ArrayXd s = batch.sensitive.col(k).array();
    const bool movable = ((s * beta) != 0.0).any();
    if (movable) {
      active.push_back(k);
      continue;
    }
    const double base = (s * alpha).sum() / static_cast<double>(n);
    if (std::abs(base) > vacuous_tol)
      throw InfeasibleError("constraint for group " + std::to_string(k) + " under " +
                                stat.name() + " is fixed at residual " + std::to_string(base),
                            k);
  }
  const Eigen::Index m = static_cast<Eigen::Index>(active.size());

  ProjectionResult result;
  result.target = target;
  result.duals = Eigen::VectorXd::Zero(d);

  if (m == 0) {
    result.f_star = h;
    if (kind != Divergence::sed)
      result.f_star = result.f_star.cwiseMax(kInterior).cwiseMin(1.0 - kInterior);
    result.residuals = sys.residuals(result.f_star);
    result.converged = true;
    return result;
  }

  Eigen::MatrixXd sensitive_active(n, m);
  for (Eigen::Index j = 0; j < m; ++j)
    sensitive_active.col(j) = batch.sensitive.col(active[static_cast<size_t>(j)]);

  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(m);
  if (config.warm_start && config.warm_start->size() != 0) {
    if (config.warm_start->size() != d)
      throw ConfigError("warm_start has " + std::to_string(config.warm_start->size()) +
                        " duals for " + std::to_string(d) + " groups");
    for (Eigen::Index j = 0; j < m; ++j)
      lambda(j) = (*config.warm_start)(active[static_cast<size_t>(j)]);
  }

  Eigen::ArrayXd logit_h;
  if (kind == Divergence::kl) {
    logit_h.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) logit_h(i) = logit(h(i));
  }

  // Per-sample minimizer of D(f) + u f for the current duals, plus the
  // inverse curvature 1/D'' used by the dual Hessian (0 where a clamp is
  // pinning the sample).
  const auto primal = [&](const Eigen::VectorXd& lam, Eigen::ArrayXd& f,
                          Eigen::ArrayXd& inv_curv) {
    const Eigen::ArrayXd u = beta * (sensitive_active * lam).array();
    switch (kind) {
      case Divergence::kl:
        f = (logit_h - u).unaryExpr([](double z) { return stable_sigmoid(z); });
        f = f.max(kInterior).min(1.0 - kInterior);
        inv_curv = f * (1.0 - f);
        break;
      case Divergence::sed: {
        const Eigen::ArrayXd raw = h.array() - u / 4.0;
        f = raw.max(0.0).min(1.0);
        inv_curv = ((raw > 0.0) && (raw < 1.0)).select(Eigen::ArrayXd::Constant(n, 0.25),
                                                       Eigen::ArrayXd::Zero(n));
        break;
      }
      case Divergence::js: {
        f.resize(n);
        inv_curv.resize(n);
        for (Eigen::Index i = 0; i < n; ++i) {
          f(i) = js_primal(h(i), u(i));
          const double mi = 0.5 * (f(i) + h(i));
          const double curv =
              0.5 * (1.0 / (f(i) * (1.0 - f(i))) - 0.5 / (mi * (1.0 - mi)));
          inv_curv(i) = curv > 0.0 ? 1.0 / curv : 0.0;
        }
        break;
      }
    }
  };

  const auto dual_value = [&](const Eigen::VectorXd& lam, const Eigen::ArrayXd& f) {
    const Eigen::ArrayXd t = (sensitive_active * lam).array();
    return (divergence_array(kind, f, h.array()) + beta * t * f + t * alpha).mean();
  };

  const auto active_residuals = [&](const Eigen::ArrayXd& f) {
    Eigen::VectorXd r(m);
    for (Eigen::Index j = 0; j < m; ++j)
      r(j) = sys.residual(active[static_cast<size_t>(j)], f.matrix());
    return r;
  };

  Eigen::ArrayXd f, inv_curv;
  primal(lambda, f, inv_curv);
  Eigen::VectorXd r = active_residuals(f);
  double g = dual_value(lambda, f);

  Eigen::VectorXd best_lambda = lambda;
  Eigen::ArrayXd best_f = f;
  double best_gap = r.lpNorm<Eigen::Infinity>();

  std::vector<double> dual_trace;
  dual_trace.push_back(g);

  int iterations = 0;
  while (r.lpNorm<Eigen::Infinity>() > config.residual_tolerance &&
         iterations < config.max_iterations) {
    // The negated dual Hessian (1/n) sum_i s_ij s_il beta_i^2 / D'' is PSD,
    // so a shifted LDLT always yields an ascent direction after enough
    // damping.
    Eigen::MatrixXd neg_hess = Eigen::MatrixXd::Zero(m, m);
    const Eigen::ArrayXd w = beta.square() * inv_curv / static_cast<double>(n);
    for (Eigen::Index j = 0; j < m; ++j)
      for (Eigen::Index l = j; l < m; ++l) {
        neg_hess(j, l) = (sensitive_active.col(j).array() *
                          sensitive_active.col(l).array() * w)
                             .sum();
        neg_hess(l, j) = neg_hess(j, l);
      }

    double shift = 0.0;
    Eigen::VectorXd step;
    for (int attempt = 0; attempt < 60; ++attempt) {
      Eigen::MatrixXd shifted = neg_hess;
      shifted.diagonal().array() += shift;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(shifted);
      if (ldlt.info() == Eigen::Success) {
        step = ldlt.solve(r);
        if (step.allFinite() && r.dot(step) > 0.0) break;
      }
      step.setZero();
      shift = shift == 0.0 ? std::max(1e-12, 1e-8 * neg_hess.trace()) : shift * 10.0;
    }
    if (step.size() == 0 || step.isZero(0.0)) break;

    const double slope = r.dot(step);
    double stride = 1.0;
    Eigen::VectorXd trial_lambda;
    Eigen::ArrayXd trial_f, trial_curv;
    double trial_g = g;
    bool accepted = false;
    for (int bt = 0; bt < 45; ++bt) {
      trial_lambda = lambda + stride * step;
      primal(trial_lambda, trial_f, trial_curv);
      trial_g = dual_value(trial_lambda, trial_f);
      if (trial_g >= g + 1e-4 * stride * slope) {
        accepted = true;
        break;
      }
      stride *= 0.5;
    }
    if (!accepted) break;

    lambda = trial_lambda;
    f = trial_f;
    inv_curv = trial_curv;
    g = trial_g;
    r = active_residuals(f);
    ++iterations;
    dual_trace.push_back(g);

    const double gap = r.lpNorm<Eigen::Infinity>();
    if (gap < best_gap) {
      best_gap = gap;
      best_lambda = lambda;
      best_f = f;
    }
  }

  result.converged = best_gap <= config.residual_tolerance;
  result.iterations = iterations;
  result.dual_values =
      Eigen::Map<const Eigen::VectorXd>(dual_trace.data(),
                                        static_cast<Eigen::Index>(dual_trace.size()));
  for (Eigen::Index j = 0; j < m; ++j)
    result.duals(active[static_cast<size_t>(j)]) = best_lambda(j);

  // Euclidean restoration onto the constraint polytope intersected with the
  // box. Semismooth Newton on the restoration duals: the clamp pattern is
  // piecewise linear, so each step re-solves against the currently interior
  // samples. Keeps the returned scores exactly feasible even when the dual
  // ascent was cut off early.
  Eigen::MatrixXd directions(n, m);  // column j: s_j * beta / n
  Eigen::VectorXd rhs(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    directions.col(j) =
        (sensitive_active.col(j).array() * beta / static_cast<double>(n)).matrix();
    rhs(j) = -(sensitive_active.col(j).array() * alpha).sum() / static_cast<double>(n);
  }

  Eigen::VectorXd mu = Eigen::VectorXd::Zero(m);
  const auto restored = [&](const Eigen::VectorXd& duals_r) {
    return (best_f - (directions * duals_r).array()).max(0.0).min(1.0).eval();
  };
  Eigen::ArrayXd fr = restored(mu);
  Eigen::VectorXd rho = directions.transpose() * fr.matrix() - rhs;
  for (int it = 0; it < 100 && rho.lpNorm<Eigen::Infinity>() > kRestoreTol; ++it) {
    const Eigen::ArrayXd interior =
        ((fr > 0.0) && (fr < 1.0)).select(Eigen::ArrayXd::Ones(n), Eigen::ArrayXd::Zero(n));
    Eigen::MatrixXd jac =
        directions.transpose() * interior.matrix().asDiagonal() * directions;
    jac.diagonal().array() += 1e-14;
    Eigen::VectorXd delta = jac.ldlt().solve(rho);
    if (!delta.allFinite()) break;
    double damp = 1.0;
    Eigen::VectorXd mu_new;
    Eigen::ArrayXd fr_new;
    Eigen::VectorXd rho_new;
    bool improved = false;
    for (int bt = 0; bt < 30; ++bt) {
      mu_new = mu + damp * delta;
      fr_new = restored(mu_new);
      rho_new = directions.transpose() * fr_new.matrix() - rhs;
      if (rho_new.lpNorm<Eigen::Infinity>() < rho.lpNorm<Eigen::Infinity>()) {
        improved = true;
        break;
      }
      damp *= 0.5;
    }
    if (!improved) break;
    mu = mu_new;
    fr = fr_new;
    rho = rho_new;
  }

  if (kind != Divergence::sed) fr = fr.max(kInterior).min(1.0 - kInterior);

  result.f_star = fr.matrix();
  result.residuals = sys.residuals(result.f_star);
  return result;
}

ad::Tensor projection_penalty(Divergence kind, const Eigen::VectorXd& f_star,
                              const ad::Tensor& h) {
  if (h.rank() != 1)
    throw ShapeError("projection_penalty expects a score vector, got shape " +
                     ad::shape_string(h.shape()));
  if (f_star.size() != h.size())
    throw ShapeError("projection_penalty got " + std::to_string(f_star.size()) +
                     " projected scores for " + std::to_string(h.size()) + " samples");
  check_reference_domain(kind, h.vector());
  for (Eigen::Index i = 0; i < f_star.size(); ++i)
    if (!(f_star(i) >= 0.0 && f_star(i) <= 1.0))
      throw DomainError("projected score " + std::to_string(i) + " outside [0,1]: " +
                        std::to_string(f_star(i)));

  const ad::Tensor f = ad::Tensor::constant(f_star);
  switch (kind) {
    case Divergence::kl: {
      double entropy = 0.0;
      for (Eigen::Index i = 0; i < f_star.size(); ++i)
        entropy += xlogx(f_star(i)) + xlogx(1.0 - f_star(i));
      entropy /= static_cast<double>(f_star.size());
      const ad::Tensor cross =
          ad::mean(ad::neg(ad::add(ad::mul(f, ad::log(h)),
                                   ad::mul(1.0 - f, ad::log(1.0 - h)))));
      return cross + entropy;
    }
    case Divergence::js: {
      double f_entropy = 0.0;
      for (Eigen::Index i = 0; i < f_star.size(); ++i)
        f_entropy += xlogx(f_star(i)) + xlogx(1.0 - f_star(i));
      f_entropy /= static_cast<double>(f_star.size());
      const ad::Tensor mid = 0.5 * (f + h);
      const ad::Tensor h_entropy = ad::add(ad::mul(h, ad::log(h)),
                                           ad::mul(1.0 - h, ad::log(1.0 - h)));
      const ad::Tensor cross = ad::add(ad::mul(f + h, ad::log(mid)),
                                       ad::mul(2.0 - f - h, ad::log(1.0 - mid)));
      return 0.5 * f_entropy + 0.5 * ad::mean(ad::sub(h_entropy, cross));
    }
    case Divergence::sed: {
      const ad::Tensor diff = ad::sub(f, h);
      return 2.0 * ad::mean(ad::mul(diff, diff));
    }
  }
  throw ConfigError("unhandled divergence kind");
}

}  // namespace fairgrad::penalty
