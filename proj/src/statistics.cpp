#include "fairgrad/statistics.hpp"

#include <cmath>
#include <utility>

namespace fairgrad::stats {

namespace {

constexpr double kDenominatorFloor = 1e-12;

Eigen::VectorXd zeros(Eigen::Index n) { return Eigen::VectorXd::Zero(n); }
Eigen::VectorXd ones(Eigen::Index n) { return Eigen::VectorXd::Ones(n); }

const Eigen::VectorXd& require_condition(const std::optional<Eigen::VectorXd>& zeta) {
  if (!zeta)
    throw DataError("conditional_demographic_parity needs per-sample condition weights");
  return *zeta;
}

// E[w (a + h b)] as a tensor in h; the pure-coefficient part folds into a
// constant so only one recorded node depends on h per term.
ad::Tensor weighted_mean(const Eigen::ArrayXd& w, const Eigen::VectorXd& a,
                         const Eigen::VectorXd& b, const ad::Tensor& h) {
  const double n = static_cast<double>(w.size());
  const double fixed = (w * a.array()).sum() / n;
  Eigen::VectorXd hw = (w * b.array()).matrix() / n;
  if (hw.isZero(0.0)) return ad::Tensor::constant(fixed);
  return ad::Tensor::constant(fixed) + ad::sum(ad::mul(ad::Tensor::constant(hw), h));
}

}  // namespace

void SampleBatch::validate(bool require_partition) const {
  const Eigen::Index n = labels.size();
  if (n < 1) throw DataError("batch: empty");
  if (features.rows() != n || sensitive.rows() != n)
    throw DataError("batch: features/labels/sensitive row counts disagree");
  if (sensitive.cols() < 1) throw DataError("batch: no sensitive groups");
  if (!features.allFinite() || !labels.allFinite() || !sensitive.allFinite())
    throw DataError("batch: non-finite entries");
  for (Eigen::Index i = 0; i < n; ++i)
    if (labels(i) != 0.0 && labels(i) != 1.0)
      throw DataError("batch: labels must be 0 or 1");
  if ((sensitive.array() < 0.0).any())
    throw DataError("batch: sensitive weights must be non-negative");
  if (condition_weights && condition_weights->size() != n)
    throw DataError("batch: condition weight count disagrees with sample count");
  if (require_partition && !rows_are_one_hot(sensitive))
    throw DataError("batch: sensitive rows are not one-hot");
}

bool rows_are_one_hot(const Eigen::MatrixXd& sensitive) {
  for (Eigen::Index i = 0; i < sensitive.rows(); ++i) {
    int hits = 0;
    for (Eigen::Index k = 0; k < sensitive.cols(); ++k) {
      const double v = sensitive(i, k);
      if (v == 1.0) ++hits;
      else if (v != 0.0) return false;
    }
    if (hits != 1) return false;
  }
  return true;
}

StatisticDef::StatisticDef(std::string name, bool linear, Evaluator evaluator)
    : name_(std::move(name)), linear_(linear), evaluator_(std::move(evaluator)) {}

Coefficients StatisticDef::coefficients(const SampleBatch& batch) const {
  Coefficients co = evaluator_(batch.features, batch.labels, batch.condition_weights);
  const Eigen::Index n = batch.size();
  if (co.a0.size() != n || co.b0.size() != n || co.a1.size() != n || co.b1.size() != n)
    throw DataError(name_ + ": coefficient length disagrees with batch size");
  if (!co.a0.allFinite() || !co.b0.allFinite() || !co.a1.allFinite() || !co.b1.allFinite())
    throw NumericError(name_ + ": non-finite coefficients");
  return co;
}

StatisticDef make_statistic(const std::string& name) {
  using OptVec = std::optional<Eigen::VectorXd>;
  if (name == "demographic_parity")
    return {name, true,
            [](const Eigen::MatrixXd&, const Eigen::VectorXd& y, const OptVec&) {
              const Eigen::Index n = y.size();
              return Coefficients{zeros(n), ones(n), ones(n), zeros(n)};
            }};
  if (name == "conditional_demographic_parity")
    return {name, true,
            [](const Eigen::MatrixXd&, const Eigen::VectorXd& y, const OptVec& zeta) {
              const Eigen::VectorXd& z = require_condition(zeta);
              return Coefficients{zeros(y.size()), z, z, zeros(y.size())};
            }};
  if (name == "equal_opportunity")
    return {name, true,
            [](const Eigen::MatrixXd&, const Eigen::VectorXd& y, const OptVec&) {
              return Coefficients{zeros(y.size()), y, y, zeros(y.size())};
            }};
  if (name == "false_positive_parity")
    return {name, true,
            [](const Eigen::MatrixXd&, const Eigen::VectorXd& y, const OptVec&) {
              Eigen::VectorXd ny = ones(y.size()) - y;
              return Coefficients{zeros(y.size()), ny, ny, zeros(y.size())};
            }};
  if (name == "predictive_parity")
    return {name, false,
            [](const Eigen::MatrixXd&, const Eigen::VectorXd& y, const OptVec&) {
              return Coefficients{zeros(y.size()), y, zeros(y.size()), ones(y.size())};
            }};
  if (name == "false_omission_parity")
    return {name, false,
            [](const Eigen::MatrixXd&, const Eigen::VectorXd& y, const OptVec&) {
              return Coefficients{y, -y, ones(y.size()), -ones(y.size())};
            }};
  if (name == "accuracy_equality")
    return {name, true,
            [](const Eigen::MatrixXd&, const Eigen::VectorXd& y, const OptVec&) {
              return Coefficients{ones(y.size()) - y, 2.0 * y - ones(y.size()), ones(y.size()),
                                  zeros(y.size())};
            }};
  if (name == "treatment_equality")
    return {name, false,
            [](const Eigen::MatrixXd&, const Eigen::VectorXd& y, const OptVec&) {
              return Coefficients{y, -y, zeros(y.size()), ones(y.size()) - y};
            }};
  std::string known;
  for (const auto& s : statistic_names()) known += (known.empty() ? "" : ", ") + s;
  throw ConfigError("unknown statistic '" + name + "' (known: " + known + ")");
}

const std::vector<std::string>& statistic_names() {
  static const std::vector<std::string> names = {
      "demographic_parity",    "conditional_demographic_parity",
      "equal_opportunity",     "false_positive_parity",
      "predictive_parity",     "false_omission_parity",
      "accuracy_equality",     "treatment_equality",
  };
  return names;
}

GroupStatistics group_statistics(const StatisticDef& stat, const SampleBatch& batch,
                                 const ad::Tensor& h) {
  batch.validate();
  if (h.size() != batch.size())
    throw ShapeError(stat.name() + ": score count " + std::to_string(h.size()) +
                     " for batch of " + std::to_string(batch.size()));
  Coefficients co = stat.coefficients(batch);

  GroupStatistics out;
  out.per_group.reserve(batch.group_count());
  for (Eigen::Index k = 0; k < batch.group_count(); ++k) {
    Eigen::ArrayXd sk = batch.sensitive.col(k).array();
    ad::Tensor num = weighted_mean(sk, co.a0, co.b0, h);
    ad::Tensor den = weighted_mean(sk, co.a1, co.b1, h);
    if (std::fabs(den.values()(0)) < kDenominatorFloor)
      throw DegenerateGroupError(
          stat.name() + ": denominator of group " + std::to_string(k) + " vanishes", k);
    out.per_group.push_back(ad::div(num, den));
  }

  Eigen::ArrayXd unit = Eigen::ArrayXd::Ones(batch.size());
  ad::Tensor num = weighted_mean(unit, co.a0, co.b0, h);
  ad::Tensor den = weighted_mean(unit, co.a1, co.b1, h);
  if (std::fabs(den.values()(0)) < kDenominatorFloor)
    throw DegenerateGroupError(stat.name() + ": overall denominator vanishes", -1);
  out.overall = ad::div(num, den);
  return out;
}

ViolationVector violation(const StatisticDef& stat, const SampleBatch& batch,
                          const ad::Tensor& h) {
  GroupStatistics gs = group_statistics(stat, batch, h);

  ViolationVector out;
  // A zero overall statistic makes the relative form undefined; fall back to
  // absolute per-group values. Anything else, including small negatives, goes
  // through the ratio unchanged.
  out.fallback_used = std::fabs(gs.overall.values()(0)) < kDenominatorFloor;

  std::vector<ad::Tensor> vs;
  vs.reserve(gs.per_group.size());
  ad::Tensor one = ad::Tensor::constant(1.0);
  for (const ad::Tensor& gamma : gs.per_group) {
    if (out.fallback_used) vs.push_back(ad::abs(gamma));
    else vs.push_back(ad::abs(ad::sub(ad::div(gamma, gs.overall), one)));
  }
  out.values = ad::stack(vs);
  return out;
}

double LinearConstraintSystem::residual(Eigen::Index group, const Eigen::VectorXd& f) const {
  const double n = static_cast<double>(f.size());
  return (sensitive.col(group).array() * (alpha_c.array() + f.array() * beta_c.array())).sum() /
         n;
}

Eigen::VectorXd LinearConstraintSystem::residuals(const Eigen::VectorXd& f) const {
  Eigen::VectorXd r(group_count());
  for (Eigen::Index k = 0; k < group_count(); ++k) r(k) = residual(k, f);
  return r;
}

LinearConstraintSystem fixed_constraints(const StatisticDef& stat, const SampleBatch& batch,
                                         double c) {
  batch.validate();
  if (!std::isfinite(c)) throw NumericError(stat.name() + ": non-finite target value");
  Coefficients co = stat.coefficients(batch);
  LinearConstraintSystem sys;
  sys.alpha_c = co.a0 - c * co.a1;
  sys.beta_c = co.b0 - c * co.b1;
  sys.sensitive = batch.sensitive;
  sys.c = c;
  return sys;
}

}  // namespace fairgrad::stats
