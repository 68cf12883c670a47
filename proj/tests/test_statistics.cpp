#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "fairgrad/statistics.hpp"

namespace ad = fairgrad::ad;
namespace stats = fairgrad::stats;
using ad::Tensor;
using stats::SampleBatch;

namespace {

// Two one-hot groups of two samples each; every notion's group and overall
// values below were worked out by hand from the ratio-of-means definition
// before the module existed, and are frozen here as the oracle.
SampleBatch fixture_batch() {
  SampleBatch b;
  b.features = Eigen::MatrixXd::Zero(4, 1);
  b.labels = (Eigen::VectorXd(4) << 1, 0, 1, 0).finished();
  b.sensitive = (Eigen::MatrixXd(4, 2) << 1, 0, 1, 0, 0, 1, 0, 1).finished();
  return b;
}

const Eigen::VectorXd fixture_scores = (Eigen::VectorXd(4) << 0.9, 0.6, 0.4, 0.1).finished();

struct Expected {
  const char* name;
  double g0, g1, overall;
};

SampleBatch random_partition_batch(Eigen::Index n, Eigen::Index groups, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SampleBatch b;
  b.features = Eigen::MatrixXd::Zero(n, 1);
  b.labels.resize(n);
  b.sensitive = Eigen::MatrixXd::Zero(n, groups);
  for (Eigen::Index i = 0; i < n; ++i) {
    // round-robin group plus alternating labels keeps every (group, label)
    // cell inhabited, so no notion degenerates
    const Eigen::Index k = i % groups;
    b.sensitive(i, k) = 1.0;
    b.labels(i) = static_cast<double>((i / groups) % 2);
    b.features(i, 0) = unit(rng);
  }
  return b;
}

Eigen::VectorXd random_scores(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> interior(0.05, 0.95);
  Eigen::VectorXd h(n);
  for (Eigen::Index i = 0; i < n; ++i) h(i) = interior(rng);
  return h;
}

double group_value(const stats::StatisticDef& stat, const SampleBatch& batch,
                   const Eigen::VectorXd& h, Eigen::Index k) {
  return stats::group_statistics(stat, batch, Tensor::constant(h)).per_group[k].scalar();
}

}  // namespace

TEST_CASE("coefficient table reproduces hand-computed ratios for all eight notions") {
  SampleBatch batch = fixture_batch();
  const std::vector<Expected> expected = {
      {"demographic_parity", 0.75, 0.25, 0.5},
      {"equal_opportunity", 0.9, 0.4, 0.65},
      {"false_positive_parity", 0.6, 0.1, 0.35},
      {"predictive_parity", 0.6, 0.8, 0.65},
      {"false_omission_parity", 0.2, 0.4, 0.35},
      {"accuracy_equality", 0.65, 0.65, 0.65},
      {"treatment_equality", 1.0 / 6.0, 6.0, 1.0},
  };
  for (const auto& e : expected) {
    auto stat = stats::make_statistic(e.name);
    auto gs = stats::group_statistics(stat, batch, Tensor::constant(fixture_scores));
    INFO(e.name);
    REQUIRE(gs.per_group.size() == 2);
    CHECK(gs.per_group[0].scalar() == doctest::Approx(e.g0).epsilon(1e-12));
    CHECK(gs.per_group[1].scalar() == doctest::Approx(e.g1).epsilon(1e-12));
    CHECK(gs.overall.scalar() == doctest::Approx(e.overall).epsilon(1e-12));
  }

  batch.condition_weights = (Eigen::VectorXd(4) << 2, 1, 1, 2).finished();
  auto cdp = stats::make_statistic("conditional_demographic_parity");
  auto gs = stats::group_statistics(cdp, batch, Tensor::constant(fixture_scores));
  CHECK(gs.per_group[0].scalar() == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(gs.per_group[1].scalar() == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(gs.overall.scalar() == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("linearity flags match the coefficient table") {
  CHECK(stats::make_statistic("demographic_parity").is_linear());
  CHECK(stats::make_statistic("conditional_demographic_parity").is_linear());
  CHECK(stats::make_statistic("equal_opportunity").is_linear());
  CHECK(stats::make_statistic("false_positive_parity").is_linear());
  CHECK(stats::make_statistic("accuracy_equality").is_linear());
  CHECK_FALSE(stats::make_statistic("predictive_parity").is_linear());
  CHECK_FALSE(stats::make_statistic("false_omission_parity").is_linear());
  CHECK_FALSE(stats::make_statistic("treatment_equality").is_linear());
}

TEST_CASE("overlapping sensitive axes: per-axis parity can hide intersectional gaps") {
  // two binary axes encoded as overlapping columns
  SampleBatch b;
  b.features = Eigen::MatrixXd::Zero(4, 1);
  b.labels = Eigen::VectorXd::Zero(4);
  b.sensitive = (Eigen::MatrixXd(4, 2) << 1, 1, 1, 0, 0, 0, 0, 1).finished();
  Eigen::VectorXd h = (Eigen::VectorXd(4) << 0.7, 0.3, 0.7, 0.3).finished();

  auto dp = stats::make_statistic("demographic_parity");
  auto gs = stats::group_statistics(dp, b, Tensor::constant(h));
  CHECK(gs.per_group[0].scalar() == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(gs.per_group[1].scalar() == doctest::Approx(0.5).epsilon(1e-12));

  auto v = stats::violation(dp, b, Tensor::constant(h));
  CHECK(v.values.values()(0) == 0.0);
  CHECK(v.values.values()(1) == 0.0);
  CHECK_FALSE(v.fallback_used);

  // group on the four intersections instead
  Eigen::VectorXd s0 = b.sensitive.col(0), s1 = b.sensitive.col(1);
  Eigen::VectorXd ones = Eigen::VectorXd::Ones(4);
  SampleBatch inter = b;
  inter.sensitive.resize(4, 4);
  inter.sensitive.col(0) = s0.cwiseProduct(s1);
  inter.sensitive.col(1) = s0.cwiseProduct(ones - s1);
  inter.sensitive.col(2) = (ones - s0).cwiseProduct(s1);
  inter.sensitive.col(3) = (ones - s0).cwiseProduct(ones - s1);
  auto igs = stats::group_statistics(dp, inter, Tensor::constant(h));
  CHECK(igs.per_group[0].scalar() == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(igs.per_group[1].scalar() == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(igs.per_group[2].scalar() == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(igs.per_group[3].scalar() == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("violation vector: pinned two-group example") {
  SampleBatch b;
  b.features = Eigen::MatrixXd::Zero(4, 1);
  b.labels = Eigen::VectorXd::Zero(4);
  b.sensitive = (Eigen::MatrixXd(4, 2) << 1, 0, 1, 0, 0, 1, 0, 1).finished();
  Eigen::VectorXd h = (Eigen::VectorXd(4) << 0.8, 0.8, 0.2, 0.2).finished();
  auto v = stats::violation(stats::make_statistic("demographic_parity"), b, Tensor::constant(h));
  CHECK(v.values.values()(0) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(v.values.values()(1) == doctest::Approx(0.6).epsilon(1e-12));
}

TEST_CASE("zero overall statistic falls back to absolute group values") {
  SampleBatch b;
  b.features = Eigen::MatrixXd::Zero(2, 1);
  b.labels = (Eigen::VectorXd(2) << 1, 0).finished();
  b.sensitive = Eigen::MatrixXd::Identity(2, 2);
  auto dp = stats::make_statistic("demographic_parity");

  // degenerate-but-harmless: everything zero
  auto v0 = stats::violation(dp, b, Tensor::constant(Eigen::VectorXd::Zero(2)));
  CHECK(v0.fallback_used);
  CHECK(v0.values.values()(0) == 0.0);

  // group statistics cancel in the mean: fallback keeps their magnitudes
  Eigen::VectorXd h = (Eigen::VectorXd(2) << 0.5, -0.5).finished();
  auto v = stats::violation(dp, b, Tensor::constant(h));
  CHECK(v.fallback_used);
  CHECK(v.values.values()(0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(v.values.values()(1) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("a negative overall statistic flows through the ratio untouched") {
  SampleBatch b;
  b.features = Eigen::MatrixXd::Zero(4, 1);
  b.labels = (Eigen::VectorXd(4) << 1, 0, 1, 0).finished();
  b.sensitive = (Eigen::MatrixXd(4, 2) << 1, 0, 1, 0, 0, 1, 0, 1).finished();
  // scores above 1 push E[Y(1-f)] negative for treatment equality
  Eigen::VectorXd h = (Eigen::VectorXd(4) << 1.5, 0.5, 1.25, 0.5).finished();
  auto te = stats::make_statistic("treatment_equality");
  auto gs = stats::group_statistics(te, b, Tensor::constant(h));
  CHECK(gs.overall.scalar() < 0.0);
  auto v = stats::violation(te, b, Tensor::constant(h));
  CHECK_FALSE(v.fallback_used);
  CHECK(v.values.values().allFinite());
}

TEST_CASE("vanished group denominators raise the degenerate-group error") {
  SampleBatch b;
  b.features = Eigen::MatrixXd::Zero(4, 1);
  b.labels = (Eigen::VectorXd(4) << 1, 1, 0, 0).finished();  // group 1 has no positives
  b.sensitive = (Eigen::MatrixXd(4, 2) << 1, 0, 1, 0, 0, 1, 0, 1).finished();
  auto eo = stats::make_statistic("equal_opportunity");
  Eigen::VectorXd h = random_scores(4, 3);
  try {
    stats::group_statistics(eo, b, Tensor::constant(h));
    FAIL("expected DegenerateGroupError");
  } catch (const fairgrad::DegenerateGroupError& e) {
    CHECK(e.group() == 1);
  }

  // a group nobody belongs to degenerates even for demographic parity
  SampleBatch empty = b;
  empty.sensitive.col(0).setOnes();
  empty.sensitive.col(1).setZero();
  CHECK_THROWS_AS(
      stats::group_statistics(stats::make_statistic("demographic_parity"), empty,
                              Tensor::constant(h)),
      fairgrad::DegenerateGroupError);
}

TEST_CASE("pinning the statistic value linearizes it: pinned residual example") {
  SampleBatch b;
  b.features = Eigen::MatrixXd::Zero(4, 1);
  b.labels = Eigen::VectorXd::Zero(4);
  b.sensitive = (Eigen::MatrixXd(4, 2) << 1, 0, 1, 0, 0, 1, 0, 1).finished();
  auto sys = stats::fixed_constraints(stats::make_statistic("demographic_parity"), b, 0.5);
  Eigen::VectorXd h = (Eigen::VectorXd(4) << 0.8, 0.8, 0.2, 0.2).finished();
  CHECK(sys.residual(0, h) == doctest::Approx(0.15).epsilon(1e-12));
  CHECK(sys.residual(1, h) == doctest::Approx(-0.15).epsilon(1e-12));
  CHECK(sys.residuals(h).size() == 2);
}

TEST_CASE("residual vanishes exactly when the statistic equals the pinned value") {
  const std::vector<std::string> names = {
      "demographic_parity", "equal_opportunity",     "false_positive_parity",
      "predictive_parity",  "false_omission_parity", "accuracy_equality",
      "treatment_equality"};
  for (std::uint64_t rep = 0; rep < 20; ++rep) {
    SampleBatch b = random_partition_batch(64, 3, 1000 + rep);
    Eigen::VectorXd h = random_scores(64, 2000 + rep);
    for (const auto& name : names) {
      auto stat = stats::make_statistic(name);
      for (Eigen::Index k = 0; k < 3; ++k) {
        const double c = group_value(stat, b, h, k);
        auto sys = stats::fixed_constraints(stat, b, c);
        INFO(name << " rep " << rep << " group " << k);
        CHECK(std::fabs(sys.residual(k, h)) <= 1e-10);
      }
    }
  }
}

TEST_CASE("partitions cover the batch: group-weighted means add up to the plain mean") {
  SampleBatch b = random_partition_batch(128, 4, 7);
  Eigen::VectorXd g = random_scores(128, 8);
  double total = 0.0;
  for (Eigen::Index k = 0; k < 4; ++k)
    total += (b.sensitive.col(k).array() * g.array()).mean();
  CHECK(total == doctest::Approx(g.mean()).epsilon(1e-12));
}

TEST_CASE("on a partition, zero violation forces every group to the overall value") {
  SampleBatch b = random_partition_batch(60, 3, 17);
  // constant scores are fair under demographic parity
  Eigen::VectorXd h = Eigen::VectorXd::Constant(60, 0.42);
  auto dp = stats::make_statistic("demographic_parity");
  auto v = stats::violation(dp, b, Tensor::constant(h));
  auto gs = stats::group_statistics(dp, b, Tensor::constant(h));
  for (Eigen::Index k = 0; k < 3; ++k) {
    CHECK(v.values.values()(k) <= 1e-12);
    CHECK(gs.per_group[k].scalar() ==
          doctest::Approx(gs.overall.scalar()).epsilon(1e-12));
  }
}

TEST_CASE("statistic and violation gradients match finite differences") {
  SampleBatch b = random_partition_batch(24, 3, 23);
  Eigen::VectorXd point = random_scores(24, 24);
  for (const char* name : {"demographic_parity", "predictive_parity", "treatment_equality"}) {
    auto stat = stats::make_statistic(name);
    ad::CheckedFn sum_violation = [&](ad::Tape&, const Tensor& h) {
      return ad::sum(stats::violation(stat, b, h).values);
    };
    auto report = ad::finite_difference_check(sum_violation, point);
    INFO(name << " max rel err " << report.max_rel_error);
    CHECK(report.passed);

    ad::CheckedFn first_group = [&](ad::Tape&, const Tensor& h) {
      return stats::group_statistics(stat, b, h).per_group[0];
    };
    CHECK(ad::finite_difference_check(first_group, point).passed);
  }
}

TEST_CASE("violation gradients separate over- and under-statistic groups") {
  SampleBatch b;
  b.features = Eigen::MatrixXd::Zero(6, 1);
  b.labels = Eigen::VectorXd::Zero(6);
  b.sensitive = Eigen::MatrixXd::Zero(6, 2);
  b.sensitive.col(0).head(3).setOnes();
  b.sensitive.col(1).tail(3).setOnes();
  Eigen::VectorXd h(6);
  h << 0.8, 0.7, 0.75, 0.3, 0.2, 0.25;

  ad::Tape tape;
  Tensor ht = tape.leaf(h, true);
  auto dp = stats::make_statistic("demographic_parity");
  auto g = tape.backward(ad::sum(stats::violation(dp, b, ht).values));
  Eigen::VectorXd grad = g.vector_at(ht);
  for (Eigen::Index i = 0; i < 3; ++i) CHECK(grad(i) > 0.0);   // over-statistic group
  for (Eigen::Index i = 3; i < 6; ++i) CHECK(grad(i) < 0.0);   // under-statistic group
}

TEST_CASE("batch validation rejects malformed inputs") {
  SampleBatch b = fixture_batch();
  b.labels(1) = 0.5;
  CHECK_THROWS_AS(b.validate(), fairgrad::DataError);

  SampleBatch c = fixture_batch();
  c.sensitive(0, 0) = -0.25;
  CHECK_THROWS_AS(c.validate(), fairgrad::DataError);

  SampleBatch d = fixture_batch();
  d.features = Eigen::MatrixXd::Zero(3, 1);
  CHECK_THROWS_AS(d.validate(), fairgrad::DataError);

  SampleBatch e = fixture_batch();
  e.sensitive(0, 1) = 1.0;  // row no longer one-hot
  CHECK_NOTHROW(e.validate());
  CHECK_THROWS_AS(e.validate(true), fairgrad::DataError);
  CHECK(stats::rows_are_one_hot(fixture_batch().sensitive));

  Eigen::VectorXd h = random_scores(3, 5);
  CHECK_THROWS_AS(
      stats::group_statistics(stats::make_statistic("demographic_parity"), fixture_batch(),
                              Tensor::constant(h)),
      fairgrad::ShapeError);
}

TEST_CASE("conditional parity without weights and unknown names are config errors") {
  SampleBatch b = fixture_batch();
  CHECK_THROWS_AS(stats::group_statistics(stats::make_statistic("conditional_demographic_parity"),
                                          b, Tensor::constant(fixture_scores)),
                  fairgrad::DataError);
  CHECK_THROWS_AS(stats::make_statistic("equalised_odds"), fairgrad::ConfigError);
}
