#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "fairgrad/errors.hpp"
#include "fairgrad/harness.hpp"

using namespace fairgrad;

namespace {

// Independent reference: score every positive/negative pair directly, ties
// worth half. Quadratic, so only for small instances.
double pairwise_auroc(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels) {
  double won = 0.0, pairs = 0.0;
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    if (labels(i) != 1.0) continue;
    for (Eigen::Index j = 0; j < scores.size(); ++j) {
      if (labels(j) != 0.0) continue;
      pairs += 1.0;
      if (scores(i) > scores(j))
        won += 1.0;
      else if (scores(i) == scores(j))
        won += 0.5;
    }
  }
  return won / pairs;
}

stats::SampleBatch two_group_batch(Eigen::Index n) {
  stats::SampleBatch batch;
  batch.features = Eigen::MatrixXd::Zero(n, 2);
  batch.labels = Eigen::VectorXd::Zero(n);
  batch.sensitive = Eigen::MatrixXd::Zero(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index group = i % 2;
    batch.features(i, 0) = group == 0 ? 1.0 : -1.0;
    batch.features(i, 1) = static_cast<double>(i % 5) / 5.0;
    batch.labels(i) = (i / 2) % 2 == 0 ? 1.0 : 0.0;
    batch.sensitive(i, group) = 1.0;
  }
  return batch;
}

data::SyntheticSpec quick_synthetic() {
  data::SyntheticSpec spec;
  spec.samples = 400;
  spec.feature_dim = 4;
  spec.group_proportions = {0.5, 0.5};
  spec.base_rates = {0.7, 0.3};
  spec.group_separation = {1.0, -1.0};
  spec.noise = 1.0;
  spec.seed = 7;
  return spec;
}

harness::CellConfig quick_cell() {
  harness::CellConfig cell;
  cell.dataset = "synthetic";
  cell.train.statistic = "demographic_parity";
  cell.train.penalty = harness::penalty_spec_from_name("l1");
  cell.train.strength = 0.0;
  cell.train.hidden = {4};
  cell.train.epochs = 3;
  cell.train.batch_size = 128;
  cell.train.learning_rate = 0.05;
  cell.train.warmup_epochs = 0;
  cell.train.seed = 3;
  cell.penalty_name = "l1";
  cell.split_ratio = 0.8;
  return cell;
}

std::filesystem::path scratch_dir(const std::string& leaf) {
  const auto dir = std::filesystem::temp_directory_path() / leaf;
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("auroc matches the pairwise definition") {
  SUBCASE("pinned examples") {
    Eigen::VectorXd s(4), y(4);
    s << 0.1, 0.4, 0.35, 0.8;
    y << 0, 0, 1, 1;
    CHECK(harness::auroc(s, y) == doctest::Approx(0.75).epsilon(1e-15));

    Eigen::VectorXd perfect(4);
    perfect << 0.1, 0.2, 0.8, 0.9;
    CHECK(harness::auroc(perfect, y) == 1.0);

    const Eigen::VectorXd flat = Eigen::VectorXd::Constant(4, 0.3);
    CHECK(harness::auroc(flat, y) == 0.5);
  }

  SUBCASE("random instances with heavy ties") {
    std::mt19937_64 rng(0x41C5u);
    for (int trial = 0; trial < 50; ++trial) {
      const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng() % 499);
      Eigen::VectorXd s(n), y(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        s(i) = static_cast<double>(rng() % 7) / 6.0;
        y(i) = static_cast<double>(rng() % 2);
      }
      y(0) = 0.0;
      y(1) = 1.0;
      const double got = harness::auroc(s, y);
      const double want = pairwise_auroc(s, y);
      CHECK(std::abs(got - want) < 1e-12);
    }
  }

  SUBCASE("rejects unusable input") {
    Eigen::VectorXd s(3), ones(3), bad(3);
    s << 0.1, 0.2, 0.3;
    ones << 1, 1, 1;
    bad << 0, 1, 0.5;
    CHECK_THROWS_AS(harness::auroc(s, ones), UndefinedMetricError);
    CHECK_THROWS_AS(harness::auroc(s, bad), DomainError);
    Eigen::VectorXd short_labels(2);
    short_labels << 0, 1;
    CHECK_THROWS_AS(harness::auroc(s, short_labels), ShapeError);
  }
}

TEST_CASE("max_violation reads the worst group") {
  stats::SampleBatch batch;
  batch.features = Eigen::MatrixXd::Zero(4, 1);
  batch.labels = (Eigen::VectorXd(4) << 1, 0, 1, 0).finished();
  batch.sensitive = Eigen::MatrixXd::Zero(4, 2);
  batch.sensitive(0, 0) = batch.sensitive(1, 0) = 1.0;
  batch.sensitive(2, 1) = batch.sensitive(3, 1) = 1.0;
  const Eigen::VectorXd scores = (Eigen::VectorXd(4) << 0.8, 0.8, 0.4, 0.4).finished();

  const auto dp = stats::make_statistic("demographic_parity");
  // group means 0.8 and 0.4 against an overall 0.6 put both groups a third out
  CHECK(harness::max_violation(dp, batch, scores) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("ellipse_stats") {
  SUBCASE("two points, hand-computed") {
    const std::vector<Eigen::Vector2d> points = {{0.0, 0.0}, {2.0, 2.0}};
    const harness::EllipseStats e = harness::ellipse_stats(points);
    CHECK(e.mean.x() == 1.0);
    CHECK(e.mean.y() == 1.0);
    // deviations (+-1, +-1): sample covariance [[2,2],[2,2]], halved for the
    // covariance of the mean
    CHECK(e.covariance(0, 0) == 1.0);
    CHECK(e.covariance(0, 1) == 1.0);
    CHECK(e.covariance(1, 0) == 1.0);
    CHECK(e.covariance(1, 1) == 1.0);
  }

  SUBCASE("identical points collapse") {
    const std::vector<Eigen::Vector2d> points = {{0.5, 0.25}, {0.5, 0.25}, {0.5, 0.25}};
    const harness::EllipseStats e = harness::ellipse_stats(points);
    CHECK(e.mean.x() == 0.5);
    CHECK(e.covariance.norm() == 0.0);
  }

  SUBCASE("duplicating the sample shrinks the mean's covariance") {
    const std::vector<Eigen::Vector2d> two = {{0.0, 0.0}, {2.0, 2.0}};
    const std::vector<Eigen::Vector2d> four = {{0.0, 0.0}, {2.0, 2.0}, {0.0, 0.0}, {2.0, 2.0}};
    const harness::EllipseStats small = harness::ellipse_stats(two);
    const harness::EllipseStats big = harness::ellipse_stats(four);
    // four points: sample covariance [[4/3,...]], over n=4 gives 1/3
    CHECK(big.covariance(0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(big.covariance(0, 0) < small.covariance(0, 0));
  }

  SUBCASE("needs two points") {
    CHECK_THROWS_AS(harness::ellipse_stats({{1.0, 2.0}}), DataError);
    CHECK_THROWS_AS(harness::ellipse_stats({}), DataError);
  }
}

TEST_CASE("batch_size_study") {
  const auto dp = stats::make_statistic("demographic_parity");
  const auto l1 = harness::penalty_spec_from_name("l1");

  SUBCASE("a chunk the size of the batch reproduces the full value exactly") {
    const stats::SampleBatch batch = two_group_batch(64);
    Eigen::VectorXd scores(64);
    for (Eigen::Index i = 0; i < 64; ++i) scores(i) = 0.05 + 0.9 * (i % 11) / 10.0;
    const harness::BatchSizeStudy study =
        harness::batch_size_study(dp, l1, batch, scores, {64, 16}, 5);
    REQUIRE(study.rows.size() == 2);
    CHECK(study.rows[0].size == 64);
    CHECK(study.rows[0].chunks == 1);
    CHECK(study.rows[0].skipped == 0);
    CHECK(study.rows[0].mean_value == study.full_value);  // bitwise, same code path
    CHECK(study.rows[1].chunks == 4);
    CHECK(std::isfinite(study.rows[1].mean_value));
  }

  SUBCASE("a short final chunk still counts") {
    const stats::SampleBatch batch = two_group_batch(10);
    const Eigen::VectorXd scores = Eigen::VectorXd::LinSpaced(10, 0.1, 0.9);
    const harness::BatchSizeStudy study =
        harness::batch_size_study(dp, l1, batch, scores, {4}, 1);
    CHECK(study.rows[0].chunks == 3);  // 4 + 4 + 2
    CHECK(study.rows[0].skipped == 0);
  }

  SUBCASE("chunks missing a group are skipped and counted") {
    stats::SampleBatch batch = two_group_batch(8);
    batch.sensitive.setZero();
    for (Eigen::Index i = 0; i < 8; ++i) batch.sensitive(i, i == 5 ? 1 : 0) = 1.0;
    const Eigen::VectorXd scores = Eigen::VectorXd::LinSpaced(8, 0.2, 0.8);

    const harness::BatchSizeStudy halves =
        harness::batch_size_study(dp, l1, batch, scores, {4}, 2);
    CHECK(halves.rows[0].chunks == 2);
    CHECK(halves.rows[0].skipped == 1);  // the half without the lone member
    CHECK(std::isfinite(halves.rows[0].mean_value));

    const harness::BatchSizeStudy singles =
        harness::batch_size_study(dp, l1, batch, scores, {1}, 2);
    CHECK(singles.rows[0].skipped == 8);  // every singleton misses a group
    CHECK(std::isnan(singles.rows[0].mean_value));
  }

  SUBCASE("validation") {
    const stats::SampleBatch batch = two_group_batch(8);
    const Eigen::VectorXd scores = Eigen::VectorXd::Constant(8, 0.5);
    CHECK_THROWS_AS(harness::batch_size_study(dp, l1, batch, scores, {0}, 1), ConfigError);
    CHECK_THROWS_AS(harness::batch_size_study(dp, l1, batch, scores, {9}, 1), ConfigError);
    CHECK_THROWS_AS(
        harness::batch_size_study(dp, l1, batch, Eigen::VectorXd::Constant(7, 0.5), {4}, 1),
        ShapeError);
  }
}

TEST_CASE("penalty names round-trip") {
  for (const std::string name : {"l1", "l2", "linf", "smoothmax", "kl", "js", "sed"}) {
    CHECK(harness::penalty_spec_name(harness::penalty_spec_from_name(name)) == name);
  }
  CHECK_THROWS_AS(harness::penalty_spec_from_name("huber"), ConfigError);
  CHECK(harness::reported_statistics().size() == 4);
}

TEST_CASE("data sources") {
  SUBCASE("synthetic source loads") {
    harness::DataSource source;
    source.synthetic = quick_synthetic();
    source.name = "synthetic";
    const stats::SampleBatch batch = harness::load_source(source);
    CHECK(batch.size() == 400);
    CHECK(batch.features.cols() == 4);
    CHECK(batch.group_count() == 2);
  }

  SUBCASE("validation demands exactly one source") {
    harness::DataSource both;
    both.synthetic = quick_synthetic();
    both.csv_path = "x.csv";
    CHECK_THROWS_AS(both.validate(), ConfigError);

    harness::DataSource neither;
    CHECK_THROWS_AS(neither.validate(), ConfigError);

    harness::DataSource no_schema;
    no_schema.csv_path = "x.csv";
    CHECK_THROWS_AS(no_schema.validate(), ConfigError);
  }
}

TEST_CASE("run_cell") {
  const stats::SampleBatch full = harness::load_source([] {
    harness::DataSource s;
    s.synthetic = quick_synthetic();
    return s;
  }());

  SUBCASE("smoke run reports every diagnostic") {
    const harness::CellConfig cell = quick_cell();
    const harness::RunResult row = harness::run_cell(full, cell);
    CHECK(row.status == "ok");
    CHECK(row.cell_id == "demographic_parity|l1|0|3");
    CHECK(row.epochs.size() == 3);
    CHECK(row.train_auroc > 0.5);
    CHECK(row.train_auroc <= 1.0);
    CHECK(row.test_auroc > 0.4);
    for (const std::string& name : harness::reported_statistics()) {
      REQUIRE(row.train_violation.count(name) == 1);
      REQUIRE(row.test_violation.count(name) == 1);
    }
    CHECK(row.train_violation.at("demographic_parity") > 0.0);
    CHECK(row.seconds > 0.0);
  }

  SUBCASE("failures land in status instead of escaping") {
    harness::CellConfig cell = quick_cell();
    cell.split_ratio = 0.0;
    const harness::RunResult row = harness::run_cell(full, cell);
    CHECK(row.status != "ok");
    CHECK(!row.status.empty());
  }

  SUBCASE("same cell twice is bit-identical") {
    const harness::CellConfig cell = quick_cell();
    const harness::RunResult a = harness::run_cell(full, cell);
    const harness::RunResult b = harness::run_cell(full, cell);
    CHECK(a.train_auroc == b.train_auroc);
    CHECK(a.test_auroc == b.test_auroc);
    for (const auto& [name, value] : a.test_violation) {
      const double other = b.test_violation.at(name);
      CHECK((value == other || (std::isnan(value) && std::isnan(other))));
    }
  }
}

TEST_CASE("grid enumeration and cell ids") {
  harness::GridSpec spec;
  spec.source.synthetic = quick_synthetic();
  spec.source.name = "synthetic";
  spec.base = quick_cell().train;
  spec.statistics = {"demographic_parity"};
  spec.penalties = {"l1", "smoothmax"};
  spec.strengths = {0.0, 0.5};
  spec.seeds = {1, 2, 3};

  const std::vector<harness::CellConfig> cells = harness::enumerate_cells(spec);
  REQUIRE(cells.size() == 12);
  std::set<std::string> ids;
  for (const auto& cell : cells) {
    ids.insert(harness::cell_id(cell));
    CHECK(cell.train.epochs == spec.base.epochs);  // base settings carry over
  }
  CHECK(ids.size() == 12);
  CHECK(harness::cell_id(cells[0]) == "demographic_parity|l1|0|1");

  spec.strengths = {-1.0};
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec.strengths = {};
  CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("results csv round-trips") {
  harness::RunResult row;
  row.cell_id = "demographic_parity|kl|0.5|9";
  row.dataset = "name,with\"quote";
  row.statistic = "demographic_parity";
  row.penalty = "kl";
  row.strength = 0.5;
  row.seed = 9;
  row.train_auroc = 0.8123456789012345;
  row.test_auroc = 0.75;
  row.seconds = 1.25;
  row.skipped_batches = 2;
  row.train_violation["demographic_parity"] = 0.1 + 1e-17;
  row.test_violation["demographic_parity"] = 0.2;
  row.train_violation["equal_opportunity"] = std::nan("");
  row.test_violation["equal_opportunity"] = std::nan("");
  row.train_violation["predictive_parity"] = 0.3;
  row.test_violation["predictive_parity"] = 0.4;
  row.train_violation["treatment_equality"] = 0.5;
  row.test_violation["treatment_equality"] = 0.6;

  const auto dir = scratch_dir("fairgrad_csv_roundtrip");
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "results.csv").string();
  {
    std::ofstream out(path);
    out << harness::results_csv_header() << "\n" << harness::results_csv_row(row) << "\n";
  }

  const std::vector<harness::RunResult> back = harness::read_results_csv(path);
  REQUIRE(back.size() == 1);
  CHECK(back[0].cell_id == row.cell_id);
  CHECK(back[0].dataset == row.dataset);
  CHECK(back[0].status == "ok");
  CHECK(back[0].strength == row.strength);
  CHECK(back[0].seed == 9);
  CHECK(back[0].skipped_batches == 2);
  CHECK(back[0].train_auroc == row.train_auroc);  // %.17g survives the trip
  CHECK(back[0].train_violation.at("demographic_parity") ==
        row.train_violation.at("demographic_parity"));
  CHECK(std::isnan(back[0].test_violation.at("equal_opportunity")));
  CHECK(back[0].test_violation.at("treatment_equality") == 0.6);

  CHECK(harness::read_results_csv((dir / "absent.csv").string()).empty());
}

TEST_CASE("run_grid writes, resumes and repeats deterministically") {
  harness::GridSpec spec;
  spec.source.synthetic = quick_synthetic();
  spec.source.synthetic->samples = 240;
  spec.source.name = "synthetic";
  spec.base = quick_cell().train;
  spec.base.epochs = 2;
  spec.statistics = {"demographic_parity"};
  spec.penalties = {"l1"};
  spec.strengths = {0.0};
  spec.seeds = {1, 2};

  const auto dir = scratch_dir("fairgrad_grid_run");
  const std::vector<harness::RunResult> table = harness::run_grid(spec, dir.string(), 2);
  REQUIRE(table.size() == 2);
  for (const auto& row : table) CHECK(row.status == "ok");

  const auto read_bytes = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
  };
  const std::string first_pass = read_bytes(dir / "results.csv");
  CHECK(first_pass.find("cell_id,") == 0);

  // every cell already has an ok row, so a second call computes nothing
  const std::vector<harness::RunResult> resumed = harness::run_grid(spec, dir.string(), 2);
  CHECK(resumed.size() == 2);
  CHECK(read_bytes(dir / "results.csv") == first_pass);

  // a fresh run in a clean directory reproduces every metric bit for bit
  const auto dir2 = scratch_dir("fairgrad_grid_rerun");
  harness::run_grid(spec, dir2.string(), 1);
  const auto parse = [](const std::string& path) {
    auto rows = harness::read_results_csv(path);
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
      return a.cell_id < b.cell_id;
    });
    return rows;
  };
  const auto lhs = parse((dir / "results.csv").string());
  const auto rhs = parse((dir2 / "results.csv").string());
  REQUIRE(lhs.size() == rhs.size());
  for (std::size_t i = 0; i < lhs.size(); ++i) {
    CHECK(lhs[i].cell_id == rhs[i].cell_id);
    CHECK(lhs[i].train_auroc == rhs[i].train_auroc);
    CHECK(lhs[i].test_auroc == rhs[i].test_auroc);
    for (const auto& [name, value] : lhs[i].test_violation) {
      const double other = rhs[i].test_violation.at(name);
      CHECK((value == other || (std::isnan(value) && std::isnan(other))));
    }
  }

  std::filesystem::remove_all(dir);
  std::filesystem::remove_all(dir2);
}

TEST_CASE("scatter_svg sketches points, ellipses and a legend") {
  std::vector<harness::RunResult> rows;
  for (int seed = 0; seed < 3; ++seed) {
    for (const double strength : {0.0, 1.0}) {
      harness::RunResult row;
      row.statistic = "demographic_parity";
      row.penalty = "kl";
      row.strength = strength;
      row.test_auroc = 0.8 - 0.05 * strength + 0.01 * seed;
      row.test_violation["demographic_parity"] = 0.3 - 0.2 * strength + 0.02 * seed;
      rows.push_back(row);
    }
  }
  harness::RunResult failed;
  failed.status = "boom";
  failed.statistic = "demographic_parity";
  failed.test_violation["demographic_parity"] = 99.0;  // must not appear
  rows.push_back(failed);

  const std::string svg = harness::scatter_svg(rows);
  CHECK(svg.find("<svg") == 0);
  CHECK(svg.find("<ellipse") != std::string::npos);
  CHECK(svg.find("kl lambda=0<") != std::string::npos);
  CHECK(svg.find("kl lambda=1<") != std::string::npos);
  CHECK(svg.find("99") == std::string::npos);
  CHECK(svg.rfind("</svg>\n") == svg.size() - 7);

  CHECK(harness::scatter_svg({}).find("<svg") == 0);  // empty input still renders axes
}

TEST_CASE("job configs parse from json") {
  SUBCASE("train job") {
    const std::string text = R"({
      "data": {"synthetic": {"samples": 200, "feature_dim": 3,
               "group_proportions": [0.5, 0.5], "base_rates": [0.6, 0.4],
               "group_separation": [1.0, -1.0], "noise": 0.5, "seed": 11}},
      "train": {"statistic": "equal_opportunity", "epochs": 2, "hidden": [8, 4],
                "penalty": {"kind": "projection", "divergence": "js",
                            "max_iterations": 25, "residual_tolerance": 1e-8,
                            "fixed_target": 0.5},
                "strength": 0.7, "seed": 5},
      "split_ratio": 0.75
    })";
    const harness::TrainJob job = harness::train_job_from_json_text(text);
    CHECK(job.source.name == "synthetic");
    CHECK(job.source.synthetic->samples == 200);
    CHECK(job.train.statistic == "equal_opportunity");
    CHECK(job.train.hidden == std::vector<Eigen::Index>{8, 4});
    CHECK(job.train.penalty.kind == penalty::PenaltySpec::Kind::projection);
    CHECK(job.train.penalty.solver.max_iterations == 25);
    CHECK(job.train.penalty.solver.fixed_target.value() == 0.5);
    CHECK(job.penalty_name == "js");
    CHECK(job.split_ratio == 0.75);

    CHECK_THROWS_AS(harness::train_job_from_json_text("{}"), ConfigError);
    CHECK_THROWS_AS(harness::train_job_from_json_text("not json"), ConfigError);
  }

  SUBCASE("penalty shorthand string") {
    const std::string text = R"({
      "data": {"synthetic": {"samples": 100, "feature_dim": 2}},
      "train": {"penalty": "linf"}
    })";
    const harness::TrainJob job = harness::train_job_from_json_text(text);
    CHECK(job.penalty_name == "linf");
    CHECK(job.train.penalty.kind == penalty::PenaltySpec::Kind::norm);
  }

  SUBCASE("grid spec") {
    const std::string text = R"({
      "data": {"synthetic": {"samples": 150, "feature_dim": 2}, "name": "toy"},
      "train": {"epochs": 1},
      "statistics": ["demographic_parity", "equal_opportunity"],
      "penalties": ["l1", "kl"],
      "strengths": [0.0, 0.5, 1.0],
      "seeds": [1, 2],
      "split_ratio": 0.8
    })";
    const harness::GridSpec spec = harness::grid_spec_from_json_text(text);
    CHECK(spec.source.name == "toy");
    CHECK(harness::enumerate_cells(spec).size() == 24);

    CHECK_THROWS_AS(harness::grid_spec_from_json_text(R"({
      "data": {"synthetic": {"samples": 10, "feature_dim": 2}},
      "statistics": ["demographic_parity"], "penalties": ["huber"],
      "strengths": [1.0], "seeds": [1]
    })"),
                    ConfigError);
  }

  SUBCASE("study job") {
    const std::string text = R"({
      "data": {"synthetic": {"samples": 120, "feature_dim": 2}},
      "statistic": "equal_opportunity",
      "penalty": "smoothmax",
      "sizes": [16, 32, 64],
      "seed": 3
    })";
    const harness::StudyJob job = harness::study_job_from_json_text(text);
    CHECK(job.statistic == "equal_opportunity");
    CHECK(job.penalty_name == "smoothmax");
    CHECK(job.sizes == std::vector<Eigen::Index>{16, 32, 64});

    CHECK_THROWS_AS(harness::study_job_from_json_text(R"({
      "data": {"synthetic": {"samples": 10, "feature_dim": 2}}, "sizes": []
    })"),
                    ConfigError);
  }
}
