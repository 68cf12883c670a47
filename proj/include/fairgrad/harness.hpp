#ifndef FAIRGRAD_HARNESS_HPP
#define FAIRGRAD_HARNESS_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fairgrad/data.hpp"
#include "fairgrad/model.hpp"
#include "fairgrad/penalties.hpp"
#include "fairgrad/statistics.hpp"

namespace fairgrad::harness {

/// Rank-based AUROC with tied scores averaged, equivalent to the pairwise
/// probability P(score+ > score-) + P(tie)/2. Labels must contain both
/// classes; otherwise the metric is undefined.
double auroc(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels);

/// max_k of the violation vector for the given scores, no gradients.
double max_violation(const stats::StatisticDef& stat, const stats::SampleBatch& batch,
                     const Eigen::VectorXd& scores);

/// Mean of 2D points with the covariance of the mean estimator: the sample
/// covariance (n-1 normalization) divided by the number of points.
struct EllipseStats {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  Eigen::Matrix2d covariance = Eigen::Matrix2d::Zero();
};

EllipseStats ellipse_stats(const std::vector<Eigen::Vector2d>& points);

/// One row of the mini-batch estimation study: the mean penalty over
/// consecutive chunks of the shuffled dataset at a given chunk size.
struct BatchSizeRow {
  Eigen::Index size = 0;
  double mean_value = 0.0;
  Eigen::Index chunks = 0;
  Eigen::Index skipped = 0;  // chunks degenerate for the statistic
};

struct BatchSizeStudy {
  double full_value = 0.0;  // penalty on the whole (shuffled) set
  std::vector<BatchSizeRow> rows;
};

/// Shuffles once (keyed by seed), then for each size chunks the shuffled
/// order and averages the penalty over chunks. The full value is computed in
/// the same shuffled order, so a chunk size of n reproduces it exactly.
BatchSizeStudy batch_size_study(const stats::StatisticDef& stat,
                                const penalty::PenaltySpec& spec,
                                const stats::SampleBatch& batch,
                                const Eigen::VectorXd& scores,
                                const std::vector<Eigen::Index>& sizes, std::uint64_t seed);

/// Penalty shorthand used in configs and result tables: "l1", "l2", "linf",
/// "smoothmax", "kl", "js", "sed".
penalty::PenaltySpec penalty_spec_from_name(const std::string& name);
std::string penalty_spec_name(const penalty::PenaltySpec& spec);

/// Statistics recorded on every run regardless of which one was optimized.
const std::vector<std::string>& reported_statistics();

struct RunResult {
  std::string cell_id;
  std::string dataset;
  std::string statistic;
  std::string penalty;
  double strength = 0.0;
  std::uint64_t seed = 0;
  std::vector<model::EpochStats> epochs;  // not serialized to the table
  double train_auroc = 0.0, test_auroc = 0.0;
  std::map<std::string, double> train_violation, test_violation;
  double seconds = 0.0;
  Eigen::Index skipped_batches = 0;
  std::string status = "ok";  // anything else marks a failed cell
};

/// Either a synthetic draw or a CSV file with its schema.
struct DataSource {
  std::optional<data::SyntheticSpec> synthetic;
  std::string csv_path, schema_path;
  std::string name;  // reporting label; defaults to "synthetic" or the file

  void validate() const;
};

stats::SampleBatch load_source(const DataSource& source);

struct CellConfig {
  std::string dataset;
  model::TrainConfig train;  // statistic, penalty, strength, seed resolved
  std::string penalty_name;  // shorthand echo for the table
  double split_ratio = 0.8;
};

std::string cell_id(const CellConfig& cell);

/// Split with the cell's seed, standardize features on train statistics,
/// train, then evaluate AUROC and all reported violations on both splits.
/// Failures surface in status; only evaluation of the optimized statistic is
/// fatal to the cell, other diagnostics degrade to NaN.
RunResult run_cell(const stats::SampleBatch& full, const CellConfig& cell);

struct GridSpec {
  DataSource source;
  std::vector<std::string> statistics;
  std::vector<std::string> penalties;
  std::vector<double> strengths;
  std::vector<std::uint64_t> seeds;
  model::TrainConfig base;  // statistic/strength/seed overwritten per cell
  double split_ratio = 0.8;

  void validate() const;
};

std::vector<CellConfig> enumerate_cells(const GridSpec& spec);

/// Executes every cell whose id is not already marked ok in
/// <out_dir>/results.csv, appending a row as each cell finishes. Rows from
/// previous runs are kept; the returned table holds old and new rows.
std::vector<RunResult> run_grid(const GridSpec& spec, const std::string& out_dir, int workers);

std::string results_csv_header();
std::string results_csv_row(const RunResult& row);
std::vector<RunResult> read_results_csv(const std::string& path);

/// Scatter of (optimized violation, test AUROC) with one standard-error
/// ellipse per (penalty, strength) series that has at least two seeds.
std::string scatter_svg(const std::vector<RunResult>& rows);

struct TrainJob {
  DataSource source;
  model::TrainConfig train;
  std::string penalty_name = "l1";
  double split_ratio = 0.8;
};

TrainJob train_job_from_json_text(const std::string& text);
TrainJob train_job_from_json_file(const std::string& path);
/// Reads a data source from a json file, either {"data": {...}} or the bare
/// source object itself.
DataSource data_source_from_json_file(const std::string& path);
GridSpec grid_spec_from_json_text(const std::string& text);
GridSpec grid_spec_from_json_file(const std::string& path);

struct StudyJob {
  DataSource source;
  std::string statistic = "demographic_parity";
  std::string penalty_name = "smoothmax";
  std::vector<Eigen::Index> sizes;
  std::uint64_t seed = 0;
};

StudyJob study_job_from_json_text(const std::string& text);
StudyJob study_job_from_json_file(const std::string& path);

}  // namespace fairgrad::harness

#endif
