#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fairgrad/errors.hpp"
#include "fairgrad/harness.hpp"
#include "fairgrad/projection.hpp"

namespace {

using namespace fairgrad;

Eigen::VectorXd read_scores_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open scores file " + path);
  std::vector<double> values;
  double x = 0.0;
  while (in >> x) values.push_back(x);
  if (!in.eof()) throw DataError("scores file " + path + " has non-numeric content");
  if (values.empty()) throw DataError("scores file " + path + " is empty");
  return Eigen::Map<const Eigen::VectorXd>(values.data(),
                                           static_cast<Eigen::Index>(values.size()));
}

void write_scores_file(const std::string& path, const Eigen::VectorXd& scores) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open output file " + path);
  char buf[40];
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g\n", scores(i));
    out << buf;
  }
}

// Scores to run a study or projection on: an explicit file wins; a synthetic
// source falls back to its generating probabilities.
Eigen::VectorXd resolve_scores(const harness::DataSource& source, const std::string& scores_path,
                               const stats::SampleBatch& batch) {
  if (!scores_path.empty()) {
    Eigen::VectorXd scores = read_scores_file(scores_path);
    if (scores.size() != batch.size())
      throw ShapeError("scores file has " + std::to_string(scores.size()) + " entries for " +
                       std::to_string(batch.size()) + " samples");
    return scores;
  }
  if (source.synthetic.has_value()) return data::synthesize(*source.synthetic).bayes_scores;
  throw ConfigError("--scores is required for csv data sources");
}

void print_group_table(const stats::StatisticDef& stat, const stats::SampleBatch& batch,
                       const Eigen::VectorXd& before, const Eigen::VectorXd& after) {
  const stats::GroupStatistics lhs =
      stats::group_statistics(stat, batch, ad::Tensor::constant(before));
  const stats::GroupStatistics rhs =
      stats::group_statistics(stat, batch, ad::Tensor::constant(after));
  std::printf("  %-10s %14s %14s\n", "group", "input", "projected");
  for (std::size_t k = 0; k < lhs.per_group.size(); ++k)
    std::printf("  %-10zu %14.8f %14.8f\n", k, lhs.per_group[k].scalar(),
                rhs.per_group[k].scalar());
  std::printf("  %-10s %14.8f %14.8f\n", "overall", lhs.overall.scalar(), rhs.overall.scalar());
}

int cmd_train(const std::string& config_path, const std::string& out_csv) {
  const harness::TrainJob job = harness::train_job_from_json_file(config_path);
  harness::CellConfig cell;
  cell.dataset = job.source.name;
  cell.train = job.train;
  cell.penalty_name = job.penalty_name;
  cell.split_ratio = job.split_ratio;

  const stats::SampleBatch full = harness::load_source(job.source);
  std::printf("dataset %s: %td samples, %td features, %td groups\n", job.source.name.c_str(),
              full.size(), full.features.cols(), full.group_count());
  std::printf("statistic %s, penalty %s, strength %g, seed %llu\n",
              cell.train.statistic.c_str(), cell.penalty_name.c_str(), cell.train.strength,
              static_cast<unsigned long long>(cell.train.seed));

  const harness::RunResult row = harness::run_cell(full, cell);
  if (row.status != "ok") {
    std::fprintf(stderr, "run failed: %s\n", row.status.c_str());
    return 1;
  }

  for (const auto& epoch : row.epochs)
    std::printf("epoch %3d  loss %.6f  penalty %.6f  strength %g  skipped %ld\n", epoch.epoch,
                epoch.mean_loss, epoch.mean_penalty, epoch.strength, epoch.skipped_batches);

  std::printf("\ntrain AUROC %.6f   test AUROC %.6f   (%.2fs)\n", row.train_auroc,
              row.test_auroc, row.seconds);
  std::printf("%-32s %12s %12s\n", "violation", "train", "test");
  for (const auto& [name, value] : row.train_violation)
    std::printf("%-32s %12.6f %12.6f\n", name.c_str(), value, row.test_violation.at(name));

  if (!out_csv.empty()) {
    const bool fresh =
        !std::filesystem::exists(out_csv) || std::filesystem::file_size(out_csv) == 0;
    std::ofstream out(out_csv, std::ios::app);
    if (!out) throw DataError("cannot open results file " + out_csv);
    if (fresh) out << harness::results_csv_header() << "\n";
    out << harness::results_csv_row(row) << "\n";
    std::printf("appended results to %s\n", out_csv.c_str());
  }
  return 0;
}

int cmd_grid(const std::string& config_path, const std::string& out_dir, int workers,
             bool svg) {
  const harness::GridSpec spec = harness::grid_spec_from_json_file(config_path);
  const std::size_t total = harness::enumerate_cells(spec).size();
  std::printf("grid over %s: %zu cells, %d workers\n", spec.source.name.c_str(), total,
              workers);

  const std::vector<harness::RunResult> table = harness::run_grid(spec, out_dir, workers);
  std::size_t ok = 0;
  for (const auto& row : table)
    if (row.status == "ok") ++ok;
  std::printf("%zu rows in table (%zu ok, %zu failed)\n", table.size(), ok, table.size() - ok);
  std::printf("results: %s\n", (std::filesystem::path(out_dir) / "results.csv").string().c_str());

  if (svg) {
    const std::string path = (std::filesystem::path(out_dir) / "scatter.svg").string();
    std::ofstream out(path);
    if (!out) throw DataError("cannot open svg file " + path);
    out << harness::scatter_svg(table);
    std::printf("scatter: %s\n", path.c_str());
  }
  return table.size() == ok ? 0 : 1;
}

int cmd_project(const std::string& config_path, const std::string& scores_path,
                const std::string& statistic, const std::string& divergence, double target,
                bool has_target, int max_iterations, double tolerance,
                const std::string& out_path) {
  const harness::DataSource source = harness::data_source_from_json_file(config_path);
  const stats::SampleBatch batch = harness::load_source(source);
  const Eigen::VectorXd scores = resolve_scores(source, scores_path, batch);

  const stats::StatisticDef stat = stats::make_statistic(statistic);
  const penalty::Divergence kind = penalty::divergence_from_name(divergence);
  penalty::SolverConfig config;
  config.max_iterations = max_iterations;
  config.residual_tolerance = tolerance;
  if (has_target) config.fixed_target = target;

  const penalty::ProjectionResult result =
      penalty::solve_projection(kind, stat, batch, scores, config);
  const double value = penalty::mean_divergence(kind, result.f_star, scores);

  std::printf("projected %td scores onto %s = %.8f (%s)\n", scores.size(), statistic.c_str(),
              result.target, divergence.c_str());
  std::printf("  %s after %d iterations, max residual %.3e\n",
              result.converged ? "converged" : "iteration cap reached", result.iterations,
              result.residuals.size() > 0 ? result.residuals.cwiseAbs().maxCoeff() : 0.0);
  std::printf("  mean divergence to input scores: %.8f\n", value);
  print_group_table(stat, batch, scores, result.f_star);

  if (!out_path.empty()) {
    write_scores_file(out_path, result.f_star);
    std::printf("projected scores written to %s\n", out_path.c_str());
  }
  return 0;
}

int cmd_study(const std::string& config_path, const std::string& scores_path,
              const std::string& out_csv) {
  const harness::StudyJob job = harness::study_job_from_json_file(config_path);
  const stats::SampleBatch batch = harness::load_source(job.source);
  const Eigen::VectorXd scores = resolve_scores(job.source, scores_path, batch);

  const stats::StatisticDef stat = stats::make_statistic(job.statistic);
  const penalty::PenaltySpec spec = harness::penalty_spec_from_name(job.penalty_name);
  const harness::BatchSizeStudy study =
      harness::batch_size_study(stat, spec, batch, scores, job.sizes, job.seed);

  std::printf("%s %s on %s, %td samples\n", job.penalty_name.c_str(), job.statistic.c_str(),
              job.source.name.c_str(), batch.size());
  std::printf("full-batch value %.8f\n", study.full_value);
  std::printf("  %8s %8s %8s %14s %14s\n", "size", "chunks", "skipped", "mean", "rel err");
  for (const auto& row : study.rows) {
    const double rel = study.full_value != 0.0
                           ? std::abs(row.mean_value - study.full_value) /
                                 std::abs(study.full_value)
                           : std::abs(row.mean_value);
    std::printf("  %8td %8td %8td %14.8f %14.6f\n", row.size, row.chunks, row.skipped,
                row.mean_value, rel);
  }

  if (!out_csv.empty()) {
    std::ofstream out(out_csv);
    if (!out) throw DataError("cannot open output file " + out_csv);
    out << "size,chunks,skipped,mean_value,full_value\n";
    char buf[128];
    for (const auto& row : study.rows) {
      std::snprintf(buf, sizeof(buf), "%td,%td,%td,%.17g,%.17g\n", row.size, row.chunks,
                    row.skipped, row.mean_value, study.full_value);
      out << buf;
    }
    std::printf("table written to %s\n", out_csv.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fairness-regularized training experiments"};
  app.require_subcommand(1);

  std::string config_path, out_path, scores_path;
  std::string statistic = "demographic_parity", divergence = "kl";
  int workers = 1, max_iterations = 100;
  double target = 0.0, tolerance = 1e-9;
  bool svg = false;

  CLI::App* train = app.add_subcommand("train", "train one model and report its metrics");
  train->add_option("--config", config_path, "json job config")->required();
  train->add_option("--out", out_path, "append a results row to this csv");

  CLI::App* grid = app.add_subcommand("grid", "sweep statistics x penalties x strengths x seeds");
  grid->add_option("--config", config_path, "json grid config")->required();
  grid->add_option("--out", out_path, "output directory for results.csv")->required();
  grid->add_option("--workers", workers, "parallel cells")->check(CLI::PositiveNumber);
  grid->add_flag("--svg", svg, "also write scatter.svg");

  CLI::App* project = app.add_subcommand("project", "project scores onto a fairness constraint");
  project->add_option("--config", config_path, "json file with the data source")->required();
  project->add_option("--scores", scores_path,
                      "score file, one value per line (synthetic sources default to their "
                      "generating probabilities)");
  project->add_option("--statistic", statistic, "fairness notion to equalize");
  project->add_option("--divergence", divergence, "kl, js or sed");
  CLI::Option* target_opt =
      project->add_option("--target", target, "pin the statistic to this value");
  project->add_option("--max-iterations", max_iterations, "dual ascent cap")
      ->check(CLI::PositiveNumber);
  project->add_option("--tolerance", tolerance, "residual tolerance");
  project->add_option("--out", out_path, "write projected scores to this file");

  CLI::App* study = app.add_subcommand("study-batches",
                                       "penalty estimates over mini-batch sizes");
  study->add_option("--config", config_path, "json study config")->required();
  study->add_option("--scores", scores_path, "score file, one value per line");
  study->add_option("--out", out_path, "write the table to this csv");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(config_path, out_path);
    if (grid->parsed()) return cmd_grid(config_path, out_path, workers, svg);
    if (project->parsed())
      return cmd_project(config_path, scores_path, statistic, divergence, target,
                         target_opt->count() > 0, max_iterations, tolerance, out_path);
    if (study->parsed()) return cmd_study(config_path, scores_path, out_path);
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 1;
  }
  return 0;
}
