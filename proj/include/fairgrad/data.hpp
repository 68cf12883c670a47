#ifndef FAIRGRAD_DATA_HPP
#define FAIRGRAD_DATA_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fairgrad/statistics.hpp"

namespace fairgrad::data {

struct FeatureSpec {
  enum class Kind { numeric, categorical };
  std::string name;
  Kind kind = Kind::numeric;
  std::map<std::string, std::string> remap;  // raw-value replacement before encoding
};

struct SensitiveSpec {
  enum class Kind { categorical, continuous };
  std::string name;
  Kind kind = Kind::categorical;
  /// Categories holding less than this fraction of rows merge into "other".
  double min_category_fraction = 0.0;
};

struct RowDropRule {
  std::string column;
  std::vector<std::string> values;  // drop the row when the raw cell matches any
};

struct DatasetSchema {
  std::string label;
  std::string positive_value;
  std::vector<FeatureSpec> features;
  std::vector<SensitiveSpec> sensitive;
  std::vector<std::string> drop_columns;  // documents raw columns deliberately unused
  std::vector<RowDropRule> drop_rows_where;
  bool standardize = true;
  char separator = ',';

  void validate() const;
  static DatasetSchema from_json_text(const std::string& text);
  static DatasetSchema from_json_file(const std::string& path);
};

struct CategoryMap {
  std::vector<std::string> values;  // index -> raw value, in first-seen order

  Eigen::Index index_of(const std::string& value) const;
  const std::string& value_of(Eigen::Index index) const;
  Eigen::Index size() const { return static_cast<Eigen::Index>(values.size()); }
};

struct LoadedDataset {
  stats::SampleBatch batch;  // unstandardized; fit a Standardizer on the train split
  std::vector<std::string> feature_names;  // expanded model-input columns
  std::vector<std::string> group_names;    // expanded sensitive columns
  std::vector<CategoryMap> feature_categories;    // one per categorical feature
  std::vector<CategoryMap> sensitive_categories;  // one per categorical sensitive axis
  Eigen::Index rows_dropped_by_rule = 0;
  Eigen::Index rows_with_errors = 0;  // unparseable cells; the rows are excluded
};

LoadedDataset load_csv_text(const DatasetSchema& schema, const std::string& text);
LoadedDataset load_csv_file(const DatasetSchema& schema, const std::string& path);

/// Raw delimited-text rows with RFC-4180 quoting; CRLF tolerated.
std::vector<std::vector<std::string>> parse_delimited(const std::string& text, char separator);

/// Deterministic seed mixing for independent random streams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// Fisher-Yates permutation of 0..n-1. Hand-rolled so the result depends only
/// on the generator, not on library shuffle internals.
std::vector<Eigen::Index> shuffled_indices(Eigen::Index n, std::uint64_t key);

std::pair<stats::SampleBatch, stats::SampleBatch> split(const stats::SampleBatch& batch,
                                                        double ratio, std::uint64_t seed);

/// Mini-batch index lists for one epoch, reshuffled per (seed, epoch); the
/// short final batch is kept.
std::vector<std::vector<Eigen::Index>> batch_indices(Eigen::Index n, Eigen::Index batch_size,
                                                     std::uint64_t seed, std::uint64_t epoch);

stats::SampleBatch subset(const stats::SampleBatch& batch,
                          const std::vector<Eigen::Index>& indices);

/// Column-wise centering and unit scaling. Fit on the train split only;
/// constant columns map to zero instead of dividing by zero.
struct Standardizer {
  Eigen::VectorXd mean, scale;

  static Standardizer fit(const Eigen::MatrixXd& features);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& features) const;
};

struct SyntheticSpec {
  Eigen::Index samples = 1000;
  Eigen::Index feature_dim = 4;
  std::vector<double> group_proportions = {0.5, 0.5};
  std::vector<double> base_rates = {0.5, 0.5};
  /// Per-group feature-cluster offset along the scoring direction. Larger
  /// values make group membership easier to infer from the features, so a
  /// model can pick up the injected disparity. Empty means all zero.
  std::vector<double> group_separation;
  double noise = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticDataset {
  stats::SampleBatch batch;
  Eigen::VectorXd bayes_scores;  // generating success probabilities per sample
  double score_gap = 0.0;        // widest pairwise difference of group mean scores
};

/// Gaussian feature clusters per group, offset orthogonally to the score
/// direction so separation controls how visible the groups are to a model
/// without moving the scores. Labels come from logistic scores whose
/// per-group intercepts are calibrated on the drawn sample, so group mean
/// scores hit the requested base rates almost exactly.
SyntheticDataset synthesize(const SyntheticSpec& spec);

}  // namespace fairgrad::data

#endif
