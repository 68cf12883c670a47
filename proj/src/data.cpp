#include "fairgrad/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "fairgrad/errors.hpp"

namespace fairgrad::data {

// RFC-4180 style: quoted fields may contain separators, newlines and doubled
// quotes. CRLF line ends are tolerated.
std::vector<std::vector<std::string>> parse_delimited(const std::string& text, char separator) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string cell;
  bool quoted = false;
  bool row_started = false;

  const auto end_cell = [&] {
    row.push_back(std::move(cell));
    cell.clear();
  };
  const auto end_row = [&] {
    end_cell();
    rows.push_back(std::move(row));
    row.clear();
    row_started = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cell += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell += c;
      }
      continue;
    }
    if (c == '"' && cell.empty()) {
      quoted = true;
      row_started = true;
    } else if (c == separator) {
      end_cell();
      row_started = true;
    } else if (c == '\n') {
      if (!cell.empty() && cell.back() == '\r') cell.pop_back();
      if (row_started || !cell.empty()) end_row();
    } else {
      cell += c;
      row_started = true;
    }
  }
  if (quoted) throw DataError("csv ends inside a quoted field");
  if (row_started || !cell.empty()) end_row();
  return rows;
}

namespace {

using nlohmann::json;

bool parse_double(const std::string& raw, double& out) {
  if (raw.empty()) return false;
  std::size_t used = 0;
  try {
    out = std::stod(raw, &used);
  } catch (const std::exception&) {
    return false;
  }
  while (used < raw.size() && std::isspace(static_cast<unsigned char>(raw[used]))) ++used;
  return used == raw.size() && std::isfinite(out);
}

Eigen::Index require_column(const std::unordered_map<std::string, Eigen::Index>& header,
                            const std::string& name) {
  const auto it = header.find(name);
  if (it == header.end()) throw DataError("schema references missing column \"" + name + "\"");
  return it->second;
}

std::string json_string(const json& node, const char* key, const std::string& fallback) {
  if (!node.contains(key)) return fallback;
  if (!node[key].is_string()) throw ConfigError(std::string("schema key \"") + key + "\" must be a string");
  return node[key].get<std::string>();
}

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Box-Muller keeps the draw sequence under our control instead of the
// library's distribution internals.
double standard_normal(std::mt19937_64& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

void DatasetSchema::validate() const {
  if (label.empty()) throw ConfigError("schema needs a label column");
  if (features.empty()) throw ConfigError("schema needs at least one feature column");
  if (sensitive.empty()) throw ConfigError("schema needs at least one sensitive column");
  std::unordered_set<std::string> sensitive_names;
  for (const auto& s : sensitive) sensitive_names.insert(s.name);
  for (const auto& f : features)
    if (sensitive_names.count(f.name))
      throw ConfigError("column \"" + f.name +
                        "\" is both a feature and sensitive; sensitive columns must stay out of "
                        "the model input");
  if (sensitive_names.count(label))
    throw ConfigError("label column \"" + label + "\" cannot be sensitive");
}

DatasetSchema DatasetSchema::from_json_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& err) {
    throw ConfigError(std::string("schema is not valid json: ") + err.what());
  }

  DatasetSchema schema;
  schema.label = json_string(root, "label", "");
  schema.positive_value = json_string(root, "positive_value", "1");
  const std::string sep = json_string(root, "separator", ",");
  if (sep.size() != 1) throw ConfigError("schema separator must be a single character");
  schema.separator = sep[0];
  schema.standardize = root.value("standardize", true);

  for (const auto& node : root.value("features", json::array())) {
    FeatureSpec f;
    if (node.is_string()) {
      f.name = node.get<std::string>();
    } else {
      f.name = json_string(node, "name", "");
      const std::string kind = json_string(node, "kind", "numeric");
      if (kind == "numeric") {
        f.kind = FeatureSpec::Kind::numeric;
      } else if (kind == "categorical") {
        f.kind = FeatureSpec::Kind::categorical;
      } else {
        throw ConfigError("feature kind must be numeric or categorical, got \"" + kind + "\"");
      }
      // hoisted: iterating .items() on the temporary itself would dangle
      const json remap = node.value("remap", json::object());
      for (const auto& [from, to] : remap.items()) f.remap[from] = to.get<std::string>();
    }
    if (f.name.empty()) throw ConfigError("feature entry without a name");
    schema.features.push_back(std::move(f));
  }

  for (const auto& node : root.value("sensitive", json::array())) {
    SensitiveSpec s;
    s.name = json_string(node, "name", "");
    if (s.name.empty()) throw ConfigError("sensitive entry without a name");
    const std::string kind = json_string(node, "kind", "categorical");
    if (kind == "categorical") {
      s.kind = SensitiveSpec::Kind::categorical;
    } else if (kind == "continuous") {
      s.kind = SensitiveSpec::Kind::continuous;
    } else {
      throw ConfigError("sensitive kind must be categorical or continuous, got \"" + kind +
                        "\"");
    }
    s.min_category_fraction = node.value("min_category_fraction", 0.0);
    schema.sensitive.push_back(std::move(s));
  }

  for (const auto& node : root.value("drop_columns", json::array()))
    schema.drop_columns.push_back(node.get<std::string>());

  for (const auto& node : root.value("drop_rows_where", json::array())) {
    RowDropRule rule;
    rule.column = json_string(node, "column", "");
    if (rule.column.empty()) throw ConfigError("drop_rows_where entry without a column");
    if (node.contains("equals")) rule.values.push_back(node["equals"].get<std::string>());
    for (const auto& v : node.value("any_of", json::array()))
      rule.values.push_back(v.get<std::string>());
    if (rule.values.empty())
      throw ConfigError("drop_rows_where for \"" + rule.column + "\" lists no values");
    schema.drop_rows_where.push_back(std::move(rule));
  }

  schema.validate();
  return schema;
}

DatasetSchema DatasetSchema::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open schema file " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_json_text(buffer.str());
}

Eigen::Index CategoryMap::index_of(const std::string& value) const {
  const auto it = std::find(values.begin(), values.end(), value);
  return it == values.end() ? -1 : static_cast<Eigen::Index>(it - values.begin());
}

const std::string& CategoryMap::value_of(Eigen::Index index) const {
  if (index < 0 || index >= size())
    throw DataError("category index " + std::to_string(index) + " out of range");
  return values[static_cast<std::size_t>(index)];
}

LoadedDataset load_csv_text(const DatasetSchema& schema, const std::string& text) {
  schema.validate();
  const auto rows = parse_delimited(text, schema.separator);
  if (rows.size() < 2) throw DataError("csv has no data rows");

  std::unordered_map<std::string, Eigen::Index> header;
  for (std::size_t j = 0; j < rows[0].size(); ++j)
    header.emplace(rows[0][j], static_cast<Eigen::Index>(j));

  const Eigen::Index label_col = require_column(header, schema.label);
  std::vector<Eigen::Index> feature_cols, sensitive_cols;
  for (const auto& f : schema.features) feature_cols.push_back(require_column(header, f.name));
  for (const auto& s : schema.sensitive) sensitive_cols.push_back(require_column(header, s.name));
  std::vector<Eigen::Index> rule_cols;
  for (const auto& rule : schema.drop_rows_where)
    rule_cols.push_back(require_column(header, rule.column));

  LoadedDataset out;

  // pass 1: filter rows and find unparseable cells
  std::vector<std::size_t> kept;
  const std::size_t width = rows[0].size();
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != width) {
      ++out.rows_with_errors;
      continue;
    }
    bool dropped = false;
    for (std::size_t k = 0; k < schema.drop_rows_where.size(); ++k) {
      const auto& values = schema.drop_rows_where[k].values;
      const std::string& cell = row[static_cast<std::size_t>(rule_cols[k])];
      if (std::find(values.begin(), values.end(), cell) != values.end()) {
        dropped = true;
        break;
      }
    }
    if (dropped) {
      ++out.rows_dropped_by_rule;
      continue;
    }
    bool bad = false;
    double parsed;
    for (std::size_t k = 0; k < schema.features.size(); ++k) {
      if (schema.features[k].kind != FeatureSpec::Kind::numeric) continue;
      if (!parse_double(row[static_cast<std::size_t>(feature_cols[k])], parsed)) {
        bad = true;
        break;
      }
    }
    for (std::size_t k = 0; !bad && k < schema.sensitive.size(); ++k) {
      if (schema.sensitive[k].kind != SensitiveSpec::Kind::continuous) continue;
      if (!parse_double(row[static_cast<std::size_t>(sensitive_cols[k])], parsed)) bad = true;
    }
    if (bad) {
      ++out.rows_with_errors;
      continue;
    }
    kept.push_back(r);
  }
  const Eigen::Index n = static_cast<Eigen::Index>(kept.size());
  if (n == 0) throw DataError("no rows left after filtering");

  const auto remapped = [&](const FeatureSpec& f, const std::string& raw) -> std::string {
    const auto it = f.remap.find(raw);
    return it == f.remap.end() ? raw : it->second;
  };

  // pass 2: build category maps in first-seen order
  out.feature_categories.resize(schema.features.size());
  out.sensitive_categories.resize(schema.sensitive.size());
  for (const std::size_t r : kept) {
    for (std::size_t k = 0; k < schema.features.size(); ++k) {
      if (schema.features[k].kind != FeatureSpec::Kind::categorical) continue;
      const std::string value =
          remapped(schema.features[k], rows[r][static_cast<std::size_t>(feature_cols[k])]);
      if (out.feature_categories[k].index_of(value) < 0)
        out.feature_categories[k].values.push_back(value);
    }
    for (std::size_t k = 0; k < schema.sensitive.size(); ++k) {
      if (schema.sensitive[k].kind != SensitiveSpec::Kind::categorical) continue;
      const std::string& value = rows[r][static_cast<std::size_t>(sensitive_cols[k])];
      if (out.sensitive_categories[k].index_of(value) < 0)
        out.sensitive_categories[k].values.push_back(value);
    }
  }

  // rare sensitive categories merge into "other"
  for (std::size_t k = 0; k < schema.sensitive.size(); ++k) {
    const auto& spec = schema.sensitive[k];
    if (spec.kind != SensitiveSpec::Kind::categorical || spec.min_category_fraction <= 0.0)
      continue;
    auto& cats = out.sensitive_categories[k];
    std::vector<Eigen::Index> counts(cats.values.size(), 0);
    for (const std::size_t r : kept)
      ++counts[static_cast<std::size_t>(
          cats.index_of(rows[r][static_cast<std::size_t>(sensitive_cols[k])]))];
    CategoryMap merged;
    bool any_rare = false;
    for (std::size_t c = 0; c < cats.values.size(); ++c) {
      if (static_cast<double>(counts[c]) >= spec.min_category_fraction * static_cast<double>(n))
        merged.values.push_back(cats.values[c]);
      else
        any_rare = true;
    }
    if (any_rare) merged.values.push_back("other");
    cats = std::move(merged);
  }

  // pass 3: encode
  Eigen::Index feature_width = 0;
  for (std::size_t k = 0; k < schema.features.size(); ++k) {
    if (schema.features[k].kind == FeatureSpec::Kind::numeric) {
      out.feature_names.push_back(schema.features[k].name);
      ++feature_width;
    } else {
      for (const auto& v : out.feature_categories[k].values)
        out.feature_names.push_back(schema.features[k].name + "=" + v);
      feature_width += out.feature_categories[k].size();
    }
  }
  Eigen::Index sensitive_width = 0;
  for (std::size_t k = 0; k < schema.sensitive.size(); ++k) {
    if (schema.sensitive[k].kind == SensitiveSpec::Kind::continuous) {
      out.group_names.push_back(schema.sensitive[k].name);
      ++sensitive_width;
    } else {
      for (const auto& v : out.sensitive_categories[k].values)
        out.group_names.push_back(schema.sensitive[k].name + "=" + v);
      sensitive_width += out.sensitive_categories[k].size();
    }
  }

  out.batch.features = Eigen::MatrixXd::Zero(n, feature_width);
  out.batch.sensitive = Eigen::MatrixXd::Zero(n, sensitive_width);
  out.batch.labels.resize(n);

  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = rows[kept[static_cast<std::size_t>(i)]];
    out.batch.labels(i) =
        row[static_cast<std::size_t>(label_col)] == schema.positive_value ? 1.0 : 0.0;

    Eigen::Index col = 0;
    for (std::size_t k = 0; k < schema.features.size(); ++k) {
      const std::string& raw = row[static_cast<std::size_t>(feature_cols[k])];
      if (schema.features[k].kind == FeatureSpec::Kind::numeric) {
        double value;
        parse_double(raw, value);
        out.batch.features(i, col++) = value;
      } else {
        const Eigen::Index idx =
            out.feature_categories[k].index_of(remapped(schema.features[k], raw));
        out.batch.features(i, col + idx) = 1.0;
        col += out.feature_categories[k].size();
      }
    }
    col = 0;
    for (std::size_t k = 0; k < schema.sensitive.size(); ++k) {
      const std::string& raw = row[static_cast<std::size_t>(sensitive_cols[k])];
      if (schema.sensitive[k].kind == SensitiveSpec::Kind::continuous) {
        double value;
        parse_double(raw, value);
        out.batch.sensitive(i, col++) = value;
      } else {
        Eigen::Index idx = out.sensitive_categories[k].index_of(raw);
        if (idx < 0) idx = out.sensitive_categories[k].index_of("other");
        out.batch.sensitive(i, col + idx) = 1.0;
        col += out.sensitive_categories[k].size();
      }
    }
  }

  out.batch.validate();
  return out;
}

LoadedDataset load_csv_file(const DatasetSchema& schema, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open data file " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return load_csv_text(schema, buffer.str());
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over the pair
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<Eigen::Index> shuffled_indices(Eigen::Index n, std::uint64_t key) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::mt19937_64 rng(key);
  for (Eigen::Index i = n - 1; i > 0; --i) {
    const Eigen::Index j =
        static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  return order;
}

std::pair<stats::SampleBatch, stats::SampleBatch> split(const stats::SampleBatch& batch,
                                                        double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0))
    throw ConfigError("split ratio must lie in (0,1), got " + std::to_string(ratio));
  const Eigen::Index n = batch.size();
  const auto order = shuffled_indices(n, mix_seed(seed, 0x5eed5));
  const Eigen::Index cut = static_cast<Eigen::Index>(static_cast<double>(n) * ratio);
  if (cut == 0 || cut == n)
    throw DataError("split of " + std::to_string(n) + " rows at ratio " +
                    std::to_string(ratio) + " leaves an empty side");
  const std::vector<Eigen::Index> head(order.begin(), order.begin() + cut);
  const std::vector<Eigen::Index> tail(order.begin() + cut, order.end());
  return {subset(batch, head), subset(batch, tail)};
}

std::vector<std::vector<Eigen::Index>> batch_indices(Eigen::Index n, Eigen::Index batch_size,
                                                     std::uint64_t seed, std::uint64_t epoch) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  const auto order = shuffled_indices(n, mix_seed(seed, epoch));
  std::vector<std::vector<Eigen::Index>> batches;
  for (Eigen::Index start = 0; start < n; start += batch_size) {
    const Eigen::Index stop = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + start, order.begin() + stop);
  }
  return batches;
}

stats::SampleBatch subset(const stats::SampleBatch& batch,
                          const std::vector<Eigen::Index>& indices) {
  stats::SampleBatch out;
  const Eigen::Index m = static_cast<Eigen::Index>(indices.size());
  out.features.resize(m, batch.features.cols());
  out.sensitive.resize(m, batch.sensitive.cols());
  out.labels.resize(m);
  if (batch.condition_weights) out.condition_weights.emplace(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::Index src = indices[static_cast<std::size_t>(i)];
    if (src < 0 || src >= batch.size())
      throw DataError("subset index " + std::to_string(src) + " out of range");
    out.features.row(i) = batch.features.row(src);
    out.sensitive.row(i) = batch.sensitive.row(src);
    out.labels(i) = batch.labels(src);
    if (batch.condition_weights) (*out.condition_weights)(i) = (*batch.condition_weights)(src);
  }
  return out;
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& features) {
  if (features.rows() == 0) throw DataError("cannot standardize an empty matrix");
  Standardizer s;
  s.mean = features.colwise().mean();
  const Eigen::ArrayXd var =
      (features.rowwise() - s.mean.transpose()).array().square().colwise().mean();
  s.scale = var.sqrt().max(1e-12).matrix();
  return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& features) const {
  if (features.cols() != mean.size())
    throw ShapeError("standardizer fit on " + std::to_string(mean.size()) +
                     " columns, applied to " + std::to_string(features.cols()));
  return (features.rowwise() - mean.transpose()).array().rowwise() /
         scale.transpose().array();
}

void SyntheticSpec::validate() const {
  if (samples < 1) throw ConfigError("synthetic spec needs samples >= 1");
  if (feature_dim < 1) throw ConfigError("synthetic spec needs feature_dim >= 1");
  const std::size_t groups = group_proportions.size();
  if (groups == 0) throw ConfigError("synthetic spec needs at least one group");
  if (base_rates.size() != groups)
    throw ConfigError("synthetic spec has " + std::to_string(base_rates.size()) +
                      " base rates for " + std::to_string(groups) + " groups");
  if (!group_separation.empty() && group_separation.size() != groups)
    throw ConfigError("group_separation must be empty or one value per group");
  double total = 0.0;
  for (const double p : group_proportions) {
    if (!(p > 0.0)) throw ConfigError("group proportions must be positive");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw ConfigError("group proportions sum to " + std::to_string(total) + ", expected 1");
  for (const double r : base_rates)
    if (!(r > 0.0 && r < 1.0))
      throw ConfigError("base rates must lie strictly in (0,1), got " + std::to_string(r));
  if (!(noise >= 0.0)) throw ConfigError("noise must be >= 0");
  for (const double s : group_separation)
    if (s != 0.0 && feature_dim < 2)
      throw ConfigError("group_separation needs feature_dim >= 2 for an offset axis");
}

SyntheticDataset synthesize(const SyntheticSpec& spec) {
  spec.validate();
  const Eigen::Index n = spec.samples;
  const Eigen::Index d = spec.feature_dim;
  const Eigen::Index groups = static_cast<Eigen::Index>(spec.group_proportions.size());
  std::mt19937_64 rng(mix_seed(spec.seed, 0xDA7A));

  std::vector<Eigen::Index> group_of(static_cast<std::size_t>(n));
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(groups);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = uniform01(rng);
    double acc = 0.0;
    Eigen::Index g = groups - 1;
    for (Eigen::Index k = 0; k < groups; ++k) {
      acc += spec.group_proportions[static_cast<std::size_t>(k)];
      if (u < acc) {
        g = k;
        break;
      }
    }
    group_of[static_cast<std::size_t>(i)] = g;
    counts(g) += 1.0;
  }
  for (Eigen::Index k = 0; k < groups; ++k)
    if (counts(k) == 0.0)
      throw DataError("group " + std::to_string(k) +
                      " received no samples; raise n or its proportion");

  const Eigen::VectorXd direction = Eigen::VectorXd::Constant(d, 1.0 / std::sqrt(double(d)));

  // Group offsets sit orthogonal to the score direction. They make group
  // membership visible in the features without shifting the scores, so the
  // separation knob controls how learnable the group bias is; pushing the
  // offset along the score direction instead would be cancelled exactly by
  // the per-group intercept calibration below.
  Eigen::VectorXd marker = Eigen::VectorXd::Zero(d);
  if (d >= 2) {
    marker(0) = M_SQRT1_2;
    marker(1) = -M_SQRT1_2;
  }

  SyntheticDataset out;
  out.batch.features.resize(n, d);
  out.batch.sensitive = Eigen::MatrixXd::Zero(n, groups);
  out.batch.labels.resize(n);
  out.bayes_scores.resize(n);

  Eigen::VectorXd raw(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index g = group_of[static_cast<std::size_t>(i)];
    const double offset =
        spec.group_separation.empty() ? 0.0 : spec.group_separation[static_cast<std::size_t>(g)];
    for (Eigen::Index j = 0; j < d; ++j)
      out.batch.features(i, j) = offset * marker(j) + spec.noise * standard_normal(rng);
    out.batch.sensitive(i, g) = 1.0;
    raw(i) = direction.dot(out.batch.features.row(i));
  }

  // Calibrate one intercept per group so the sample mean score equals the
  // requested base rate. The mean is monotone in the intercept, so bisection
  // on a wide bracket always lands.
  for (Eigen::Index k = 0; k < groups; ++k) {
    const double target = spec.base_rates[static_cast<std::size_t>(k)];
    double lo = -60.0, hi = 60.0;
    const auto mean_score = [&](double b) {
      double total = 0.0;
      for (Eigen::Index i = 0; i < n; ++i)
        if (group_of[static_cast<std::size_t>(i)] == k) total += sigmoid(raw(i) + b);
      return total / counts(k);
    };
    for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
      const double mid = 0.5 * (lo + hi);
      (mean_score(mid) < target ? lo : hi) = mid;
    }
    const double intercept = 0.5 * (lo + hi);
    for (Eigen::Index i = 0; i < n; ++i)
      if (group_of[static_cast<std::size_t>(i)] == k)
        out.bayes_scores(i) = sigmoid(raw(i) + intercept);
  }

  for (Eigen::Index i = 0; i < n; ++i)
    out.batch.labels(i) = uniform01(rng) < out.bayes_scores(i) ? 1.0 : 0.0;

  Eigen::VectorXd group_means = (out.batch.sensitive.transpose() * out.bayes_scores).array() /
                                counts.array();
  out.score_gap = group_means.maxCoeff() - group_means.minCoeff();

  out.batch.validate(true);
  return out;
}

}  // namespace fairgrad::data
