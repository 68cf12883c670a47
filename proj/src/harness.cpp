#include "fairgrad/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "fairgrad/errors.hpp"

namespace fairgrad::harness {

namespace {

using nlohmann::json;

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmtg(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (const char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

double parse_double_or(const std::string& raw, double fallback) {
  try {
    return std::stod(raw);
  } catch (const std::exception&) {
    return fallback;
  }
}

}  // namespace

double auroc(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels) {
  const Eigen::Index n = scores.size();
  if (labels.size() != n)
    throw ShapeError("auroc got " + std::to_string(n) + " scores for " +
                     std::to_string(labels.size()) + " labels");
  double positives = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (labels(i) != 0.0 && labels(i) != 1.0)
      throw DomainError("auroc labels must be 0 or 1");
    positives += labels(i);
  }
  const double negatives = static_cast<double>(n) - positives;
  if (positives == 0.0 || negatives == 0.0)
    throw UndefinedMetricError("auroc needs both classes present");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index a, Eigen::Index b) { return scores(a) < scores(b); });

  // average ranks across tie groups, then the Mann-Whitney identity
  double positive_rank_sum = 0.0;
  Eigen::Index i = 0;
  while (i < n) {
    Eigen::Index j = i;
    while (j + 1 < n && scores(order[static_cast<std::size_t>(j + 1)]) ==
                            scores(order[static_cast<std::size_t>(i)]))
      ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (Eigen::Index k = i; k <= j; ++k)
      if (labels(order[static_cast<std::size_t>(k)]) == 1.0) positive_rank_sum += rank;
    i = j + 1;
  }
  return (positive_rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

double max_violation(const stats::StatisticDef& stat, const stats::SampleBatch& batch,
                     const Eigen::VectorXd& scores) {
  const stats::ViolationVector v = stats::violation(stat, batch, ad::Tensor::constant(scores));
  return v.values.values().maxCoeff();
}

EllipseStats ellipse_stats(const std::vector<Eigen::Vector2d>& points) {
  const double n = static_cast<double>(points.size());
  if (points.size() < 2)
    throw DataError("ellipse statistics need at least two points, got " +
                    std::to_string(points.size()));
  EllipseStats out;
  for (const auto& p : points) out.mean += p;
  out.mean /= n;
  for (const auto& p : points) {
    const Eigen::Vector2d d = p - out.mean;
    out.covariance += d * d.transpose();
  }
  out.covariance /= (n - 1.0);  // sample covariance
  out.covariance /= n;          // covariance of the mean estimator
  return out;
}

BatchSizeStudy batch_size_study(const stats::StatisticDef& stat,
                                const penalty::PenaltySpec& spec,
                                const stats::SampleBatch& batch,
                                const Eigen::VectorXd& scores,
                                const std::vector<Eigen::Index>& sizes, std::uint64_t seed) {
  const Eigen::Index n = batch.size();
  if (scores.size() != n)
    throw ShapeError("study got " + std::to_string(scores.size()) + " scores for " +
                     std::to_string(n) + " samples");
  for (const Eigen::Index size : sizes)
    if (size < 1 || size > n)
      throw ConfigError("study sizes must lie in [1, n], got " + std::to_string(size));

  // one shuffle for the whole study; the full value uses the same order so a
  // chunk size of n reproduces it bit for bit
  const std::vector<Eigen::Index> order =
      data::shuffled_indices(n, data::mix_seed(seed, 0xBA7C));
  const stats::SampleBatch shuffled = data::subset(batch, order);
  Eigen::VectorXd shuffled_scores(n);
  for (Eigen::Index i = 0; i < n; ++i)
    shuffled_scores(i) = scores(order[static_cast<std::size_t>(i)]);

  const auto value_of = [&](Eigen::Index start, Eigen::Index count) {
    const std::vector<Eigen::Index> span = [&] {
      std::vector<Eigen::Index> ix(static_cast<std::size_t>(count));
      std::iota(ix.begin(), ix.end(), start);
      return ix;
    }();
    const stats::SampleBatch chunk = data::subset(shuffled, span);
    const ad::Tensor h = ad::Tensor::constant(shuffled_scores.segment(start, count));
    return penalty::evaluate_penalty(spec, stat, chunk, h).scalar();
  };

  BatchSizeStudy study;
  study.full_value = value_of(0, n);
  for (const Eigen::Index size : sizes) {
    BatchSizeRow row;
    row.size = size;
    double total = 0.0;
    Eigen::Index evaluated = 0;
    for (Eigen::Index start = 0; start < n; start += size) {
      const Eigen::Index count = std::min(size, n - start);
      ++row.chunks;
      try {
        total += value_of(start, count);
        ++evaluated;
      } catch (const DegenerateGroupError&) {
        ++row.skipped;
      }
    }
    row.mean_value =
        evaluated > 0 ? total / static_cast<double>(evaluated) : std::nan("");
    study.rows.push_back(row);
  }
  return study;
}

penalty::PenaltySpec penalty_spec_from_name(const std::string& name) {
  penalty::PenaltySpec spec;
  if (name == "l1" || name == "l2" || name == "linf") {
    spec.kind = penalty::PenaltySpec::Kind::norm;
    spec.order = penalty::norm_order_from_name(name);
  } else if (name == "smoothmax") {
    spec.kind = penalty::PenaltySpec::Kind::smoothmax;
  } else if (name == "kl" || name == "js" || name == "sed") {
    spec.kind = penalty::PenaltySpec::Kind::projection;
    spec.divergence = penalty::divergence_from_name(name);
  } else {
    throw ConfigError("unknown penalty \"" + name +
                      "\"; expected l1, l2, linf, smoothmax, kl, js or sed");
  }
  return spec;
}

std::string penalty_spec_name(const penalty::PenaltySpec& spec) {
  switch (spec.kind) {
    case penalty::PenaltySpec::Kind::norm:
      return penalty::norm_order_name(spec.order);
    case penalty::PenaltySpec::Kind::smoothmax:
      return "smoothmax";
    case penalty::PenaltySpec::Kind::projection:
      return penalty::divergence_name(spec.divergence);
  }
  throw ConfigError("penalty spec with unknown kind");
}

const std::vector<std::string>& reported_statistics() {
  static const std::vector<std::string> names = {
      "demographic_parity",
      "equal_opportunity",
      "predictive_parity",
      "treatment_equality",
  };
  return names;
}

void DataSource::validate() const {
  if (synthetic.has_value()) {
    if (!csv_path.empty() || !schema_path.empty())
      throw ConfigError("data source must be synthetic or a csv file, not both");
    synthetic->validate();
    return;
  }
  if (csv_path.empty()) throw ConfigError("data source needs \"synthetic\" or \"csv\"");
  if (schema_path.empty()) throw ConfigError("csv data source needs a \"schema\" file");
}

stats::SampleBatch load_source(const DataSource& source) {
  source.validate();
  if (source.synthetic.has_value()) return data::synthesize(*source.synthetic).batch;
  const data::DatasetSchema schema = data::DatasetSchema::from_json_file(source.schema_path);
  return data::load_csv_file(schema, source.csv_path).batch;
}

std::string cell_id(const CellConfig& cell) {
  return cell.train.statistic + "|" + cell.penalty_name + "|" + fmtg(cell.train.strength) +
         "|" + std::to_string(cell.train.seed);
}

RunResult run_cell(const stats::SampleBatch& full, const CellConfig& cell) {
  RunResult row;
  row.cell_id = cell_id(cell);
  row.dataset = cell.dataset;
  row.statistic = cell.train.statistic;
  row.penalty = cell.penalty_name;
  row.strength = cell.train.strength;
  row.seed = cell.train.seed;

  try {
    auto [train_set, test_set] = data::split(full, cell.split_ratio, cell.train.seed);
    const data::Standardizer standardizer = data::Standardizer::fit(train_set.features);
    train_set.features = standardizer.apply(train_set.features);
    test_set.features = standardizer.apply(test_set.features);

    const model::TrainOutcome outcome = model::train(train_set, cell.train);
    row.epochs = outcome.epochs;
    row.seconds = outcome.seconds;
    row.skipped_batches = outcome.skipped_batches;

    const Eigen::VectorXd train_scores =
        model::predict(outcome.params, train_set.features, cell.train.surrogate_scale);
    const Eigen::VectorXd test_scores =
        model::predict(outcome.params, test_set.features, cell.train.surrogate_scale);
    row.train_auroc = auroc(train_scores, train_set.labels);
    row.test_auroc = auroc(test_scores, test_set.labels);

    // all reported notions plus whichever one was optimized; a diagnostic
    // notion failing (say, a split with no positives in one group) degrades
    // to NaN, but losing the optimized notion fails the cell
    std::vector<std::string> notions = reported_statistics();
    if (std::find(notions.begin(), notions.end(), row.statistic) == notions.end())
      notions.push_back(row.statistic);
    for (const std::string& name : notions) {
      const stats::StatisticDef stat = stats::make_statistic(name);
      try {
        row.train_violation[name] = max_violation(stat, train_set, train_scores);
        row.test_violation[name] = max_violation(stat, test_set, test_scores);
      } catch (const Error& err) {
        row.train_violation.emplace(name, std::nan(""));
        row.test_violation.emplace(name, std::nan(""));
        if (name == row.statistic)
          throw ConfigError("optimized statistic unmeasurable: " + std::string(err.what()));
      }
    }
  } catch (const std::exception& err) {
    row.status = err.what()[0] != '\0' ? err.what() : "failed";
  }
  return row;
}

void GridSpec::validate() const {
  source.validate();
  if (statistics.empty()) throw ConfigError("grid needs at least one statistic");
  if (penalties.empty()) throw ConfigError("grid needs at least one penalty");
  if (strengths.empty()) throw ConfigError("grid needs at least one strength");
  if (seeds.empty()) throw ConfigError("grid needs at least one seed");
  if (!(split_ratio > 0.0 && split_ratio < 1.0))
    throw ConfigError("split_ratio must lie in (0,1)");
  for (const std::string& name : statistics) stats::make_statistic(name);
  for (const std::string& name : penalties) penalty_spec_from_name(name);
  for (const double strength : strengths)
    if (!(strength >= 0.0)) throw ConfigError("strengths must be >= 0");
}

std::vector<CellConfig> enumerate_cells(const GridSpec& spec) {
  spec.validate();
  std::vector<CellConfig> cells;
  for (const std::string& statistic : spec.statistics) {
    for (const std::string& name : spec.penalties) {
      for (const double strength : spec.strengths) {
        for (const std::uint64_t seed : spec.seeds) {
          CellConfig cell;
          cell.dataset = spec.source.name;
          cell.train = spec.base;
          cell.train.statistic = statistic;
          cell.train.penalty = penalty_spec_from_name(name);
          cell.train.strength = strength;
          cell.train.seed = seed;
          cell.penalty_name = name;
          cell.split_ratio = spec.split_ratio;
          cells.push_back(std::move(cell));
        }
      }
    }
  }
  return cells;
}

std::string results_csv_header() {
  std::string header =
      "cell_id,dataset,statistic,penalty,strength,seed,status,seconds,skipped_batches,"
      "train_auroc,test_auroc,train_violation_optimized,test_violation_optimized";
  for (const std::string& name : reported_statistics())
    header += ",train_violation_" + name + ",test_violation_" + name;
  return header;
}

std::string results_csv_row(const RunResult& row) {
  const auto violation = [](const std::map<std::string, double>& table,
                            const std::string& name) {
    const auto it = table.find(name);
    return it != table.end() ? it->second : std::nan("");
  };
  std::string out = csv_escape(row.cell_id) + "," + csv_escape(row.dataset) + "," +
                    csv_escape(row.statistic) + "," + csv_escape(row.penalty) + "," +
                    fmt17(row.strength) + "," + std::to_string(row.seed) + "," +
                    csv_escape(row.status) + "," + fmt17(row.seconds) + "," +
                    std::to_string(row.skipped_batches) + "," + fmt17(row.train_auroc) + "," +
                    fmt17(row.test_auroc) + "," +
                    fmt17(violation(row.train_violation, row.statistic)) + "," +
                    fmt17(violation(row.test_violation, row.statistic));
  for (const std::string& name : reported_statistics())
    out += "," + fmt17(violation(row.train_violation, name)) + "," +
           fmt17(violation(row.test_violation, name));
  return out;
}

std::vector<RunResult> read_results_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) return {};
  std::stringstream buffer;
  buffer << in.rdbuf();
  const auto rows = data::parse_delimited(buffer.str(), ',');
  if (rows.empty()) return {};

  std::unordered_map<std::string, std::size_t> column;
  for (std::size_t c = 0; c < rows[0].size(); ++c) column[rows[0][c]] = c;
  const auto need = [&](const char* name) {
    const auto it = column.find(name);
    if (it == column.end())
      throw DataError("results file " + path + " lacks column \"" + name + "\"");
    return it->second;
  };
  const std::size_t id_col = need("cell_id");
  const std::size_t status_col = need("status");

  const auto cell = [&](const std::vector<std::string>& fields, const char* name,
                        const char* fallback = "") -> std::string {
    const auto it = column.find(name);
    if (it == column.end() || it->second >= fields.size()) return fallback;
    return fields[it->second];
  };

  std::vector<RunResult> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& fields = rows[r];
    if (fields.size() <= std::max(id_col, status_col)) continue;
    RunResult row;
    row.cell_id = fields[id_col];
    row.status = fields[status_col];
    row.dataset = cell(fields, "dataset");
    row.statistic = cell(fields, "statistic");
    row.penalty = cell(fields, "penalty");
    row.strength = parse_double_or(cell(fields, "strength"), 0.0);
    try {
      row.seed = std::stoull(cell(fields, "seed", "0"));
    } catch (const std::exception&) {
      row.seed = 0;
    }
    row.seconds = parse_double_or(cell(fields, "seconds"), 0.0);
    try {
      row.skipped_batches = std::stol(cell(fields, "skipped_batches", "0"));
    } catch (const std::exception&) {
      row.skipped_batches = 0;
    }
    row.train_auroc = parse_double_or(cell(fields, "train_auroc"), std::nan(""));
    row.test_auroc = parse_double_or(cell(fields, "test_auroc"), std::nan(""));
    if (!row.statistic.empty()) {
      row.train_violation[row.statistic] =
          parse_double_or(cell(fields, "train_violation_optimized"), std::nan(""));
      row.test_violation[row.statistic] =
          parse_double_or(cell(fields, "test_violation_optimized"), std::nan(""));
    }
    for (const std::string& name : reported_statistics()) {
      row.train_violation[name] =
          parse_double_or(cell(fields, ("train_violation_" + name).c_str()), std::nan(""));
      row.test_violation[name] =
          parse_double_or(cell(fields, ("test_violation_" + name).c_str()), std::nan(""));
    }
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<RunResult> run_grid(const GridSpec& spec, const std::string& out_dir, int workers) {
  if (workers < 1) throw ConfigError("workers must be >= 1");
  const std::vector<CellConfig> cells = enumerate_cells(spec);
  const stats::SampleBatch batch = load_source(spec.source);

  std::filesystem::create_directories(out_dir);
  const std::string path = (std::filesystem::path(out_dir) / "results.csv").string();

  std::vector<RunResult> table = read_results_csv(path);
  std::unordered_set<std::string> finished;
  for (const RunResult& row : table)
    if (row.status == "ok") finished.insert(row.cell_id);

  std::vector<const CellConfig*> pending;
  for (const CellConfig& cell : cells)
    if (!finished.count(cell_id(cell))) pending.push_back(&cell);

  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw DataError("cannot open results file " + path);
  if (fresh) out << results_csv_header() << "\n" << std::flush;

  std::mutex write_lock;
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= pending.size()) break;
      RunResult row = run_cell(batch, *pending[i]);
      const std::lock_guard<std::mutex> hold(write_lock);
      out << results_csv_row(row) << "\n" << std::flush;
      table.push_back(std::move(row));
    }
  };

  const std::size_t thread_count =
      std::min<std::size_t>(static_cast<std::size_t>(workers), pending.size());
  if (thread_count <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < thread_count; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  return table;
}

std::string scatter_svg(const std::vector<RunResult>& rows) {
  struct Series {
    std::string label;
    std::vector<Eigen::Vector2d> points;
  };

  std::unordered_set<std::string> statistics;
  for (const RunResult& row : rows)
    if (row.status == "ok") statistics.insert(row.statistic);

  std::vector<Series> series;
  std::unordered_map<std::string, std::size_t> index;
  for (const RunResult& row : rows) {
    if (row.status != "ok") continue;
    const auto it = row.test_violation.find(row.statistic);
    if (it == row.test_violation.end()) continue;
    const double x = it->second, y = row.test_auroc;
    if (!std::isfinite(x) || !std::isfinite(y)) continue;
    std::string label = row.penalty + " lambda=" + fmtg(row.strength);
    if (statistics.size() > 1) label = row.statistic + " " + label;
    const auto [slot, fresh] = index.try_emplace(label, series.size());
    if (fresh) series.push_back({label, {}});
    series[slot->second].points.emplace_back(x, y);
  }

  double xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;
  bool first = true;
  for (const Series& s : series)
    for (const auto& p : s.points) {
      if (first) {
        xmin = xmax = p.x();
        ymin = ymax = p.y();
        first = false;
      }
      xmin = std::min(xmin, p.x());
      xmax = std::max(xmax, p.x());
      ymin = std::min(ymin, p.y());
      ymax = std::max(ymax, p.y());
    }
  const auto pad = [](double& lo, double& hi) {
    const double span = hi - lo;
    const double margin = span > 0.0 ? 0.1 * span : std::max(1e-6, std::abs(hi) * 0.1 + 1e-6);
    lo -= margin;
    hi += margin;
  };
  pad(xmin, xmax);
  pad(ymin, ymax);

  const double width = 640.0, height = 480.0, margin = 64.0;
  const double sx = (width - 2.0 * margin) / (xmax - xmin);
  const double sy = (height - 2.0 * margin) / (ymax - ymin);
  const auto px = [&](double x) { return margin + (x - xmin) * sx; };
  const auto py = [&](double y) { return height - margin - (y - ymin) * sy; };

  static const char* palette[] = {"#4269d0", "#efb118", "#ff725c", "#6cc5b0", "#3ca951",
                                  "#ff8ab7", "#a463f2", "#97bbf5", "#9c6b4e", "#9498a0"};
  constexpr std::size_t palette_size = sizeof(palette) / sizeof(palette[0]);

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  // axes with five ticks each
  svg << "<g stroke=\"#333\" stroke-width=\"1\">"
      << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\""
      << width - margin << "\" y2=\"" << height - margin << "\"/>"
      << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin
      << "\" y2=\"" << height - margin << "\"/></g>\n";
  svg << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#333\">\n";
  for (int t = 0; t <= 4; ++t) {
    const double fx = xmin + (xmax - xmin) * t / 4.0;
    const double fy = ymin + (ymax - ymin) * t / 4.0;
    svg << "<text x=\"" << px(fx) << "\" y=\"" << height - margin + 16
        << "\" text-anchor=\"middle\">" << fmtg(fx) << "</text>\n";
    svg << "<text x=\"" << margin - 8 << "\" y=\"" << py(fy) + 4
        << "\" text-anchor=\"end\">" << fmtg(fy) << "</text>\n";
  }
  svg << "<text x=\"" << width / 2 << "\" y=\"" << height - 16
      << "\" text-anchor=\"middle\">violation of optimized statistic (test)</text>\n";
  svg << "<text x=\"16\" y=\"" << height / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << height / 2 << ")\">test AUROC</text>\n</g>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = palette[s % palette_size];
    if (series[s].points.size() >= 2) {
      const EllipseStats stats = ellipse_stats(series[s].points);
      // map the covariance into pixel space before the eigen-decomposition:
      // the anisotropic axis scaling changes the ellipse's shape
      const double a = stats.covariance(0, 0) * sx * sx;
      const double b = -stats.covariance(0, 1) * sx * sy;
      const double c = stats.covariance(1, 1) * sy * sy;
      const double half_trace = 0.5 * (a + c);
      const double disc = std::sqrt(std::max(0.0, 0.25 * (a - c) * (a - c) + b * b));
      const double r1 = std::sqrt(std::max(0.0, half_trace + disc));
      const double r2 = std::sqrt(std::max(0.0, half_trace - disc));
      const double angle = 0.5 * std::atan2(2.0 * b, a - c) * 180.0 / M_PI;
      svg << "<ellipse cx=\"" << px(stats.mean.x()) << "\" cy=\"" << py(stats.mean.y())
          << "\" rx=\"" << std::max(r1, 0.5) << "\" ry=\"" << std::max(r2, 0.5)
          << "\" transform=\"rotate(" << fmtg(angle) << " " << px(stats.mean.x()) << " "
          << py(stats.mean.y()) << ")\" fill=\"" << color
          << "\" fill-opacity=\"0.15\" stroke=\"" << color << "\"/>\n";
    }
    for (const auto& p : series[s].points)
      svg << "<circle cx=\"" << px(p.x()) << "\" cy=\"" << py(p.y())
          << "\" r=\"3\" fill=\"" << color << "\" fill-opacity=\"0.85\"/>\n";
  }

  svg << "<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const double y = margin + 14.0 * static_cast<double>(s);
    svg << "<rect x=\"" << width - margin - 150 << "\" y=\"" << y - 9
        << "\" width=\"10\" height=\"10\" fill=\"" << palette[s % palette_size] << "\"/>"
        << "<text x=\"" << width - margin - 135 << "\" y=\"" << y << "\">" << series[s].label
        << "</text>\n";
  }
  svg << "</g>\n</svg>\n";
  return svg.str();
}

namespace {

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& err) {
    throw ConfigError(std::string("config is not valid json: ") + err.what());
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

data::SyntheticSpec synthetic_from_json(const json& node) {
  data::SyntheticSpec spec;
  spec.samples = node.value("samples", spec.samples);
  spec.feature_dim = node.value("feature_dim", spec.feature_dim);
  if (node.contains("group_proportions"))
    spec.group_proportions = node["group_proportions"].get<std::vector<double>>();
  if (node.contains("base_rates"))
    spec.base_rates = node["base_rates"].get<std::vector<double>>();
  if (node.contains("group_separation"))
    spec.group_separation = node["group_separation"].get<std::vector<double>>();
  spec.noise = node.value("noise", spec.noise);
  spec.seed = node.value("seed", spec.seed);
  return spec;
}

DataSource source_from_json(const json& node) {
  DataSource source;
  if (node.contains("synthetic")) source.synthetic = synthetic_from_json(node["synthetic"]);
  source.csv_path = node.value("csv", "");
  source.schema_path = node.value("schema", "");
  source.name = node.value("name", "");
  if (source.name.empty()) {
    if (source.synthetic.has_value()) {
      source.name = "synthetic";
    } else {
      source.name = std::filesystem::path(source.csv_path).stem().string();
    }
  }
  source.validate();
  return source;
}

penalty::PenaltySpec penalty_from_json(const json& node) {
  if (node.is_string()) return penalty_spec_from_name(node.get<std::string>());
  if (!node.is_object()) throw ConfigError("penalty must be a name or an object");
  penalty::PenaltySpec spec;
  if (node.contains("name")) spec = penalty_spec_from_name(node["name"].get<std::string>());
  if (node.contains("kind"))
    spec.kind = penalty::penalty_kind_from_name(node["kind"].get<std::string>());
  if (node.contains("order"))
    spec.order = penalty::norm_order_from_name(node["order"].get<std::string>());
  if (node.contains("divergence"))
    spec.divergence = penalty::divergence_from_name(node["divergence"].get<std::string>());
  if (node.contains("max_iterations"))
    spec.solver.max_iterations = node["max_iterations"].get<int>();
  if (node.contains("residual_tolerance"))
    spec.solver.residual_tolerance = node["residual_tolerance"].get<double>();
  if (node.contains("fixed_target")) spec.solver.fixed_target = node["fixed_target"].get<double>();
  return spec;
}

model::TrainConfig train_config_from_json(const json& node) {
  model::TrainConfig config;
  config.learning_rate = node.value("learning_rate", config.learning_rate);
  config.batch_size = node.value("batch_size", config.batch_size);
  config.epochs = node.value("epochs", config.epochs);
  if (node.contains("warmup_epochs")) {
    config.warmup_epochs = node["warmup_epochs"].get<int>();
  } else {
    // the default warmup must not outlast an explicitly shortened run
    config.warmup_epochs = std::min(config.warmup_epochs, config.epochs);
  }
  config.strength = node.value("strength", config.strength);
  config.statistic = node.value("statistic", config.statistic);
  config.seed = node.value("seed", config.seed);
  config.surrogate_scale = node.value("surrogate_scale", config.surrogate_scale);
  if (node.contains("hidden"))
    config.hidden = node["hidden"].get<std::vector<Eigen::Index>>();
  if (node.contains("penalty")) config.penalty = penalty_from_json(node["penalty"]);
  config.validate();
  return config;
}

}  // namespace

TrainJob train_job_from_json_text(const std::string& text) {
  const json root = parse_json(text);
  TrainJob job;
  if (!root.contains("data")) throw ConfigError("train config needs a \"data\" source");
  job.source = source_from_json(root["data"]);
  if (root.contains("train")) job.train = train_config_from_json(root["train"]);
  job.penalty_name = penalty_spec_name(job.train.penalty);
  job.split_ratio = root.value("split_ratio", job.split_ratio);
  if (!(job.split_ratio > 0.0 && job.split_ratio < 1.0))
    throw ConfigError("split_ratio must lie in (0,1)");
  return job;
}

TrainJob train_job_from_json_file(const std::string& path) {
  return train_job_from_json_text(read_file(path));
}

DataSource data_source_from_json_file(const std::string& path) {
  const json root = parse_json(read_file(path));
  return source_from_json(root.contains("data") ? root["data"] : root);
}

GridSpec grid_spec_from_json_text(const std::string& text) {
  const json root = parse_json(text);
  GridSpec spec;
  if (!root.contains("data")) throw ConfigError("grid config needs a \"data\" source");
  spec.source = source_from_json(root["data"]);
  if (root.contains("train")) spec.base = train_config_from_json(root["train"]);
  if (root.contains("statistics"))
    spec.statistics = root["statistics"].get<std::vector<std::string>>();
  if (root.contains("penalties"))
    spec.penalties = root["penalties"].get<std::vector<std::string>>();
  if (root.contains("strengths")) spec.strengths = root["strengths"].get<std::vector<double>>();
  if (root.contains("seeds")) spec.seeds = root["seeds"].get<std::vector<std::uint64_t>>();
  spec.split_ratio = root.value("split_ratio", spec.split_ratio);
  spec.validate();
  return spec;
}

GridSpec grid_spec_from_json_file(const std::string& path) {
  return grid_spec_from_json_text(read_file(path));
}

StudyJob study_job_from_json_text(const std::string& text) {
  const json root = parse_json(text);
  StudyJob job;
  if (!root.contains("data")) throw ConfigError("study config needs a \"data\" source");
  job.source = source_from_json(root["data"]);
  job.statistic = root.value("statistic", job.statistic);
  job.penalty_name = root.value("penalty", job.penalty_name);
  if (root.contains("sizes")) job.sizes = root["sizes"].get<std::vector<Eigen::Index>>();
  job.seed = root.value("seed", job.seed);
  if (job.sizes.empty()) throw ConfigError("study config needs a non-empty \"sizes\" list");
  stats::make_statistic(job.statistic);
  penalty_spec_from_name(job.penalty_name);
  return job;
}

StudyJob study_job_from_json_file(const std::string& path) {
  return study_job_from_json_text(read_file(path));
}

}  // namespace fairgrad::harness
