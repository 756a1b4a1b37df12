#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "imave/dataset.hpp"
#include "imave/fit.hpp"
#include "imave/metrics.hpp"
#include "imave/model_selection.hpp"

namespace imave {

// ---- CSV ----

// Rectangular CSV with a header row. Cells are raw strings; numeric parsing
// happens at the consumer. No embedded-quote support (values here are
// numeric or simple labels); ParseError on ragged rows.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> find(const std::string& name) const;
};

CsvTable read_csv(const std::string& path);
void write_csv(const std::string& path, const CsvTable& table);

// Dataset CSV: columns x1..xp, y, t, optional pi.
Dataset read_dataset_csv(const std::string& path);
void write_dataset_csv(const std::string& path, const Dataset& ds,
                       bool include_pi);

// Doubles are written with %.17g everywhere (round-trip exact).
std::string format_double(double v);
double parse_double(const std::string& s, const std::string& context);

// ---- Canonical JSON ----

// Hand-rolled writer with a fixed key order and %.17g numbers so that
// serialize(parse(serialize(x))) is byte-identical. Parsing uses a standard
// JSON parser.

std::string fit_result_to_json(const FitResult& fit);
FitResult fit_result_from_json(const std::string& text);

std::string cv_result_to_json(const CvResult& cv);
CvResult cv_result_from_json(const std::string& text);

// Evaluation report: rank/classification metrics plus benefit summaries;
// missing values serialize as null.
struct MetricReport {
  std::optional<double> rank_correlation;
  std::optional<double> classification_rate;
  BenefitMetrics benefit;
  bool has_benefit = false;
};

std::string metric_report_to_json(const MetricReport& report);

// Whole-file helpers.
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace imave
