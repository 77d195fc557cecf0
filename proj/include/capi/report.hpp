#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "capi/engine.hpp"

namespace capi {

/// %.17g, which round-trips every double.
std::string format_double(double v);

/// One line of the records CSV.
struct RecordRow {
    std::string experiment;
    std::string grid_key;
    std::string grid_value;
    std::size_t run = 0;
    IterationRecord record;
};

inline constexpr std::array<const char*, 6> kMetricNames = {
    "empirical_loss", "sup_eval_error", "performance_loss", "mc_steps", "mc_return", "wall_ms"};

/// Metric i of kMetricNames; wall_ms only when `timing` is set.
std::optional<double> metric(const IterationRecord& rec, std::size_t i, bool timing);

/// Columns: experiment, grid_key, grid_value, run, iteration, then the
/// metrics in kMetricNames order. Absent values are empty.
void write_records_csv(std::ostream& out, const std::vector<RecordRow>& rows, bool timing);
std::vector<RecordRow> read_records_csv(std::istream& in);

struct MetricSummary {
    std::size_t count = 0;
    double mean = 0.0;
    double std_error = 0.0;
};

struct SummaryRow {
    std::string experiment;
    std::string grid_key;
    std::string grid_value;
    std::size_t iteration = 0;
    std::size_t runs = 0;
    std::array<std::optional<MetricSummary>, kMetricNames.size()> metrics;
};

/// Mean and standard error over runs per (experiment, grid point,
/// iteration), in order of first appearance.
std::vector<SummaryRow> summarize(const std::vector<RecordRow>& rows, bool timing);

/// Columns: experiment, grid_key, grid_value, iteration, runs, then
/// <metric>_mean and <metric>_se for each metric.
void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows);

/// Line chart of one metric against iteration with standard-error bars,
/// one series per (experiment, grid value). Returns false when no row
/// carries the metric.
bool write_svg(std::ostream& out, const std::vector<SummaryRow>& rows, std::size_t metric_index,
               const std::string& title);

}  // namespace capi
