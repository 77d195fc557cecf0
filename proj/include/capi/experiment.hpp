#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "capi/config.hpp"
#include "capi/engine.hpp"
#include "capi/report.hpp"

namespace capi {

struct RunOptions {
    bool svg = false;
    /// Fill the wall_ms column; off by default so reruns are byte-identical.
    bool timing = false;
    std::optional<std::size_t> threads;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> runs;
    std::optional<std::string> output_dir;
    /// Per-run policy directories for bound-check.
    bool write_run_dirs = true;
    std::ostream* log = nullptr;
};

struct ExperimentOutput {
    std::string records_path;
    std::string summary_path;
    std::vector<std::string> svg_paths;
    std::vector<RecordRow> rows;
    std::vector<SummaryRow> summary;
};

/// Dispatches on the algorithm kind.
RunResult run_algorithm(const AlgorithmSpec& algo);

/// Runs every (algorithm, grid point, run) task and writes
/// <name>_records.csv and <name>_summary.csv. If any task fails the CSVs
/// are removed and the error names the failing task.
ExperimentOutput run_experiment(ExperimentSpec spec, const RunOptions& options = {});

std::vector<std::string> reproduce_targets();
/// Config text of a reproduction target.
std::string reproduce_config(const std::string& target);
/// Differences from the published protocol, printed before a reproduction.
std::string reproduce_banner(const std::string& target);

}  // namespace capi
