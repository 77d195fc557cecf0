#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "capi/engine.hpp"

namespace capi {

/// Parse or validation failure pointing at a config line.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::size_t line, const std::string& message);
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

enum class AlgorithmKind { capi, vi, pi, fqi, dpi, zero_one_star };

std::string to_string(AlgorithmKind kind);

struct AlgorithmSpec {
    std::string label;
    AlgorithmKind kind = AlgorithmKind::capi;
    CapiConfig config;
};

struct SweepSpec {
    std::string key;
    std::vector<std::string> values;
    std::size_t line = 0;
};

struct ExperimentSpec {
    std::string name = "experiment";
    std::size_t runs = 1;
    std::uint64_t seed = 1;
    std::string output_dir = ".";
    std::size_t threads = 1;
    std::vector<AlgorithmSpec> algorithms;
    std::optional<SweepSpec> sweep;

    /// Number of grid points (1 without a sweep).
    std::size_t grid_size() const { return sweep ? sweep->values.size() : 1; }
    /// Algorithm `a` with the sweep value of grid point `g` applied.
    AlgorithmSpec resolved(std::size_t a, std::size_t g) const;
};

/// Sets one algorithm key; throws ContractViolation on unknown keys and
/// malformed values.
void apply_setting(AlgorithmSpec& algo, const std::string& key, const std::string& value);

/// INI-style file with [experiment], [algorithm <label>] and [sweep]
/// sections. Unknown keys, bad values and missing required keys are
/// reported with their line number.
ExperimentSpec parse_config(std::istream& in);
ExperimentSpec parse_config_file(const std::string& path);

/// Annotated config listing every key with its default.
std::string default_config_text();

}  // namespace capi
