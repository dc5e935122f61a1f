#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "smoothsde/diagnostics.hpp"
#include "smoothsde/inference.hpp"
#include "smoothsde/sim.hpp"

namespace smoothsde {

inline constexpr const char* kVersion = "0.1.0";

struct PredictConfig {
    std::string covariate;  // empty: first smooth or linear covariate of the model
    int grid_size = 100;
    int n_post = 1000;
    double level = 0.95;
    std::map<std::string, double> fixed;
};

struct ResidualConfig {
    int max_lag = 20;
};

/// Parsed JSON run configuration.
struct RunConfig {
    std::string data_path;  // resolved against the config file's directory
    std::optional<ModelSpec> model;
    FitOptions fit;
    PredictConfig predict;
    std::optional<ScenarioConfig> scenario;
    CoverageConfig coverage;
    ResidualConfig residuals;
    std::uint64_t seed = 1;
    std::string text;  // raw configuration, for hashing
};

/// Throws ConfigError (with parse location for malformed JSON).
RunConfig parse_config(const std::string& text, const std::string& base_dir = ".");
RunConfig load_config(const std::string& path);

/// Canonical parameter name: mu/drift -> r, sigma/diffusion/scale -> s.
std::string canonical_param(const std::string& name);

/// 64-bit FNV-1a hash.
std::uint64_t fnv1a(const std::string& text);

}  // namespace smoothsde
