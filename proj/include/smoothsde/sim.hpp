#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "smoothsde/dataset.hpp"
#include "smoothsde/expression.hpp"
#include "smoothsde/inference.hpp"

namespace smoothsde {

enum class ScenarioKind { BM_COVARIATE, CTCRW_COVARIATE };

ScenarioKind parse_scenario(const std::string& tag);
std::string scenario_name(ScenarioKind kind);

struct ScenarioConfig {
    ScenarioKind kind = ScenarioKind::BM_COVARIATE;
    Curve r;
    Curve s;
    double dt = 0.01;
    std::size_t fine_length = 100000;
    std::size_t keep = 2000;
    int dims = 1;      // CTCRW_COVARIATE: 1 (z) or 2 (x, y)
    int num_basis = 10;
    std::uint64_t seed = 1;
};

/// Default truth curves of each scenario, as functions of x in [0, 1].
ScenarioConfig default_scenario(ScenarioKind kind);

/// Brownian motion path with step dt, min-max scaled to [0, 1].
std::vector<double> simulate_covariate(std::size_t n, std::uint64_t seed, double dt = 0.01);

/// Sorted indices of a uniform random subset of size n_keep of [0, length),
/// always containing 0.
std::vector<std::size_t> thin_irregular(std::size_t length, std::size_t n_keep, std::uint64_t seed);

struct ScenarioData {
    Dataset data;
    Curve r;
    Curve s;
    std::string covariate = "x1";
};

/// Simulates the fine path, thins it and returns the observed dataset with
/// columns z (or x, y) and the covariate x1.
ScenarioData run_scenario(const ScenarioConfig& cfg);

/// Model with r and s each a smooth of x1, matching the scenario's family.
ModelSpec scenario_model(const ScenarioConfig& cfg);

/// Root-mean-square error of an estimated curve against the truth,
/// divided by the range of the truth over the grid.
double normalized_rmse(const std::vector<double>& estimate, const std::vector<double>& truth);

}  // namespace smoothsde
