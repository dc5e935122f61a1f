#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "smoothsde/dataset.hpp"
#include "smoothsde/inference.hpp"
#include "smoothsde/rng.hpp"

namespace testing {

inline double normal_logpdf(double x, double mean, double sd) {
    const double u = (x - mean) / sd;
    return -0.5 * u * u - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

inline smoothsde::ParameterFormula intercept_only(const std::string& param) {
    return {param, {}};
}

inline smoothsde::ParameterFormula smooth_of(const std::string& param, const std::string& cov, int k,
                                             bool shrinkage = true) {
    smoothsde::FormulaTerm t;
    t.kind = smoothsde::TermKind::Smooth;
    t.covariate = cov;
    t.num_basis = k;
    t.shrinkage = shrinkage;
    return {param, {t}};
}

// Single-series dataset with unit time steps unless `dt` is given.
inline smoothsde::Dataset single_series(std::size_t n, double dt = 1.0, const std::string& id = "a") {
    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = static_cast<double>(i) * dt;
    return smoothsde::Dataset(std::vector<std::string>(n, id), t);
}

// Exact BM with drift r and sd s sampled at the dataset times.
inline std::vector<double> bm_path(const std::vector<double>& t, double r, double s, std::uint64_t seed) {
    smoothsde::Rng rng(seed);
    std::vector<double> z(t.size());
    for (std::size_t i = 1; i < t.size(); ++i) {
        const double dt = t[i] - t[i - 1];
        z[i] = z[i - 1] + r * dt + s * std::sqrt(dt) * rng.normal();
    }
    return z;
}

inline double max_abs(const Eigen::MatrixXd& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace testing
