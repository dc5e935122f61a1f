#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "smoothsde/inference.hpp"
#include "smoothsde/sim.hpp"

namespace smoothsde {

enum class Reference { StandardNormal, StudentT };

struct ResidualSeries {
    std::vector<double> values;
    Reference reference = Reference::StandardNormal;
    double nu = 0.0;  // StudentT only
    std::vector<std::string> series;
    std::vector<std::size_t> index;      // row of the transition's start
    std::vector<int> dim;                // response column
};

/// (z1 - (z0 + mu dt)) / (sigma sqrt(dt)).
double euler_residual(double z0, double z1, double dt, double mu, double sigma);

/// Standardised Euler residuals from a fitted direct-observation model.
/// Throws UnsupportedError for latent-state families.
ResidualSeries residuals(const FitResult& fit);

/// Residuals from a parameter path (n x 2, natural scale) for a family.
ResidualSeries residuals(const ResponseData& data, const Eigen::MatrixXd& theta);

double reference_cdf(const ResidualSeries& res, double x);
double reference_quantile(const ResidualSeries& res, double p);

struct QQPoint {
    double theoretical = 0.0;
    double empirical = 0.0;
};

/// Sorted residuals against reference quantiles at (i - 0.5) / n.
std::vector<QQPoint> qq_points(const ResidualSeries& res);

struct AcfResult {
    std::vector<double> values;  // lags 0..max_lag
    double bound = 0.0;          // 1.96 / sqrt(n)
};

AcfResult acf(const std::vector<double>& x, int max_lag);

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

/// One-sample Kolmogorov-Smirnov test with the asymptotic distribution
/// evaluated at (sqrt(n) + 0.12 + 0.11 / sqrt(n)) D.
KsResult ks_test(std::vector<double> x, const std::function<double(double)>& cdf);

struct CoverageConfig {
    int replicates = 200;
    double level = 0.95;
    int n_post = 1000;
    int grid_size = 100;
    std::uint64_t seed = 1;
    int threads = 0;  // 0: hardware concurrency, capped by SMOOTHSDE_THREADS
    FitOptions fit;
};

struct ReplicateOutcome {
    int replicate = 0;
    bool ok = false;
    bool converged = false;
    std::string error;
    std::vector<double> coverage;  // per parameter, grid average
    std::vector<double> nrmse;     // per parameter
    double seconds = 0.0;
};

struct CoverageResult {
    std::vector<std::string> params;
    std::vector<double> grid;                  // covariate values
    std::vector<std::vector<int>> hits;        // [param][grid point]
    std::vector<double> average;               // per parameter
    std::vector<ReplicateOutcome> replicates;
    int failures = 0;
};

/// For each replicate: simulate, thin, fit, band from posterior draws on a
/// grid spanning [0, 1], and compare with the true curves. Replicates run
/// in parallel; each uses seeds derived from its index.
CoverageResult coverage_experiment(const ScenarioConfig& scenario, const CoverageConfig& cfg);

/// Number of worker threads: `requested` (or hardware concurrency) capped by
/// the SMOOTHSDE_THREADS environment variable.
int worker_threads(int requested = 0);

}  // namespace smoothsde
