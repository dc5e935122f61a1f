#include <doctest.h>

#include <cmath>
#include <numbers>

#include "helpers.hpp"
#include "smoothsde/diagnostics.hpp"
#include "smoothsde/errors.hpp"
#include "smoothsde/likelihood.hpp"
#include "smoothsde/rng.hpp"

using namespace smoothsde;
using doctest::Approx;

namespace {

std::vector<double> white_noise(std::size_t n, std::uint64_t seed) {
    smoothsde::Rng rng(seed);
    std::vector<double> x(n);
    for (auto& v : x) v = rng.normal();
    return x;
}

// Kolmogorov tail probability in its theta-function form.
double kolmogorov_tail(double lambda) {
    double s = 0.0;
    for (int k = 1; k <= 50; ++k) {
        const double a = (2 * k - 1) * std::numbers::pi;
        s += std::exp(-a * a / (8 * lambda * lambda));
    }
    return 1.0 - std::sqrt(2 * std::numbers::pi) / lambda * s;
}

Dataset bm_dataset(std::size_t n, double shift, std::uint64_t seed) {
    smoothsde::Rng rng(seed);
    std::vector<double> t(n);
    for (std::size_t i = 1; i < n; ++i) t[i] = t[i - 1] + 0.1 + rng.uniform();
    std::vector<double> z = testing::bm_path(t, 0.3, 0.7, seed + 1);
    for (auto& v : t) v += shift;
    Dataset d(std::vector<std::string>(n, "a"), t);
    d.add_numeric("z", z);
    return d;
}

ScenarioConfig small_scenario() {
    ScenarioConfig sc = default_scenario(ScenarioKind::BM_COVARIATE);
    sc.fine_length = 20000;
    sc.keep = 400;
    sc.num_basis = 6;
    return sc;
}

}  // namespace

TEST_SUITE("diagnostics") {

TEST_CASE("Euler residual") {
    CHECK(euler_residual(1.0, 1.0 + 0.4 * 0.25, 0.25, 0.4, 2.0) == Approx(0.0).scale(1.0));
    CHECK(euler_residual(1.0, 1.0 + 0.4 * 0.25 + 2.0 * 0.5, 0.25, 0.4, 2.0) == Approx(1.0));
    CHECK_THROWS_AS(euler_residual(0, 1, 0.0, 0, 1), DomainError);
    CHECK_THROWS_AS(euler_residual(0, 1, 1.0, 0, 0), DomainError);
}

TEST_CASE("residuals at the true parameters are standard normal") {
    const Dataset d = bm_dataset(3000, 0.0, 3);
    const ResponseData data = prepare_responses(Family::BM_DRIFT, d, {"z"});
    Eigen::MatrixXd theta(static_cast<Eigen::Index>(d.size()), 2);
    theta.col(0).setConstant(0.3);
    theta.col(1).setConstant(0.7);
    const ResidualSeries res = residuals(data, theta);
    REQUIRE(res.values.size() == d.size() - 1);
    CHECK(res.index.front() == 0);
    CHECK(res.index.back() == d.size() - 2);
    const KsResult ks = ks_test(res.values, [&](double x) { return reference_cdf(res, x); });
    CHECK(ks.p_value > 0.01);

    // Shifting every time stamp leaves the residuals unchanged.
    const ResidualSeries moved = residuals(prepare_responses(Family::BM_DRIFT, bm_dataset(3000, 1e3, 3), {"z"}), theta);
    for (std::size_t i = 0; i < res.values.size(); ++i) CHECK(moved.values[i] == Approx(res.values[i]).epsilon(1e-9));
}

TEST_CASE("latent-state families have no Euler residuals") {
    const Dataset d = bm_dataset(20, 0.0, 4);
    const ResponseData data = prepare_responses(Family::CTCRW, d, {"z"});
    CHECK_THROWS_AS(residuals(data, Eigen::MatrixXd::Ones(20, 2)), UnsupportedError);
}

TEST_CASE("t-increment residuals use a Student t reference") {
    const Dataset d = bm_dataset(50, 0.0, 5);
    FamilyAux aux;
    aux.nu = 5.0;
    const ResidualSeries res = residuals(prepare_responses(Family::T_INCREMENT, d, {"z"}, aux), Eigen::MatrixXd::Ones(50, 2));
    CHECK(res.reference == Reference::StudentT);
    CHECK(res.nu == 5.0);
    CHECK(reference_quantile(res, 0.975) == Approx(2.570581836).epsilon(1e-8));
    CHECK(reference_cdf(res, reference_quantile(res, 0.3)) == Approx(0.3).epsilon(1e-12));
}

TEST_CASE("QQ points") {
    ResidualSeries res;
    res.values = white_noise(1001, 6);
    const auto qq = qq_points(res);
    REQUIRE(qq.size() == 1001);
    CHECK(qq[500].theoretical == Approx(0.0).scale(1.0));
    for (std::size_t i = 1; i < qq.size(); ++i) {
        CHECK(qq[i].theoretical > qq[i - 1].theoretical);
        CHECK(qq[i].empirical >= qq[i - 1].empirical);
    }
    for (std::size_t i = 0; i < qq.size(); ++i) CHECK(qq[i].theoretical == Approx(-qq[1000 - i].theoretical).scale(1.0));
    // Central points of a normal sample lie near the diagonal.
    for (std::size_t i = 100; i <= 900; i += 100) CHECK(std::abs(qq[i].empirical - qq[i].theoretical) < 0.2);
    res.values.resize(9);
    CHECK_THROWS_AS(qq_points(res), DimensionError);
}

TEST_CASE("ACF of an AR(1) series") {
    smoothsde::Rng rng(7);
    std::vector<double> x(5000);
    for (std::size_t i = 1; i < x.size(); ++i) x[i] = 0.8 * x[i - 1] + rng.normal();
    const AcfResult a = acf(x, 5);
    REQUIRE(a.values.size() == 6);
    CHECK(a.values[0] == 1.0);
    for (int k = 1; k <= 3; ++k) CHECK(std::abs(a.values[static_cast<std::size_t>(k)] - std::pow(0.8, k)) < 0.05);
    CHECK(a.bound == Approx(1.96 / std::sqrt(5000.0)));

    std::vector<double> y = x;
    for (auto& v : y) v = 3.0 * v + 17.0;
    const AcfResult b = acf(y, 5);
    for (std::size_t k = 0; k < 6; ++k) CHECK(b.values[k] == Approx(a.values[k]).epsilon(1e-10));
    CHECK_THROWS_AS(acf(x, 5000), DimensionError);
}

TEST_CASE("ACF bounds are calibrated on white noise") {
    int outside = 0, total = 0;
    for (std::uint64_t s = 0; s < 200; ++s) {
        const AcfResult a = acf(white_noise(500, 1000 + s), 20);
        for (std::size_t k = 1; k <= 20; ++k, ++total) outside += std::abs(a.values[k]) > a.bound;
    }
    const double rate = static_cast<double>(outside) / total;
    CHECK(rate > 0.035);
    CHECK(rate < 0.065);
}

TEST_CASE("KS statistic and p-value") {
    const auto uniform = [](double x) { return std::clamp(x, 0.0, 1.0); };
    CHECK(ks_test({0.5}, uniform).statistic == Approx(0.5));
    CHECK(ks_test({0.1, 0.2, 0.3, 0.4}, uniform).statistic == Approx(0.6));
    for (std::size_t n : {20, 200, 2000}) {
        smoothsde::Rng rng(n);
        std::vector<double> x(n);
        for (auto& v : x) v = rng.uniform();
        const KsResult r = ks_test(x, uniform);
        const double sn = std::sqrt(static_cast<double>(n));
        CHECK(r.p_value == Approx(kolmogorov_tail((sn + 0.12 + 0.11 / sn) * r.statistic)).epsilon(1e-8));
    }
    // Rejection rate at 5% under the null.
    int rejected = 0;
    for (std::uint64_t s = 0; s < 1000; ++s) {
        const auto x = white_noise(100, 50000 + s);
        rejected += ks_test(x, [](double v) { return 0.5 * std::erfc(-v / std::sqrt(2.0)); }).p_value < 0.05;
    }
    CHECK(rejected > 30);
    CHECK(rejected < 70);
    // A shifted sample is rejected.
    auto shifted = white_noise(500, 9);
    for (auto& v : shifted) v += 0.5;
    CHECK(ks_test(shifted, [](double v) { return 0.5 * std::erfc(-v / std::sqrt(2.0)); }).p_value < 1e-6);
    CHECK_THROWS_AS(ks_test({}, uniform), DimensionError);
}

TEST_CASE("fitted residuals refuse CTCRW fits") {
    smoothsde::Rng rng(8);
    const Dataset d = bm_dataset(60, 0.0, 8);
    ModelSpec spec;
    spec.family = Family::CTCRW;
    spec.response = {"z"};
    spec.formulas = {testing::intercept_only("r"), testing::intercept_only("s")};
    const FitResult f = fit(spec, d);
    CHECK_THROWS_AS(residuals(f), UnsupportedError);
}

TEST_CASE("coverage at the extreme levels") {
    CoverageConfig cfg;
    cfg.replicates = 2;
    cfg.n_post = 200;
    cfg.grid_size = 20;
    cfg.threads = 1;
    cfg.level = 1.0;
    const CoverageResult all = coverage_experiment(small_scenario(), cfg);
    REQUIRE(all.failures == 0);
    CHECK(all.params == std::vector<std::string>{"r", "s"});
    CHECK(all.grid.front() == 0.0);
    CHECK(all.grid.back() == 1.0);
    for (double a : all.average) CHECK(a == 1.0);
    cfg.level = 0.0;
    for (double a : coverage_experiment(small_scenario(), cfg).average) CHECK(a == 0.0);
}

TEST_CASE("coverage grows with the level and is reproducible") {
    CoverageConfig cfg;
    cfg.replicates = 2;
    cfg.n_post = 300;
    cfg.grid_size = 30;
    cfg.seed = 5;
    double prev[2] = {-1.0, -1.0};
    for (double level : {0.5, 0.8, 0.95}) {
        cfg.level = level;
        const CoverageResult r = coverage_experiment(small_scenario(), cfg);
        REQUIRE(r.failures == 0);
        for (std::size_t a = 0; a < 2; ++a) {
            CHECK(r.average[a] >= prev[a]);
            prev[a] = r.average[a];
        }
    }
    const CoverageResult x = coverage_experiment(small_scenario(), cfg);
    const CoverageResult y = coverage_experiment(small_scenario(), cfg);
    CHECK(x.hits == y.hits);
    CHECK(x.replicates[1].nrmse == y.replicates[1].nrmse);
    cfg.grid_size = 1;
    CHECK_THROWS_AS(coverage_experiment(small_scenario(), cfg), DomainError);
}

TEST_CASE("worker threads honour the cap") {
    CHECK(worker_threads(3) >= 1);
    setenv("SMOOTHSDE_THREADS", "1", 1);
    CHECK(worker_threads(8) == 1);
    unsetenv("SMOOTHSDE_THREADS");
    CHECK(worker_threads(8) == 8);
}

}  // TEST_SUITE
