#include <doctest.h>

#include <cmath>
#include <numbers>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "helpers.hpp"
#include "smoothsde/errors.hpp"
#include "smoothsde/rng.hpp"
#include "smoothsde/sde_models.hpp"

using namespace smoothsde;
using doctest::Approx;

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

// Simpson integral of exp(logf) over [a, b].
template <class F>
double simpson(F logf, double a, double b, int panels = 4000) {
    const double h = (b - a) / panels;
    double sum = 0.0;
    for (int i = 0; i <= panels; ++i) {
        const double w = (i == 0 || i == panels) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        sum += w * std::exp(logf(a + i * h));
    }
    return sum * h / 3.0;
}

double sample_mean(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    return m / static_cast<double>(v.size());
}

double sample_var(const std::vector<double>& v) {
    const double m = sample_mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

}  // namespace

TEST_SUITE("sde_models") {

TEST_CASE("family table") {
    CHECK(family_info(Family::OU).params == std::vector<std::string>{"r", "s"});
    CHECK(family_info(Family::BM_DRIFT).links[0] == Link::Identity);
    CHECK(family_info(Family::BM_DRIFT).links[1] == Link::Log);
    CHECK(family_info(Family::OU).links[0] == Link::Log);
    CHECK(family_info(Family::CTCRW).latent);
    CHECK(family_info(Family::T_INCREMENT).links[0] == Link::Identity);
    CHECK(parse_family("GBM") == Family::GBM);
    CHECK_THROWS_AS(parse_family("levy"), ConfigError);
}

TEST_CASE("Brownian motion density") {
    CHECK(logdens_bm(0, 0, 1, 0, 1) == Approx(-kHalfLog2Pi).epsilon(1e-12));
    CHECK(logdens_bm(0, 1, 1, 1, 1) == Approx(-kHalfLog2Pi).epsilon(1e-12));
    const double sd = 1.4 * std::sqrt(0.5);
    CHECK(logdens_bm(0.3, -0.2, 0.5, 0.7, 1.4) ==
          Approx(std::log(boost::math::pdf(boost::math::normal(0.3 + 0.35, sd), -0.2))).epsilon(1e-12));
    CHECK_THROWS_AS(logdens_bm(0, 0, 0, 0, 1), DomainError);
    CHECK_THROWS_AS(logdens_bm(0, 0, 1, 0, -1), DomainError);
}

TEST_CASE("geometric Brownian motion density") {
    CHECK(logdens_gbm(1, 1, 1, 0.5, 1) == Approx(-kHalfLog2Pi).epsilon(1e-12));
    smoothsde::Rng rng(1);
    for (int k = 0; k < 50; ++k) {
        const double z0 = std::exp(rng.normal()), z1 = std::exp(rng.normal());
        const double dt = 0.1 + rng.uniform(), r = rng.normal(), s = 0.2 + rng.uniform();
        // Lognormal pdf written out directly.
        const double m = std::log(z0) + (r - 0.5 * s * s) * dt;
        const double v = s * s * dt;
        const double u = std::log(z1) - m;
        const double oracle = std::exp(-u * u / (2 * v)) / (z1 * std::sqrt(2 * std::numbers::pi * v));
        CHECK(logdens_gbm(z0, z1, dt, r, s) == Approx(std::log(oracle)).epsilon(1e-12));
        CHECK(logdens_gbm(z0, z1, dt, r, s) ==
              Approx(logdens_bm(std::log(z0), std::log(z1), dt, r - 0.5 * s * s, s) - std::log(z1)).epsilon(1e-14));
    }
    CHECK_THROWS_AS(logdens_gbm(-1, 1, 1, 0, 1), DomainError);
    CHECK_THROWS_AS(logdens_gbm(1, 0, 1, 0, 1), DomainError);
}

TEST_CASE("Ornstein-Uhlenbeck moments and limits") {
    CHECK(ou_moments(2.0, 1.0, std::log(2.0), 1.0, 0.0).mean == Approx(1.0).epsilon(1e-14));
    const Moments stat = ou_moments(3.0, 50.0, 1.0, std::sqrt(2.0), 0.0);
    CHECK(stat.var == Approx(1.0).epsilon(1e-14));
    const Moments tiny = ou_moments(0.7, 1e-8, 1.0, 2.0, 0.0);
    CHECK(std::abs(tiny.mean - 0.7) < 1e-6);
    CHECK(tiny.var < 1e-6 * 4.0 * 1.01);
    const double m = ou_moments(0.4, 0.3, 1.2, 0.8, -0.5).mean;
    const double v = ou_moments(0.4, 0.3, 1.2, 0.8, -0.5).var;
    CHECK(logdens_ou(0.4, 0.1, 0.3, 1.2, 0.8, -0.5) == Approx(testing::normal_logpdf(0.1, m, std::sqrt(v))).epsilon(1e-12));
    CHECK_THROWS_AS(logdens_ou(0, 0, 1, 0, 1, 0), DomainError);
    CHECK_THROWS_AS(logdens_ou(0, 0, 1, -1, 1, 0), DomainError);
}

TEST_CASE("Euler density") {
    CHECK(logdens_euler(0.3, 0.9, 0.4, 0.2, 1.1) == logdens_bm(0.3, 0.9, 0.4, 0.2, 1.1));
    CHECK_THROWS_AS(logdens_euler(0, 0, 1, 0, 0), DomainError);
    // Euler OU against the exact density at a small step.
    const double dt = 1e-3;
    for (double z0 = -3; z0 <= 3; z0 += 0.5)
        for (double u = -1; u <= 1; u += 0.25) {
            const double z1 = z0 - z0 * dt + u * std::sqrt(dt);
            CHECK(std::abs(logdens_euler(z0, z1, dt, -z0, 1.0) - logdens_ou(z0, z1, dt, 1.0, 1.0, 0.0)) < 1e-3);
        }
}

TEST_CASE("Euler error halves with the step") {
    double ratio_sum = 0.0;
    int count = 0;
    for (double z0 : {-2.0, -1.0, 0.5, 1.5})
        for (double u : {-1.5, -0.5, 0.5, 1.5}) {
            auto err = [&](double dt) {
                const double z1 = z0 * std::exp(-dt) + u * std::sqrt(dt);
                return std::abs(logdens_euler(z0, z1, dt, -z0, 1.0) - logdens_ou(z0, z1, dt, 1.0, 1.0, 0.0));
            };
            ratio_sum += err(0.02) / err(0.01);
            ++count;
        }
    const double ratio = ratio_sum / count;
    CHECK(ratio > 1.7);
    CHECK(ratio < 2.3);
}

TEST_CASE("t-increment density") {
    const double at_zero = std::log(boost::math::pdf(boost::math::students_t(3.0), 0.0));
    CHECK(logdens_t_increment(0.5, 0.5, 1.0, 0.0, 1.0, 3.0) == Approx(at_zero).epsilon(1e-12));
    // Doubling the scale and the centred increment shifts by -log 2.
    const double a = logdens_t_increment(1.0, 1.0 + 0.2 * 0.5 + 0.7, 0.5, 0.2, 0.9, 4.0);
    const double b = logdens_t_increment(1.0, 1.0 + 0.2 * 0.5 + 1.4, 0.5, 0.2, 1.8, 4.0);
    CHECK(b - a == Approx(-std::log(2.0)).epsilon(1e-12));
    smoothsde::Rng rng(4);
    for (int k = 0; k < 50; ++k) {
        const double z0 = rng.normal(), dt = 0.1 + rng.uniform(), r = rng.normal(), sc = 0.5 + rng.uniform();
        const double z1 = z0 + r * dt + sc * std::sqrt(dt) * rng.normal();
        const double bm = logdens_bm(z0, z1, dt, r, sd_from_scale(sc, 200.0));
        CHECK(std::abs(logdens_t_increment(z0, z1, dt, r, sc, 200.0) - bm) < 0.01);
        const double u = (z1 - z0 - r * dt) / (sc * std::sqrt(dt));
        const double oracle = std::log(boost::math::pdf(boost::math::students_t(5.0), u)) - std::log(sc * std::sqrt(dt));
        CHECK(logdens_t_increment(z0, z1, dt, r, sc, 5.0) == Approx(oracle).epsilon(1e-12));
    }
    CHECK_THROWS_AS(logdens_t_increment(0, 0, 1, 0, 1, 2.0), DomainError);
}

TEST_CASE("densities integrate to one") {
    smoothsde::Rng rng(8);
    for (int k = 0; k < 20; ++k) {
        const double z0 = rng.normal(), dt = 0.05 + rng.uniform(), r = 0.1 + rng.uniform(), s = 0.2 + rng.uniform();
        const double sd_bm = s * std::sqrt(dt);
        const double m_bm = z0 + r * dt;
        CHECK(simpson([&](double z) { return logdens_bm(z0, z, dt, r, s); }, m_bm - 12 * sd_bm, m_bm + 12 * sd_bm) ==
              Approx(1.0).epsilon(1e-6));
        const Moments ou = ou_moments(z0, dt, r, s, 0.3);
        const double sd_ou = std::sqrt(ou.var);
        CHECK(simpson([&](double z) { return logdens_ou(z0, z, dt, r, s, 0.3); }, ou.mean - 12 * sd_ou,
                      ou.mean + 12 * sd_ou) == Approx(1.0).epsilon(1e-6));
        // GBM in log coordinates: f(e^u) e^u.
        const double x0 = std::exp(z0);
        const double mu = z0 + (r - 0.5 * s * s) * dt;
        CHECK(simpson([&](double u) { return logdens_gbm(x0, std::exp(u), dt, r, s) + u; }, mu - 12 * sd_bm,
                      mu + 12 * sd_bm) == Approx(1.0).epsilon(1e-6));
        // Student-t: the window mass equals the exact probability of the window.
        const double nu = 2.5 + 10.0 * rng.uniform();
        const double sd_t = sd_from_scale(s, nu) * std::sqrt(dt);
        const double lim = 12.0 * sd_t;
        const double window = simpson([&](double z) { return logdens_t_increment(z0, z, dt, r, s, nu); },
                                      m_bm - lim, m_bm + lim, 20000);
        const double exact = 1.0 - 2.0 * boost::math::cdf(boost::math::complement(
                                             boost::math::students_t(nu), lim / (s * std::sqrt(dt))));
        CHECK(window == Approx(exact).epsilon(1e-6));
    }
}

TEST_CASE("derived quantities") {
    CHECK(sd_from_scale(1, 4) == Approx(std::sqrt(2.0)).epsilon(1e-14));
    CHECK(sd_from_scale(2, 6) == Approx(2 * std::sqrt(1.5)).epsilon(1e-14));
    CHECK(std::abs(sd_from_scale(1.0, 1e6) - 1.0) < 1e-5);
    CHECK_THROWS_AS(sd_from_scale(1, 2), DomainError);
    CHECK(derived_speed_nu(std::numbers::pi / 4, 1) == Approx(1.0).epsilon(1e-14));
    CHECK(derived_speed_nu(std::numbers::pi / 16, 1) == Approx(2.0).epsilon(1e-14));
    CHECK(derived_speed_nu(4 * 0.3, 1.7) == Approx(0.5 * derived_speed_nu(0.3, 1.7)).epsilon(1e-14));
    CHECK_THROWS_AS(derived_speed_nu(0, 1), DomainError);
}

TEST_CASE("noiseless Brownian path is the integrated drift") {
    ThetaPath th{std::vector<double>(100, 0.3), std::vector<double>(100, 0.0)};
    const SimulatedPath p = simulate_path(Family::BM_DRIFT, th, 0.1, 2.0, 1);
    REQUIRE(p.values.size() == 101);
    CHECK(p.values.back() == Approx(2.0 + 100 * 0.3 * 0.1).epsilon(1e-12));
    CHECK(p.times.back() == Approx(10.0));
}

TEST_CASE("simulated Brownian increments have the right moments") {
    const std::size_t n = 100000;
    const double r = 0.4, s = 1.3, dt = 0.01;
    ThetaPath th{std::vector<double>(n, r), std::vector<double>(n, s)};
    const SimulatedPath p = simulate_path(Family::BM_DRIFT, th, dt, 0.0, 77);
    std::vector<double> inc(n);
    for (std::size_t i = 0; i < n; ++i) inc[i] = p.values[i + 1] - p.values[i];
    const double var = s * s * dt;
    CHECK(std::abs(sample_mean(inc) - r * dt) < 5 * std::sqrt(var / n));
    CHECK(std::abs(sample_var(inc) - var) < 5 * var * std::sqrt(2.0 / n));
}

TEST_CASE("simulated OU has the stationary variance") {
    const std::size_t n = 100000;
    ThetaPath th{std::vector<double>(n, 1.0), std::vector<double>(n, std::sqrt(2.0))};
    const SimulatedPath p = simulate_path(Family::OU, th, 0.1, 0.0, 5);
    const std::vector<double> tail(p.values.begin() + 1000, p.values.end());
    CHECK(std::abs(sample_var(tail) - 1.0) < 0.1);
}

TEST_CASE("simulation is reproducible and validated") {
    ThetaPath th{std::vector<double>(50, 0.1), std::vector<double>(50, 0.5)};
    CHECK(simulate_path(Family::GBM, th, 0.1, 1.0, 3).values == simulate_path(Family::GBM, th, 0.1, 1.0, 3).values);
    CHECK(simulate_path(Family::GBM, th, 0.1, 1.0, 3).values != simulate_path(Family::GBM, th, 0.1, 1.0, 4).values);
    CHECK_THROWS_AS(simulate_path(Family::GBM, th, 0.1, 0.0, 3), DomainError);
    CHECK_THROWS_AS(simulate_path(Family::BM_DRIFT, {{0.1}, {}}, 0.1, 0.0, 3), DimensionError);
}

}  // TEST_SUITE
