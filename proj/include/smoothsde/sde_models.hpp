#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "smoothsde/basis.hpp"
#include "smoothsde/jet.hpp"

namespace smoothsde {

enum class Family { BM_DRIFT, GBM, OU, CTCRW, T_INCREMENT };

/// Static description of a family: parameter names and their links.
struct FamilyInfo {
    std::string tag;
    std::vector<std::string> params;
    std::vector<Link> links;
    bool latent = false;  // observed through a Kalman filter
};

const FamilyInfo& family_info(Family family);
Family parse_family(const std::string& tag);

/// Auxiliary scalars: OU centre of attraction and t-increment degrees of freedom.
struct FamilyAux {
    double zeta = 0.0;
    double nu = 3.0;
};

namespace detail {

using std::exp;
using std::expm1;
using std::log;
using std::log1p;
using std::sqrt;

inline constexpr double kLog2Pi = 1.8378770664093454836;

template <class T>
T normal_logpdf(double x, const T& mean, const T& var) {
    const T d = x - mean;
    return -0.5 * (kLog2Pi + log(var) + d * d / var);
}

template <class T>
T bm(double z0, double z1, double dt, const T& r, const T& s) {
    return normal_logpdf(z1, z0 + r * dt, s * s * dt);
}

template <class T>
T gbm(double z0, double z1, double dt, const T& r, const T& s) {
    return bm(std::log(z0), std::log(z1), dt, r - 0.5 * s * s, s) - std::log(z1);
}

/// (1 - exp(-x)) / x, stable for small x.
template <class T>
T one_minus_exp_over(const T& x) {
    return -expm1(-x) / x;
}

template <class T>
T ou(double z0, double z1, double dt, const T& r, const T& s, double zeta) {
    const T x = r * dt;
    const T mean = zeta + exp(-x) * (z0 - zeta);
    const T var = s * s * dt * one_minus_exp_over(2.0 * x);
    return normal_logpdf(z1, mean, var);
}

template <class T>
T euler(double z0, double z1, double dt, const T& mu, const T& sigma) {
    return normal_logpdf(z1, z0 + mu * dt, sigma * sigma * dt);
}

inline double t_log_normaliser(double nu) {
    return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) - 0.5 * std::log(nu * std::numbers::pi);
}

template <class T>
T t_increment(double z0, double z1, double dt, const T& r, const T& scale, double nu) {
    const T width = scale * std::sqrt(dt);
    const T u = (z1 - z0 - r * dt) / width;
    return t_log_normaliser(nu) - 0.5 * (nu + 1.0) * log1p(u * u / nu) - log(width);
}

}  // namespace detail

// Checked transition log-densities. Throw DomainError on invalid arguments.
double logdens_bm(double z_from, double z_to, double dt, double r, double s);
double logdens_gbm(double z_from, double z_to, double dt, double r, double s);
double logdens_ou(double z_from, double z_to, double dt, double r, double s, double zeta);
double logdens_euler(double z_from, double z_to, double dt, double mu, double sigma);
double logdens_t_increment(double z_from, double z_to, double dt, double r, double scale, double nu);

/// Conditional mean and variance of the exact OU transition.
struct Moments {
    double mean = 0.0;
    double var = 0.0;
};
Moments ou_moments(double z_from, double dt, double r, double s, double zeta);

/// Standard deviation of t increments per unit time from the scale parameter.
double sd_from_scale(double scale, double nu);

/// Speed of movement sqrt(pi) * s / (2 sqrt(r)) for the velocity OU model.
double derived_speed_nu(double r, double s);

/// Per-step parameter values, held constant over each step.
struct ThetaPath {
    std::vector<double> r;
    std::vector<double> s;
};

struct SimulatedPath {
    std::vector<double> times;
    std::vector<double> values;
    std::vector<double> velocity;  // CTCRW only
};

/// Forward simulation over steps of length dt; theta has one entry per step.
/// BM, GBM, OU and CTCRW use exact transitions; T_INCREMENT uses its
/// discrete-time definition.
SimulatedPath simulate_path(Family family, const ThetaPath& theta, double dt, double z0, std::uint64_t seed,
                            const FamilyAux& aux = {}, double v0 = 0.0);

}  // namespace smoothsde
