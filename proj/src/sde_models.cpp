#include "smoothsde/sde_models.hpp"

#include <algorithm>

#include "smoothsde/errors.hpp"
#include "smoothsde/kalman.hpp"
#include "smoothsde/rng.hpp"

namespace smoothsde {

namespace {

void require(bool ok, const char* what) {
    if (!ok) throw DomainError(what);
}

void require_finite(std::initializer_list<double> xs) {
    for (double x : xs)
        if (!std::isfinite(x)) throw DomainError("non-finite argument to transition density");
}

}  // namespace

const FamilyInfo& family_info(Family family) {
    static const FamilyInfo bm{"BM_DRIFT", {"r", "s"}, {Link::Identity, Link::Log}, false};
    static const FamilyInfo gbm{"GBM", {"r", "s"}, {Link::Identity, Link::Log}, false};
    static const FamilyInfo ou{"OU", {"r", "s"}, {Link::Log, Link::Log}, false};
    static const FamilyInfo ctcrw{"CTCRW", {"r", "s"}, {Link::Log, Link::Log}, true};
    static const FamilyInfo t{"T_INCREMENT", {"r", "s"}, {Link::Identity, Link::Log}, false};
    switch (family) {
        case Family::BM_DRIFT: return bm;
        case Family::GBM: return gbm;
        case Family::OU: return ou;
        case Family::CTCRW: return ctcrw;
        case Family::T_INCREMENT: return t;
    }
    return bm;
}

Family parse_family(const std::string& tag) {
    std::string t = tag;
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::toupper(c); });
    if (t == "BM_DRIFT" || t == "BM") return Family::BM_DRIFT;
    if (t == "GBM") return Family::GBM;
    if (t == "OU") return Family::OU;
    if (t == "CTCRW") return Family::CTCRW;
    if (t == "T_INCREMENT" || t == "BM_T") return Family::T_INCREMENT;
    throw ConfigError("unknown SDE family '" + tag + "'");
}

double logdens_bm(double z_from, double z_to, double dt, double r, double s) {
    require_finite({z_from, z_to, dt, r, s});
    require(dt > 0.0, "time step must be positive");
    require(s > 0.0, "diffusion parameter must be positive");
    return detail::bm(z_from, z_to, dt, r, s);
}

double logdens_gbm(double z_from, double z_to, double dt, double r, double s) {
    require_finite({z_from, z_to, dt, r, s});
    require(z_from > 0.0 && z_to > 0.0, "geometric Brownian motion requires positive states");
    require(dt > 0.0, "time step must be positive");
    require(s > 0.0, "diffusion parameter must be positive");
    return detail::gbm(z_from, z_to, dt, r, s);
}

double logdens_ou(double z_from, double z_to, double dt, double r, double s, double zeta) {
    require_finite({z_from, z_to, dt, r, s, zeta});
    require(dt > 0.0, "time step must be positive");
    require(r > 0.0, "OU reversion rate must be positive");
    require(s > 0.0, "diffusion parameter must be positive");
    return detail::ou(z_from, z_to, dt, r, s, zeta);
}

double logdens_euler(double z_from, double z_to, double dt, double mu, double sigma) {
    require_finite({z_from, z_to, dt, mu, sigma});
    require(dt > 0.0, "time step must be positive");
    require(sigma > 0.0, "diffusion value must be positive");
    return detail::euler(z_from, z_to, dt, mu, sigma);
}

double logdens_t_increment(double z_from, double z_to, double dt, double r, double scale, double nu) {
    require_finite({z_from, z_to, dt, r, scale, nu});
    require(dt > 0.0, "time step must be positive");
    require(scale > 0.0, "scale parameter must be positive");
    require(nu > 2.0, "degrees of freedom must exceed 2");
    return detail::t_increment(z_from, z_to, dt, r, scale, nu);
}

Moments ou_moments(double z_from, double dt, double r, double s, double zeta) {
    require(dt > 0.0, "time step must be positive");
    require(r > 0.0, "OU reversion rate must be positive");
    const double x = r * dt;
    return {zeta + std::exp(-x) * (z_from - zeta), s * s * dt * detail::one_minus_exp_over(2.0 * x)};
}

double sd_from_scale(double scale, double nu) {
    require(nu > 2.0, "degrees of freedom must exceed 2");
    require(scale > 0.0, "scale parameter must be positive");
    return scale * std::sqrt(nu / (nu - 2.0));
}

double derived_speed_nu(double r, double s) {
    require(r > 0.0, "reversion rate must be positive");
    require(s > 0.0, "diffusion parameter must be positive");
    return std::sqrt(std::numbers::pi) * s / (2.0 * std::sqrt(r));
}

SimulatedPath simulate_path(Family family, const ThetaPath& theta, double dt, double z0, std::uint64_t seed,
                            const FamilyAux& aux, double v0) {
    require(dt > 0.0, "simulation step must be positive");
    if (theta.r.size() != theta.s.size()) throw DimensionError("theta paths differ in length");
    if (family == Family::GBM) require(z0 > 0.0, "geometric Brownian motion requires a positive initial state");
    if (family == Family::T_INCREMENT) require(aux.nu > 2.0, "degrees of freedom must exceed 2");

    const std::size_t steps = theta.r.size();
    Rng rng(seed);
    SimulatedPath path;
    path.times.resize(steps + 1);
    path.values.resize(steps + 1);
    path.times[0] = 0.0;
    path.values[0] = z0;
    if (family == Family::CTCRW) {
        path.velocity.resize(steps + 1);
        path.velocity[0] = v0;
    }
    const double sqdt = std::sqrt(dt);

    double z = z0;
    double v = v0;
    for (std::size_t k = 0; k < steps; ++k) {
        const double r = theta.r[k];
        const double s = theta.s[k];
        require(s >= 0.0, "diffusion parameter must be non-negative");
        switch (family) {
            case Family::BM_DRIFT:
                z += r * dt + s * sqdt * rng.normal();
                break;
            case Family::GBM:
                z *= std::exp((r - 0.5 * s * s) * dt + s * sqdt * rng.normal());
                break;
            case Family::OU: {
                require(r > 0.0, "OU reversion rate must be positive");
                const double x = r * dt;
                const double var = s * s * dt * detail::one_minus_exp_over(2.0 * x);
                z = aux.zeta + std::exp(-x) * (z - aux.zeta) + std::sqrt(var) * rng.normal();
                break;
            }
            case Family::CTCRW: {
                require(r > 0.0, "velocity reversion rate must be positive");
                const auto step = ctcrw_step_matrices(dt, r, s);
                const double e1 = rng.normal();
                const double e2 = rng.normal();
                // 2x2 Cholesky factor of the step covariance.
                const double l11 = std::sqrt(std::max(step.Q11, 0.0));
                const double l21 = l11 > 0.0 ? step.Q12 / l11 : 0.0;
                const double l22 = std::sqrt(std::max(step.Q22 - l21 * l21, 0.0));
                const double z_next = z + step.T12 * v + l11 * e1;
                v = step.T22 * v + l21 * e1 + l22 * e2;
                z = z_next;
                break;
            }
            case Family::T_INCREMENT:
                z += r * dt + s * sqdt * rng.student_t(aux.nu);
                break;
        }
        path.times[k + 1] = (k + 1) * dt;
        path.values[k + 1] = z;
        if (family == Family::CTCRW) path.velocity[k + 1] = v;
    }
    return path;
}

}  // namespace smoothsde
