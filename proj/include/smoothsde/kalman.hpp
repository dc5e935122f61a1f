#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "smoothsde/jet.hpp"

namespace smoothsde {

/// Transition of (position, velocity) under an integrated OU velocity over
/// one step: T = [[1, T12], [0, T22]], Q = [[Q11, Q12], [Q12, Q22]].
template <class T>
struct CtcrwStep {
    T T12, T22, Q11, Q12, Q22;
};

namespace detail {

/// x^-3 (x - 2(1 - e^-x) + (1 - e^-2x)/2), the scaled position variance.
template <class T>
T ctcrw_position_factor(const T& x) {
    using std::exp;
    using std::expm1;
    if (value_of(x) < 0.1) {
        // sum_{k>=3} (-1)^(k+1) (2^(k-1) - 2) / k! x^(k-3)
        T sum(0.0);
        T power(1.0);
        double factorial = 6.0;
        double two_pow = 4.0;
        for (int k = 3; k <= 16; ++k) {
            const double sign = (k % 2 == 1) ? 1.0 : -1.0;
            sum = sum + (sign * (two_pow - 2.0) / factorial) * power;
            power = power * x;
            factorial *= (k + 1);
            two_pow *= 2.0;
        }
        return sum;
    }
    const T bracket = x + 2.0 * expm1(-x) - 0.5 * expm1(-2.0 * x);
    return bracket / (x * x * x);
}

}  // namespace detail

template <class T>
CtcrwStep<T> ctcrw_step_matrices(double dt, const T& r, const T& s) {
    using std::exp;
    using std::expm1;
    const T x = r * dt;
    const T s2 = s * s;
    const T f1 = -expm1(-x) / x;            // (1 - e^-x) / x
    const T f2 = -expm1(-2.0 * x) / (2.0 * x);  // (1 - e^-2x) / 2x
    CtcrwStep<T> out;
    out.T12 = dt * f1;
    out.T22 = exp(-x);
    out.Q22 = s2 * dt * f2;
    out.Q12 = 0.5 * s2 * (dt * dt) * f1 * f1;
    out.Q11 = s2 * (dt * dt * dt) * detail::ctcrw_position_factor(x);
    return out;
}

/// Checked double-precision version; throws DomainError for r <= 0.
CtcrwStep<double> ctcrw_step(double dt, double r, double s);

/// Linear-Gaussian state-space model with time-varying matrices.
///
/// transition[i], noise[i] map the state at observation i to observation i + 1.
/// obs_matrix and obs_noise hold one entry per observation, or a single entry
/// shared by all observations.
struct StateSpaceModel {
    std::vector<Eigen::MatrixXd> transition;
    std::vector<Eigen::MatrixXd> noise;
    std::vector<Eigen::MatrixXd> obs_matrix;
    std::vector<Eigen::MatrixXd> obs_noise;
    Eigen::VectorXd init_mean;
    Eigen::MatrixXd init_cov;

    int state_dim() const { return static_cast<int>(init_mean.size()); }
    const Eigen::MatrixXd& H(std::size_t i) const { return obs_matrix.size() == 1 ? obs_matrix[0] : obs_matrix[i]; }
    const Eigen::MatrixXd& R(std::size_t i) const { return obs_noise.size() == 1 ? obs_noise[0] : obs_noise[i]; }
    /// Throws DimensionError when the matrices are inconsistent with n observations.
    void check(std::size_t n, int obs_dim) const;
};

/// Gaussian log-likelihood by prediction-error decomposition. Rows of `y` are
/// observations; NaN entries are missing and skip their update.
double kalman_loglik(const StateSpaceModel& model, const Eigen::MatrixXd& y);

struct SmoothedStates {
    std::vector<Eigen::VectorXd> filtered_mean;
    std::vector<Eigen::MatrixXd> filtered_cov;
    std::vector<Eigen::VectorXd> mean;
    std::vector<Eigen::MatrixXd> cov;
    double loglik = 0.0;
};

/// Rauch-Tung-Striebel smoother.
SmoothedStates kalman_smooth(const StateSpaceModel& model, const Eigen::MatrixXd& y);

/// State-space model of one coordinate of a CTCRW track with exact position
/// observations. r and s hold the parameters over each interval between
/// consecutive times. The initial state is diffuse (variance 1e8).
StateSpaceModel ctcrw_model(const std::vector<double>& times, const std::vector<double>& r,
                            const std::vector<double>& s, double obs_var = 0.0);

inline constexpr double kDiffuseVariance = 1e8;

}  // namespace smoothsde
