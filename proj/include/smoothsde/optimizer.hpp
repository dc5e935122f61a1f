#pragma once

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace smoothsde {

struct OptimizerOptions {
    int max_iterations = 200;
    double rel_tol = 1e-7;     // relative change in the objective
    double grad_tol = 1e-3;    // projected gradient, infinity norm
    double fd_step = 1e-4;     // relative central-difference step
    double max_step = 5.0;     // cap on the infinity norm of one step
};

struct OptimizerTraceEntry {
    int iteration = 0;
    double value = 0.0;
    double grad_norm = 0.0;
    double step = 0.0;
};

struct OptimizerResult {
    Eigen::VectorXd x;
    double value = 0.0;
    Eigen::VectorXd grad;
    double grad_norm = 0.0;  // projected, infinity norm
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
    std::string message;
    std::vector<OptimizerTraceEntry> trace;
};

using Objective = std::function<double(const Eigen::VectorXd&)>;

/// Central finite-difference gradient with step fd_step * max(1, |x_i|),
/// falling back to one-sided differences at box bounds.
/// When `curvature` is given, it receives the diagonal second differences
/// (NaN where a one-sided difference was used).
Eigen::VectorXd fd_gradient(const Objective& f, const Eigen::VectorXd& x, const Eigen::VectorXd& lower,
                            const Eigen::VectorXd& upper, double fd_step, int* evaluations = nullptr,
                            double fx = std::numeric_limits<double>::quiet_NaN(),
                            Eigen::VectorXd* curvature = nullptr);

/// Box-constrained BFGS with finite-difference gradients and Armijo
/// backtracking. The objective may return +inf to reject a point. The
/// inverse Hessian starts from the diagonal second differences.
OptimizerResult minimize_bfgs(const Objective& f, Eigen::VectorXd x0, const Eigen::VectorXd& lower,
                              const Eigen::VectorXd& upper, const OptimizerOptions& options = {});

}  // namespace smoothsde
