#include "smoothsde/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "smoothsde/errors.hpp"

namespace smoothsde {

Eigen::VectorXd fd_gradient(const Objective& f, const Eigen::VectorXd& x, const Eigen::VectorXd& lower,
                            const Eigen::VectorXd& upper, double fd_step, int* evaluations, double fx,
                            Eigen::VectorXd* curvature) {
    const Eigen::Index n = x.size();
    Eigen::VectorXd g(n);
    Eigen::VectorXd xp = x;
    double f0 = fx;
    if (curvature) curvature->setConstant(n, std::numeric_limits<double>::quiet_NaN());
    auto eval = [&](const Eigen::VectorXd& p) {
        if (evaluations) ++*evaluations;
        return f(p);
    };
    for (Eigen::Index i = 0; i < n; ++i) {
        const double h = fd_step * std::max(1.0, std::abs(x(i)));
        const bool up = x(i) + h <= upper(i);
        const bool down = x(i) - h >= lower(i);
        double fp = 0.0, fm = 0.0;
        if (up) {
            xp(i) = x(i) + h;
            fp = eval(xp);
        }
        if (down) {
            xp(i) = x(i) - h;
            fm = eval(xp);
        }
        xp(i) = x(i);
        if ((!up || !down) && std::isnan(f0)) f0 = eval(x);
        if (up && down) {
            g(i) = (fp - fm) / (2.0 * h);
            if (curvature && std::isfinite(f0)) (*curvature)(i) = (fp - 2.0 * f0 + fm) / (h * h);
        }
        else if (up) g(i) = (fp - f0) / h;
        else if (down) g(i) = (f0 - fm) / h;
        else g(i) = 0.0;
        if (!std::isfinite(g(i))) g(i) = 0.0;
    }
    return g;
}

namespace {

Eigen::VectorXd project(const Eigen::VectorXd& x, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper) {
    return x.cwiseMax(lower).cwiseMin(upper);
}

// Coordinates held at a bound because the gradient pushes outward.
std::vector<bool> bound_set(const Eigen::VectorXd& x, const Eigen::VectorXd& g, const Eigen::VectorXd& lower,
                            const Eigen::VectorXd& upper) {
    std::vector<bool> held(static_cast<std::size_t>(x.size()));
    for (Eigen::Index i = 0; i < x.size(); ++i)
        held[static_cast<std::size_t>(i)] = (x(i) <= lower(i) && g(i) > 0.0) || (x(i) >= upper(i) && g(i) < 0.0);
    return held;
}

double projected_norm(const Eigen::VectorXd& g, const std::vector<bool>& held) {
    double m = 0.0;
    for (Eigen::Index i = 0; i < g.size(); ++i)
        if (!held[static_cast<std::size_t>(i)]) m = std::max(m, std::abs(g(i)));
    return m;
}

}  // namespace

OptimizerResult minimize_bfgs(const Objective& f, Eigen::VectorXd x0, const Eigen::VectorXd& lower,
                              const Eigen::VectorXd& upper, const OptimizerOptions& options) {
    const Eigen::Index n = x0.size();
    if (lower.size() != n || upper.size() != n) throw DimensionError("optimizer bounds do not match start vector");
    OptimizerResult res;
    Eigen::VectorXd x = project(x0, lower, upper);
    double fx = f(x);
    ++res.evaluations;
    if (!std::isfinite(fx)) throw NumericalError("objective is not finite at the starting values");

    Eigen::VectorXd curv;
    Eigen::VectorXd g = fd_gradient(f, x, lower, upper, options.fd_step, &res.evaluations, fx, &curv);
    // Diagonal scaling from second differences; unit scale where unavailable.
    auto initial_inverse = [&](const Eigen::VectorXd& c) {
        Eigen::MatrixXd D = Eigen::MatrixXd::Identity(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
            if (std::isfinite(c(i)) && c(i) > 1e-8) D(i, i) = 1.0 / c(i);
        return D;
    };
    Eigen::MatrixXd H0 = initial_inverse(curv);
    Eigen::MatrixXd Hinv = H0;
    int flat_count = 0;

    for (int it = 1; it <= options.max_iterations; ++it) {
        res.iterations = it;
        auto held = bound_set(x, g, lower, upper);
        const double gnorm = projected_norm(g, held);
        if (gnorm <= options.grad_tol) {
            res.converged = true;
            res.message = "projected gradient below tolerance";
            break;
        }
        Eigen::VectorXd d = -(Hinv * g);
        for (Eigen::Index i = 0; i < n; ++i)
            if (held[static_cast<std::size_t>(i)]) d(i) = 0.0;
        if (g.dot(d) >= 0.0) {
            Hinv = H0;
            d = -(Hinv * g);
            for (Eigen::Index i = 0; i < n; ++i)
                if (held[static_cast<std::size_t>(i)]) d(i) = 0.0;
        }
        const double dmax = d.cwiseAbs().maxCoeff();
        double t = dmax > options.max_step ? options.max_step / dmax : 1.0;

        Eigen::VectorXd x_new;
        double f_new = std::numeric_limits<double>::infinity();
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls) {
            x_new = project(x + t * d, lower, upper);
            f_new = f(x_new);
            ++res.evaluations;
            if (std::isfinite(f_new) && f_new <= fx + 1e-4 * g.dot(x_new - x)) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            if (Hinv.isApprox(H0)) {
                res.message = "line search failed";
                break;
            }
            Hinv = H0;
            continue;
        }

        const Eigen::VectorXd g_new =
            fd_gradient(f, x_new, lower, upper, options.fd_step, &res.evaluations, f_new, &curv);
        H0 = initial_inverse(curv);
        const Eigen::VectorXd s = x_new - x;
        const Eigen::VectorXd y = g_new - g;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            const double rho = 1.0 / sy;
            const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
            Hinv = (I - rho * s * y.transpose()) * Hinv * (I - rho * y * s.transpose()) + rho * s * s.transpose();
        }
        const double change = std::abs(fx - f_new);
        res.trace.push_back({it, f_new, gnorm, s.cwiseAbs().maxCoeff()});
        x = x_new;
        g = g_new;
        fx = f_new;
        flat_count = change <= options.rel_tol * (1.0 + std::abs(fx)) ? flat_count + 1 : 0;
        if (flat_count >= 2) {
            res.converged = true;
            res.message = "relative change in objective below tolerance";
            break;
        }
    }
    if (!res.converged && res.message.empty()) res.message = "iteration limit reached";
    res.x = x;
    res.value = fx;
    res.grad = g;
    res.grad_norm = projected_norm(g, bound_set(x, g, lower, upper));
    return res;
}

}  // namespace smoothsde
