#include "smoothsde/kalman.hpp"

#include <numbers>
#include <string>

#include "smoothsde/errors.hpp"

namespace smoothsde {

CtcrwStep<double> ctcrw_step(double dt, double r, double s) {
    if (!(dt > 0.0)) throw DomainError("time step must be positive");
    if (!(r > 0.0)) throw DomainError("velocity reversion rate must be positive");
    if (!(s > 0.0)) throw DomainError("diffusion parameter must be positive");
    return ctcrw_step_matrices(dt, r, s);
}

void StateSpaceModel::check(std::size_t n, int obs_dim) const {
    const int d = state_dim();
    if (init_cov.rows() != d || init_cov.cols() != d) throw DimensionError("initial covariance has wrong shape");
    if (n > 0 && (transition.size() + 1 != n || noise.size() + 1 != n))
        throw DimensionError("need one transition per interval between observations");
    for (std::size_t i = 0; i < transition.size(); ++i)
        if (transition[i].rows() != d || transition[i].cols() != d || noise[i].rows() != d || noise[i].cols() != d)
            throw DimensionError("transition " + std::to_string(i) + " has wrong shape");
    if (obs_matrix.empty() || obs_noise.empty()) throw DimensionError("observation equation missing");
    if ((obs_matrix.size() != 1 && obs_matrix.size() != n) || (obs_noise.size() != 1 && obs_noise.size() != n))
        throw DimensionError("observation matrices must be shared or given per observation");
    for (const auto& H : obs_matrix)
        if (H.rows() != obs_dim || H.cols() != d) throw DimensionError("observation matrix has wrong shape");
    for (const auto& R : obs_noise)
        if (R.rows() != obs_dim || R.cols() != obs_dim) throw DimensionError("observation noise has wrong shape");
}

namespace {

struct FilterPass {
    std::vector<Eigen::VectorXd> pred_mean, filt_mean;
    std::vector<Eigen::MatrixXd> pred_cov, filt_cov;
    double loglik = 0.0;
};

FilterPass run_filter(const StateSpaceModel& model, const Eigen::MatrixXd& y, bool keep) {
    // Extended precision: a diffuse initial covariance leaves O(1) posterior
    // variances as differences of O(P0) terms.
    using Real = long double;
    using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
    using Vec = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
    const auto n = static_cast<std::size_t>(y.rows());
    model.check(n, static_cast<int>(y.cols()));
    const int d = model.state_dim();
    FilterPass pass;
    Vec a = model.init_mean.cast<Real>();
    Mat P = model.init_cov.cast<Real>();
    const Mat I = Mat::Identity(d, d);
    Real loglik = 0;
    bool any_observed = false;

    for (std::size_t i = 0; i < n; ++i) {
        if (i > 0) {
            const Mat T = model.transition[i - 1].cast<Real>();
            a = T * a;
            P = T * P * T.transpose() + model.noise[i - 1].cast<Real>();
            P = Real(0.5) * (P + P.transpose());
        }
        if (keep) {
            pass.pred_mean.push_back(a.cast<double>());
            pass.pred_cov.push_back(P.cast<double>());
        }

        std::vector<Eigen::Index> seen;
        for (Eigen::Index k = 0; k < y.cols(); ++k)
            if (!std::isnan(y(static_cast<Eigen::Index>(i), k))) seen.push_back(k);
        if (!seen.empty()) {
            any_observed = true;
            const auto q = static_cast<Eigen::Index>(seen.size());
            const auto& Hfull = model.H(i);
            const auto& Rfull = model.R(i);
            Mat H(q, d);
            Mat R(q, q);
            Vec v(q);
            for (Eigen::Index u = 0; u < q; ++u) {
                H.row(u) = Hfull.row(seen[u]).cast<Real>();
                v(u) = y(static_cast<Eigen::Index>(i), seen[u]);
                for (Eigen::Index w = 0; w < q; ++w) R(u, w) = Rfull(seen[u], seen[w]);
            }
            v -= H * a;
            const Mat PHt = P * H.transpose();
            Mat F = H * PHt + R;
            F = Real(0.5) * (F + F.transpose());
            Eigen::LLT<Mat> llt(F);
            if (llt.info() != Eigen::Success || !F.allFinite())
                throw NumericalError("innovation covariance is not positive definite at step " + std::to_string(i));
            const Mat L = llt.matrixL();
            Real logdet = 0;
            for (Eigen::Index u = 0; u < q; ++u) logdet += 2 * std::log(L(u, u));
            const Vec Finv_v = llt.solve(v);
            loglik += Real(-0.5) * (Real(q) * std::log(2 * std::numbers::pi_v<Real>) + logdet + v.dot(Finv_v));
            const Mat K = llt.solve(PHt.transpose()).transpose();
            a += K * v;
            // Joseph form keeps P symmetric positive semi-definite.
            const Mat IKH = I - K * H;
            P = IKH * P * IKH.transpose() + K * R * K.transpose();
            P = Real(0.5) * (P + P.transpose());
        }
        if (keep) {
            pass.filt_mean.push_back(a.cast<double>());
            pass.filt_cov.push_back(P.cast<double>());
        }
    }
    if (!any_observed) throw DataError("Kalman filter needs at least one observation");
    pass.loglik = static_cast<double>(loglik);
    return pass;
}

}  // namespace

double kalman_loglik(const StateSpaceModel& model, const Eigen::MatrixXd& y) {
    return run_filter(model, y, false).loglik;
}

SmoothedStates kalman_smooth(const StateSpaceModel& model, const Eigen::MatrixXd& y) {
    auto pass = run_filter(model, y, true);
    const std::size_t n = pass.filt_mean.size();
    SmoothedStates out;
    out.loglik = pass.loglik;
    out.filtered_mean = pass.filt_mean;
    out.filtered_cov = pass.filt_cov;
    out.mean.resize(n);
    out.cov.resize(n);
    out.mean[n - 1] = pass.filt_mean[n - 1];
    out.cov[n - 1] = pass.filt_cov[n - 1];
    for (std::size_t k = n - 1; k-- > 0;) {
        const auto& T = model.transition[k];
        // J = P_f T' P_p^-1, via a symmetric solve against the predicted covariance.
        Eigen::LDLT<Eigen::MatrixXd> ldlt(pass.pred_cov[k + 1]);
        const Eigen::MatrixXd J = ldlt.solve(T * pass.filt_cov[k]).transpose();
        out.mean[k] = pass.filt_mean[k] + J * (out.mean[k + 1] - pass.pred_mean[k + 1]);
        Eigen::MatrixXd C = pass.filt_cov[k] + J * (out.cov[k + 1] - pass.pred_cov[k + 1]) * J.transpose();
        out.cov[k] = 0.5 * (C + C.transpose());
    }
    return out;
}

StateSpaceModel ctcrw_model(const std::vector<double>& times, const std::vector<double>& r,
                            const std::vector<double>& s, double obs_var) {
    if (times.empty()) throw DimensionError("no observation times");
    const std::size_t n = times.size();
    if (r.size() + 1 < n || s.size() + 1 < n) throw DimensionError("need parameters for every interval");
    StateSpaceModel m;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const auto step = ctcrw_step(times[i + 1] - times[i], r[i], s[i]);
        Eigen::Matrix2d T;
        T << 1.0, step.T12, 0.0, step.T22;
        Eigen::Matrix2d Q;
        Q << step.Q11, step.Q12, step.Q12, step.Q22;
        m.transition.emplace_back(T);
        m.noise.emplace_back(Q);
    }
    Eigen::MatrixXd H(1, 2);
    H << 1.0, 0.0;
    m.obs_matrix = {H};
    m.obs_noise = {Eigen::MatrixXd::Constant(1, 1, obs_var)};
    m.init_mean = Eigen::Vector2d::Zero();
    m.init_cov = kDiffuseVariance * Eigen::Matrix2d::Identity();
    return m;
}

}  // namespace smoothsde
