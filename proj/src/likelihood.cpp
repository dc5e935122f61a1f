#include "smoothsde/likelihood.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "smoothsde/errors.hpp"
#include "smoothsde/kalman.hpp"

namespace smoothsde {

ResponseData prepare_responses(Family family, const Dataset& data, const std::vector<std::string>& responses,
                               const FamilyAux& aux) {
    if (responses.empty()) throw ConfigError("no response variable given");
    const auto& info = family_info(family);
    ResponseData out;
    out.family = family;
    out.aux = aux;
    out.series = data.series();
    out.time = data.times();
    const auto n = static_cast<Eigen::Index>(data.size());
    out.y.resize(n, static_cast<Eigen::Index>(responses.size()));
    for (std::size_t k = 0; k < responses.size(); ++k) {
        const auto& col = data.numeric(responses[k]);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double v = col[static_cast<std::size_t>(i)];
            if (std::isnan(v) && !info.latent)
                throw DataError("row " + std::to_string(i + 2) + ": missing response '" + responses[k] +
                                "' (only latent-state families accept missing responses)");
            if (!std::isnan(v) && !std::isfinite(v))
                throw DataError("row " + std::to_string(i + 2) + ": response '" + responses[k] + "' is not finite");
            if (family == Family::GBM && !(v > 0.0))
                throw DomainError("row " + std::to_string(i + 2) + ": geometric Brownian motion needs positive responses");
            out.y(i, static_cast<Eigen::Index>(k)) = v;
        }
    }
    if (family == Family::OU || family == Family::T_INCREMENT) {
        if (family == Family::T_INCREMENT && !(aux.nu > 2.0)) throw DomainError("degrees of freedom must exceed 2");
    }
    return out;
}

namespace {

template <class T>
T inverse_link(const T& eta, Link link) {
    using std::exp;
    return link == Link::Identity ? eta : exp(eta);
}

template <class T>
T transition_logdens(const ResponseData& data, double z0, double z1, double dt, const T& eta_r, const T& eta_s) {
    const auto& info = family_info(data.family);
    const T r = inverse_link(eta_r, info.links[0]);
    const T s = inverse_link(eta_s, info.links[1]);
    switch (data.family) {
        case Family::BM_DRIFT: return detail::bm(z0, z1, dt, r, s);
        case Family::GBM: return detail::gbm(z0, z1, dt, r, s);
        case Family::OU: return detail::ou(z0, z1, dt, r, s, data.aux.zeta);
        case Family::T_INCREMENT: return detail::t_increment(z0, z1, dt, r, s, data.aux.nu);
        case Family::CTCRW: break;
    }
    throw UnsupportedError("family has no direct transition density");
}

template <class T>
struct CtcrwState {
    T a1, a2, P11, P12, P22;
};

template <class T>
CtcrwState<T> ctcrw_predict(const CtcrwState<T>& x, double dt, const T& eta_r, const T& eta_s) {
    using std::exp;
    const auto st = ctcrw_step_matrices(dt, exp(eta_r), exp(eta_s));
    CtcrwState<T> p;
    p.a1 = x.a1 + st.T12 * x.a2;
    p.a2 = st.T22 * x.a2;
    p.P11 = x.P11 + 2.0 * st.T12 * x.P12 + st.T12 * st.T12 * x.P22 + st.Q11;
    p.P12 = st.T22 * x.P12 + st.T12 * st.T22 * x.P22 + st.Q12;
    p.P22 = st.T22 * st.T22 * x.P22 + st.Q22;
    return p;
}

// Exact position observation: returns the innovation log-density.
template <class T>
T ctcrw_update(CtcrwState<T>& x, double y) {
    using std::log;
    const T F = x.P11;
    const T v = y - x.a1;
    const T ll = -0.5 * (detail::kLog2Pi + log(F) + v * v / F);
    const T gain = x.P12 / F;
    x.a2 = x.a2 + gain * v;
    x.P22 = x.P22 - gain * x.P12;
    x.a1 = T(y);
    x.P11 = T(0.0);
    x.P12 = T(0.0);
    return ll;
}

// Predict and update from a state whose position is known exactly
// (P11 = P12 = 0). Algebraically equal to ctcrw_predict + ctcrw_update, but
// the P22^2 terms of the posterior velocity variance cancel in closed form,
// so a diffuse P22 loses no precision.
template <class T>
T ctcrw_anchored_step(CtcrwState<T>& x, double dt, const T& eta_r, const T& eta_s, double y) {
    using std::exp;
    using std::log;
    const auto st = ctcrw_step_matrices(dt, exp(eta_r), exp(eta_s));
    const T P = x.P22;
    const T F = st.T12 * st.T12 * P + st.Q11;
    const T P12 = st.T12 * st.T22 * P + st.Q12;
    const T v = y - x.a1 - st.T12 * x.a2;
    const T ll = -0.5 * (detail::kLog2Pi + log(F) + v * v / F);
    const T cross = st.T22 * st.T22 * st.Q11 + st.T12 * st.T12 * st.Q22 - 2.0 * st.T12 * st.T22 * st.Q12;
    const T det = st.Q11 * st.Q22 - st.Q12 * st.Q12;
    x.a2 = st.T22 * x.a2 + P12 * v / F;
    x.P22 = (P * cross + det) / F;
    x.a1 = T(y);
    x.P11 = T(0.0);
    x.P12 = T(0.0);
    return ll;
}

double ctcrw_value(const ResponseData& data, const Eigen::MatrixXd& eta, int* bad_row) {
    double total = 0.0;
    for (const auto& range : data.series) {
        for (Eigen::Index k = 0; k < data.y.cols(); ++k) {
            CtcrwState<double> x{0.0, 0.0, kDiffuseVariance, 0.0, kDiffuseVariance};
            for (std::size_t i = range.begin; i < range.end; ++i) {
                const double y = data.y(static_cast<Eigen::Index>(i), k);
                double ll = 0.0;
                if (i > range.begin) {
                    const auto row = static_cast<Eigen::Index>(i - 1);
                    const double dt = data.time[i] - data.time[i - 1];
                    if (!std::isnan(y) && x.P11 == 0.0 && x.P12 == 0.0) {
                        ll = ctcrw_anchored_step(x, dt, eta(row, 0), eta(row, 1), y);
                    } else {
                        x = ctcrw_predict(x, dt, eta(row, 0), eta(row, 1));
                        if (std::isnan(y)) continue;
                        ll = ctcrw_update(x, y);
                    }
                } else {
                    if (std::isnan(y)) continue;
                    ll = ctcrw_update(x, y);
                }
                if (!std::isfinite(ll) || !(x.P22 >= -1e-8 * kDiffuseVariance)) {
                    if (bad_row) *bad_row = static_cast<int>(i);
                    return -std::numeric_limits<double>::infinity();
                }
                total += ll;
            }
        }
    }
    return total;
}

// A quantity carried through the filter with its gradient and Hessian in the coefficients.
struct Tracked {
    double v = 0.0;
    bool active = false;
    Eigen::VectorXd g;
    Eigen::MatrixXd H;
};

// Forward propagation of first and second derivatives through the CTCRW
// filter. Each step is differentiated locally with a jet over the active
// state entries and the two linear predictors, then chained with the
// tracked derivatives of those inputs.
class CtcrwDerivFilter {
public:
    CtcrwDerivFilter(const ResponseData& data, const Eigen::MatrixXd& eta, const CoefficientMap& map)
        : data_(data), eta_(eta), map_(map), q_(map.size) {
        for (auto* set : {&state_, &next_})
            for (auto& t : *set) {
                t.g = Eigen::VectorXd::Zero(q_);
                t.H = Eigen::MatrixXd::Zero(q_, q_);
            }
        ll_.g = Eigen::VectorXd::Zero(q_);
        ll_.H = Eigen::MatrixXd::Zero(q_, q_);
        G_.resize(q_, 7);
        GL_.resize(q_, 7);
    }

    LoglikDerivs run() {
        LoglikDerivs out;
        for (const auto& range : data_.series)
            for (Eigen::Index k = 0; k < data_.y.cols(); ++k) out.value += run_series(range, k);
        out.grad = ll_.g;
        out.hess = ll_.H.selfadjointView<Eigen::Lower>();
        return out;
    }

private:
    double run_series(const SeriesRange& range, Eigen::Index k) {
        double total = 0.0;
        const double init[5] = {0.0, 0.0, kDiffuseVariance, 0.0, kDiffuseVariance};
        for (int u = 0; u < 5; ++u) {
            state_[static_cast<std::size_t>(u)].v = init[u];
            state_[static_cast<std::size_t>(u)].active = false;
        }
        for (std::size_t i = range.begin; i < range.end; ++i) {
            const double y = data_.y(static_cast<Eigen::Index>(i), k);
            if (i == range.begin) {
                // No transition yet; the state is free of coefficients.
                CtcrwState<double> x{init[0], init[1], init[2], init[3], init[4]};
                if (!std::isnan(y)) total += ctcrw_update(x, y);
                const double vals[5] = {x.a1, x.a2, x.P11, x.P12, x.P22};
                for (int u = 0; u < 5; ++u) state_[static_cast<std::size_t>(u)].v = vals[u];
                continue;
            }
            const bool anchored = !state_[0].active && !state_[2].active && !state_[3].active;
            total += anchored ? step<4>({1, 4}, i, y) : step<7>({0, 1, 2, 3, 4}, i, y);
        }
        return total;
    }

    // One transition into row i with jet variables for the listed state
    // entries; the remaining entries enter as constants.
    template <int N>
    double step(const std::array<int, N - 2>& vars, std::size_t i, double y) {
        using J = Jet<N>;
        const auto row = static_cast<Eigen::Index>(i - 1);
        J in[5];
        for (int u = 0; u < 5; ++u) in[u] = J(state_[static_cast<std::size_t>(u)].v);
        n_active_ = 0;
        for (int j = 0; j < N - 2; ++j) {
            const int u = vars[static_cast<std::size_t>(j)];
            in[u] = J::variable(state_[static_cast<std::size_t>(u)].v, j);
            if (state_[static_cast<std::size_t>(u)].active) {
                G_.col(n_active_) = state_[static_cast<std::size_t>(u)].g;
                slot_[static_cast<std::size_t>(n_active_)] = u;
                jet_index_[static_cast<std::size_t>(n_active_++)] = j;
            }
        }
        for (int a = 0; a < 2; ++a) {
            auto col = G_.col(n_active_);
            col.setZero();
            for (const auto& blk : map_.blocks[static_cast<std::size_t>(a)])
                col.segment(blk.offset, blk.X.cols()) = blk.X.row(row).transpose();
            slot_[static_cast<std::size_t>(n_active_)] = -1;
            jet_index_[static_cast<std::size_t>(n_active_++)] = N - 2 + a;
        }

        CtcrwState<J> x{in[0], in[1], in[2], in[3], in[4]};
        const double dt = data_.time[i] - data_.time[i - 1];
        const J er = J::variable(eta_(row, 0), N - 2);
        const J es = J::variable(eta_(row, 1), N - 1);
        const bool anchored = x.P11.v == 0.0 && x.P12.v == 0.0 && !state_[2].active && !state_[3].active;
        double ll = 0.0;
        if (anchored && !std::isnan(y)) {
            const J jll = ctcrw_anchored_step(x, dt, er, es, y);
            ll = jll.v;
            chain(jll, ll_, true);
        } else {
            x = ctcrw_predict(x, dt, er, es);
        }
        if (!anchored && !std::isnan(y)) {
            const J jll = ctcrw_update(x, y);
            ll = jll.v;
            chain(jll, ll_, true);
        }
        const J* outs[5] = {&x.a1, &x.a2, &x.P11, &x.P12, &x.P22};
        for (int u = 0; u < 5; ++u) chain(*outs[u], next_[static_cast<std::size_t>(u)], false);
        std::swap(state_, next_);
        return ll;
    }

    template <int N>
    void chain(const Jet<N>& jet, Tracked& dst, bool accumulate) {
        const int m = n_active_;
        bool nonzero = false;
        for (int a = 0; a < m; ++a) {
            const int ja = jet_index_[static_cast<std::size_t>(a)];
            jg_(a) = jet.g[static_cast<std::size_t>(ja)];
            nonzero = nonzero || jg_(a) != 0.0;
            for (int b = 0; b < m; ++b) {
                L_(a, b) = jet.hess(ja, jet_index_[static_cast<std::size_t>(b)]);
                nonzero = nonzero || L_(a, b) != 0.0;
            }
        }
        if (!accumulate) {
            dst.v = jet.v;
            dst.active = nonzero;
            if (!nonzero) return;
            dst.g.setZero();
            dst.H.setZero();
        }
        if (!nonzero) return;
        const Eigen::Index q = q_;
        const double* G = G_.data();
        double* GL = GL_.data();
        for (int b = 0; b < m; ++b) {
            double* out = GL + b * q;
            std::fill(out, out + q, 0.0);
            for (int a = 0; a < m; ++a) {
                const double c = L_(a, b);
                if (c == 0.0) continue;
                const double* col = G + a * q;
                for (Eigen::Index i = 0; i < q; ++i) out[i] += c * col[i];
            }
        }
        double* g = dst.g.data();
        double* H = dst.H.data();
        for (int a = 0; a < m; ++a) {
            const double c = jg_(a);
            if (c == 0.0) continue;
            const double* col = G + a * q;
            for (Eigen::Index i = 0; i < q; ++i) g[i] += c * col[i];
        }
        // Lower triangle of H += G L G^T, skipping zero entries of the predictor rows.
        for (Eigen::Index j = 0; j < q; ++j) {
            double* Hj = H + j * q;
            for (int a = 0; a < m; ++a) {
                const double c = G[a * q + j];
                if (c == 0.0) continue;
                const double* col = GL + a * q;
                for (Eigen::Index i = j; i < q; ++i) Hj[i] += c * col[i];
            }
        }
        for (int a = 0; a < m; ++a) {
            const int u = slot_[static_cast<std::size_t>(a)];
            const double c = jg_(a);
            if (u < 0 || c == 0.0) continue;
            const double* S = state_[static_cast<std::size_t>(u)].H.data();
            for (Eigen::Index j = 0; j < q; ++j)
                for (Eigen::Index i = j; i < q; ++i) H[j * q + i] += c * S[j * q + i];
        }
    }

    const ResponseData& data_;
    const Eigen::MatrixXd& eta_;
    const CoefficientMap& map_;
    int q_;
    std::array<Tracked, 5> state_, next_;
    Tracked ll_;
    Eigen::MatrixXd G_, GL_;
    Eigen::Matrix<double, 7, 7> L_;
    Eigen::Matrix<double, 7, 1> jg_;
    std::array<int, 7> slot_{};
    std::array<int, 7> jet_index_{};
    int n_active_ = 0;
};

LoglikDerivs ctcrw_derivs(const ResponseData& data, const Eigen::MatrixXd& eta, const CoefficientMap& map) {
    return CtcrwDerivFilter(data, eta, map).run();
}

}  // namespace

double loglik_value(const ResponseData& data, const Eigen::MatrixXd& eta, int* bad_row) {
    if (data.family == Family::CTCRW) return ctcrw_value(data, eta, bad_row);
    double total = 0.0;
    for (const auto& range : data.series) {
        for (std::size_t i = range.begin; i + 1 < range.end; ++i) {
            const auto row = static_cast<Eigen::Index>(i);
            const double dt = data.time[i + 1] - data.time[i];
            for (Eigen::Index k = 0; k < data.y.cols(); ++k) {
                const double ll = transition_logdens(data, data.y(row, k), data.y(row + 1, k), dt, eta(row, 0),
                                                     eta(row, 1));
                if (!std::isfinite(ll)) {
                    if (bad_row) *bad_row = static_cast<int>(i);
                    return -std::numeric_limits<double>::infinity();
                }
                total += ll;
            }
        }
    }
    return total;
}

LoglikDerivs loglik_derivs(const ResponseData& data, const Eigen::MatrixXd& eta, const CoefficientMap& map) {
    if (data.family == Family::CTCRW) return ctcrw_derivs(data, eta, map);

    // Transition densities depend on one row of eta each: accumulate per-row
    // derivatives in eta, then map through the design blocks.
    const Eigen::Index n = eta.rows();
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, 2);
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, 3);  // d2/dr2, d2/drds, d2/ds2
    LoglikDerivs out;
    using J = Jet<2>;
    for (const auto& range : data.series) {
        for (std::size_t i = range.begin; i + 1 < range.end; ++i) {
            const auto row = static_cast<Eigen::Index>(i);
            const double dt = data.time[i + 1] - data.time[i];
            const J er = J::variable(eta(row, 0), 0);
            const J es = J::variable(eta(row, 1), 1);
            for (Eigen::Index k = 0; k < data.y.cols(); ++k) {
                const J ll = transition_logdens(data, data.y(row, k), data.y(row + 1, k), dt, er, es);
                out.value += ll.v;
                g(row, 0) += ll.g[0];
                g(row, 1) += ll.g[1];
                w(row, 0) += ll.hess(0, 0);
                w(row, 1) += ll.hess(0, 1);
                w(row, 2) += ll.hess(1, 1);
            }
        }
    }

    out.grad = Eigen::VectorXd::Zero(map.size);
    out.hess = Eigen::MatrixXd::Zero(map.size, map.size);
    for (int a = 0; a < 2; ++a) {
        for (const auto& blk : map.blocks[static_cast<std::size_t>(a)])
            out.grad.segment(blk.offset, blk.X.cols()).noalias() += blk.X.transpose() * g.col(a);
    }
    for (int a = 0; a < 2; ++a) {
        for (int b = a; b < 2; ++b) {
            const Eigen::VectorXd weight = w.col(a + b);
            for (const auto& ba : map.blocks[static_cast<std::size_t>(a)]) {
                const Eigen::MatrixXd wa = weight.asDiagonal() * ba.X;
                for (const auto& bb : map.blocks[static_cast<std::size_t>(b)]) {
                    const Eigen::MatrixXd block = wa.transpose() * bb.X;
                    out.hess.block(ba.offset, bb.offset, block.rows(), block.cols()) += block;
                    if (a != b)
                        out.hess.block(bb.offset, ba.offset, block.cols(), block.rows()) += block.transpose();
                }
            }
        }
    }
    return out;
}

}  // namespace smoothsde
