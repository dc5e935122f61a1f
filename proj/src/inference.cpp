#include "smoothsde/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

#include "smoothsde/rng.hpp"

namespace smoothsde {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<ParameterFormula> ordered_formulas(const ModelSpec& spec) {
    const auto& info = family_info(spec.family);
    std::vector<ParameterFormula> out;
    for (const auto& name : info.params) {
        const ParameterFormula* found = nullptr;
        for (const auto& f : spec.formulas) {
            if (f.param != name) continue;
            if (found) throw ConfigError("parameter '" + name + "' has more than one formula");
            found = &f;
        }
        if (!found) throw ConfigError("no formula for parameter '" + name + "' of family " + info.tag);
        out.push_back(*found);
    }
    for (const auto& f : spec.formulas)
        if (std::find(info.params.begin(), info.params.end(), f.param) == info.params.end())
            throw NameError("family " + info.tag + " has no parameter '" + f.param + "'");
    return out;
}

CoefficientBlock columns(const Eigen::MatrixXd& X, const ColumnRange& range, int offset) {
    return {offset, X.middleCols(range.begin, range.size)};
}

double log_det_spd(const Eigen::MatrixXd& H) {
    Eigen::LLT<Eigen::MatrixXd> llt(H);
    if (llt.info() != Eigen::Success) return kInf;
    return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

struct Increment {
    double z0, z1, dt;
};

std::vector<Increment> increments(const ResponseData& data, Eigen::Index dim) {
    std::vector<Increment> out;
    for (const auto& range : data.series) {
        std::size_t last = range.end;
        for (std::size_t i = range.begin; i < range.end; ++i) {
            const double z = data.y(static_cast<Eigen::Index>(i), dim);
            if (std::isnan(z)) continue;
            if (last != range.end)
                out.push_back({data.y(static_cast<Eigen::Index>(last), dim), z, data.time[i] - data.time[last]});
            last = i;
        }
    }
    return out;
}

}  // namespace

JointObjective::JointObjective(ModelSpec spec, const Dataset& data) : spec_(std::move(spec)) {
    if (spec_.family == Family::T_INCREMENT && !(spec_.aux.nu > 2.0))
        throw DomainError("degrees of freedom must exceed 2");
    if (spec_.estimate_zeta && spec_.family != Family::OU)
        throw ConfigError("zeta is only estimable for the OU family");
    data.validate();
    design_ = build_design_set(ordered_formulas(spec_), data);
    responses_ = prepare_responses(spec_.family, data, spec_.response, spec_.aux);

    for (Eigen::Index k = 0; k < responses_.y.cols(); ++k) {
        double lo = kInf, hi = -kInf;
        for (Eigen::Index i = 0; i < responses_.y.rows(); ++i) {
            const double v = responses_.y(i, k);
            if (std::isnan(v)) continue;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (!(hi > lo)) throw DegenerateError("response '" + spec_.response[static_cast<std::size_t>(k)] + "' is constant");
    }
    for (const auto& range : responses_.series)
        if (range.size() < 2) throw DataError("series '" + range.id + "' has fewer than two observations");

    const int P = design_.num_params();
    re_map_.size = p_re();
    joint_map_.size = p_fe() + p_re();
    re_map_.blocks.resize(static_cast<std::size_t>(P));
    joint_map_.blocks.resize(static_cast<std::size_t>(P));
    for (int a = 0; a < P; ++a) {
        const auto& fe = design_.fe_range[static_cast<std::size_t>(a)];
        const auto& re = design_.re_range[static_cast<std::size_t>(a)];
        if (fe.size > 0) joint_map_.blocks[static_cast<std::size_t>(a)].push_back(columns(design_.X_fe, fe, fe.begin));
        if (re.size > 0) {
            re_map_.blocks[static_cast<std::size_t>(a)].push_back(columns(design_.X_re, re, re.begin));
            joint_map_.blocks[static_cast<std::size_t>(a)].push_back(columns(design_.X_re, re, p_fe() + re.begin));
        }
    }

    for (const auto& prior : spec_.priors) {
        if (!(prior.sd > 0.0)) throw DomainError("prior '" + prior.name + "' needs a positive sd");
        if (prior.name == "zeta") {
            zeta_prior_ = &prior;
            continue;
        }
        auto it = std::find(design_.fe_labels.begin(), design_.fe_labels.end(), prior.name);
        if (it == design_.fe_labels.end()) throw NameError("prior on unknown fixed effect '" + prior.name + "'");
        alpha_priors_.emplace_back(static_cast<int>(it - design_.fe_labels.begin()), prior);
    }
}

Eigen::MatrixXd JointObjective::eta(const Eigen::VectorXd& alpha, const Eigen::VectorXd& beta) const {
    Eigen::MatrixXd out(design_.X_fe.rows(), design_.num_params());
    for (int a = 0; a < design_.num_params(); ++a) out.col(a) = linear_predictor(design_, alpha, beta, a);
    return out;
}

Eigen::MatrixXd JointObjective::penalty_matrix(const Eigen::VectorXd& log_lambda) const {
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(p_re(), p_re());
    for (std::size_t j = 0; j < design_.penalties.size(); ++j) {
        const auto& pen = design_.penalties[j];
        S.block(pen.begin, pen.begin, pen.size, pen.size) = std::exp(log_lambda(static_cast<Eigen::Index>(j))) * pen.matrix;
    }
    return S;
}

double JointObjective::penalty_nll(const Eigen::VectorXd& beta, const Eigen::VectorXd& log_lambda) const {
    if (log_lambda.size() != num_penalties()) throw DimensionError("log lambda has the wrong length");
    if (beta.size() != p_re()) throw DimensionError("random-effect coefficients have the wrong length");
    double total = 0.0;
    for (std::size_t j = 0; j < design_.penalties.size(); ++j) {
        const auto& pen = design_.penalties[j];
        const double ll = log_lambda(static_cast<Eigen::Index>(j));
        const auto b = beta.segment(pen.begin, pen.size);
        total += 0.5 * std::exp(ll) * b.dot(pen.matrix * b);
        total -= 0.5 * (pen.rank * ll + pen.log_pdet);
        total += 0.5 * pen.rank * kLog2Pi;
    }
    return total;
}

double JointObjective::prior_nll(const Eigen::VectorXd& alpha, const FamilyAux& aux) const {
    double total = 0.0;
    for (const auto& [index, prior] : alpha_priors_) {
        const double u = (alpha(index) - prior.mean) / prior.sd;
        total += 0.5 * u * u;
    }
    if (zeta_prior_) {
        const double u = (aux.zeta - zeta_prior_->mean) / zeta_prior_->sd;
        total += 0.5 * u * u;
    }
    return total;
}

double JointObjective::joint_nll(const Eigen::VectorXd& alpha, const Eigen::VectorXd& beta,
                                 const Eigen::VectorXd& log_lambda, const FamilyAux& aux, int* bad_row) const {
    ResponseData data = responses_;
    data.aux = aux;
    const double ll = loglik_value(data, eta(alpha, beta), bad_row);
    if (!std::isfinite(ll)) return kInf;
    return -ll + penalty_nll(beta, log_lambda) + prior_nll(alpha, aux);
}

InnerResult JointObjective::inner_mode(const Eigen::VectorXd& alpha, const Eigen::VectorXd& log_lambda,
                                       const FamilyAux& aux, const Eigen::VectorXd& beta0, int max_iterations,
                                       double tol) const {
    const int q = p_re();
    InnerResult res;
    res.beta = beta0.size() == q ? beta0 : Eigen::VectorXd::Zero(q);
    ResponseData data = responses_;
    data.aux = aux;
    const Eigen::MatrixXd S = penalty_matrix(log_lambda);

    auto value = [&](const Eigen::VectorXd& b) {
        const double ll = loglik_value(data, eta(alpha, b));
        if (!std::isfinite(ll)) return kInf;
        return -ll + penalty_nll(b, log_lambda) + prior_nll(alpha, aux);
    };
    auto derivs = [&](const Eigen::VectorXd& b, Eigen::VectorXd& grad, Eigen::MatrixXd& H) {
        const LoglikDerivs d = loglik_derivs(data, eta(alpha, b), re_map_);
        if (!std::isfinite(d.value)) throw InnerFailure("joint likelihood is not finite at the inner iterate", b);
        grad = -d.grad + S * b;
        H = -d.hess + S;
        return -d.value + penalty_nll(b, log_lambda) + prior_nll(alpha, aux);
    };
    auto newton_direction = [&](const Eigen::MatrixXd& H, const Eigen::VectorXd& grad) {
        Eigen::LLT<Eigen::MatrixXd> llt(H);
        double ridge = 1e-8 * std::max(1.0, H.diagonal().cwiseAbs().maxCoeff());
        Eigen::MatrixXd Hr = H;
        while (llt.info() != Eigen::Success) {
            Hr = H + ridge * Eigen::MatrixXd::Identity(q, q);
            llt.compute(Hr);
            ridge *= 10.0;
            if (!std::isfinite(ridge)) throw InnerFailure("inner Hessian could not be repaired", res.beta);
        }
        return Eigen::VectorXd(-llt.solve(grad));
    };

    Eigen::VectorXd grad;
    Eigen::MatrixXd H;
    double f = derivs(res.beta, grad, H);
    bool converged = false;
    for (int it = 0; it < max_iterations; ++it) {
        res.iterations = it + 1;
        if (grad.cwiseAbs().maxCoeff() < tol * (1.0 + std::abs(f))) {
            converged = true;
            break;
        }
        const Eigen::VectorXd d = newton_direction(H, grad);
        const double slope = grad.dot(d);
        // Newton decrement at rounding level: f cannot decrease further.
        if (-0.5 * slope < 1e-13 * (1.0 + std::abs(f))) {
            converged = true;
            break;
        }
        double t = 1.0;
        bool moved = false;
        for (int ls = 0; ls < 50; ++ls) {
            const Eigen::VectorXd trial = res.beta + t * d;
            const double ft = value(trial);
            if (std::isfinite(ft) && ft <= f + 1e-4 * t * slope) {
                res.beta = trial;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if (!moved) {
            // No further decrease is representable; accept if nearly stationary.
            if (grad.cwiseAbs().maxCoeff() < 1e-4 * (1.0 + std::abs(f))) {
                converged = true;
                break;
            }
            throw InnerFailure("inner line search failed", res.beta);
        }
        f = derivs(res.beta, grad, H);
    }
    if (!converged) throw InnerFailure("inner Newton iterations did not converge", res.beta);

    // One more full Newton step polishes the mode to rounding level.
    if (q > 0) {
        const Eigen::VectorXd trial = res.beta + newton_direction(H, grad);
        if (value(trial) <= f) {
            res.beta = trial;
            f = derivs(res.beta, grad, H);
        }
    }
    H = 0.5 * (H + H.transpose());
    if (q > 0) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(H, Eigen::EigenvaluesOnly);
        if (eig.eigenvalues().minCoeff() < 1e-10) {
            H += 1e-8 * Eigen::MatrixXd::Identity(q, q);
            res.degenerate = true;
        }
    }
    res.hessian = std::move(H);
    res.nll = f;
    return res;
}

double JointObjective::laplace_marginal_nll(const Eigen::VectorXd& alpha, const Eigen::VectorXd& log_lambda,
                                            const FamilyAux& aux, const Eigen::VectorXd& beta0, InnerResult* inner,
                                            int max_iterations, double tol) const {
    if (alpha.size() != p_fe()) throw DimensionError("fixed-effect coefficients have the wrong length");
    if (p_re() == 0) {
        const double v = joint_nll(alpha, Eigen::VectorXd(), log_lambda, aux);
        if (inner) *inner = InnerResult{Eigen::VectorXd(), Eigen::MatrixXd(), v, 0, false};
        return v;
    }
    InnerResult res = inner_mode(alpha, log_lambda, aux, beta0, max_iterations, tol);
    const double value = res.nll - 0.5 * p_re() * kLog2Pi + 0.5 * log_det_spd(res.hessian);
    if (inner) *inner = std::move(res);
    return value;
}

Eigen::MatrixXd JointObjective::joint_hessian(const Eigen::VectorXd& alpha, const Eigen::VectorXd& beta,
                                              const Eigen::VectorXd& log_lambda, const FamilyAux& aux) const {
    ResponseData data = responses_;
    data.aux = aux;
    const LoglikDerivs d = loglik_derivs(data, eta(alpha, beta), joint_map_);
    if (!std::isfinite(d.value)) throw NumericalError("likelihood is not finite at the estimate");
    Eigen::MatrixXd H = -d.hess;
    H.bottomRightCorner(p_re(), p_re()) += penalty_matrix(log_lambda);
    for (const auto& [index, prior] : alpha_priors_) H(index, index) += 1.0 / (prior.sd * prior.sd);
    return 0.5 * (H + H.transpose());
}

std::pair<Eigen::VectorXd, FamilyAux> JointObjective::start_values() const {
    const auto& info = family_info(spec_.family);
    FamilyAux aux = spec_.aux;
    double r = 0.0, s = 1.0;
    double sum_dz = 0.0, sum_dt = 0.0, sum_sq = 0.0;
    std::size_t count = 0;
    const Eigen::Index dims = responses_.y.cols();

    auto drift_and_scale = [&](auto transform) {
        for (Eigen::Index k = 0; k < dims; ++k)
            for (const auto& inc : increments(responses_, k)) {
                sum_dz += transform(inc.z1) - transform(inc.z0);
                sum_dt += inc.dt;
            }
        const double m = sum_dz / sum_dt;
        for (Eigen::Index k = 0; k < dims; ++k)
            for (const auto& inc : increments(responses_, k)) {
                const double e = transform(inc.z1) - transform(inc.z0) - m * inc.dt;
                sum_sq += e * e / inc.dt;
                ++count;
            }
        return std::pair{m, std::sqrt(sum_sq / static_cast<double>(count))};
    };

    switch (spec_.family) {
        case Family::BM_DRIFT: std::tie(r, s) = drift_and_scale([](double z) { return z; }); break;
        case Family::GBM: {
            auto [m, v] = drift_and_scale([](double z) { return std::log(z); });
            s = v;
            r = m + 0.5 * v * v;
            break;
        }
        case Family::T_INCREMENT: {
            auto [m, v] = drift_and_scale([](double z) { return z; });
            r = m;
            s = v * std::sqrt((aux.nu - 2.0) / aux.nu);
            break;
        }
        case Family::OU: {
            double mean = 0.0;
            std::size_t n = 0;
            for (Eigen::Index i = 0; i < responses_.y.rows(); ++i) {
                mean += responses_.y(i, 0);
                ++n;
            }
            mean /= static_cast<double>(n);
            if (spec_.estimate_zeta) aux.zeta = mean;
            // Least squares for dz = r (zeta - z) dt + noise.
            double num = 0.0, den = 0.0;
            const auto incs = increments(responses_, 0);
            for (const auto& inc : incs) {
                const double u = (aux.zeta - inc.z0) * inc.dt;
                num += u * (inc.z1 - inc.z0);
                den += u * u / inc.dt;
            }
            double total_time = 0.0;
            for (const auto& inc : incs) total_time += inc.dt;
            r = den > 0.0 ? num / den : 0.0;
            r = std::max(r, 10.0 / total_time);
            for (const auto& inc : incs) {
                const double mom = ou_moments(inc.z0, inc.dt, r, 1.0, aux.zeta).mean;
                const double unit_var = ou_moments(inc.z0, inc.dt, r, 1.0, aux.zeta).var;
                sum_sq += (inc.z1 - mom) * (inc.z1 - mom) / unit_var;
                ++count;
            }
            s = std::sqrt(sum_sq / static_cast<double>(count));
            break;
        }
        case Family::CTCRW: {
            // Velocities from successive displacements; their lag-one
            // correlation and variance give the OU rate and scale.
            double total_dt = 0.0, var = 0.0, lag = 0.0;
            std::size_t nv = 0, nl = 0;
            for (Eigen::Index k = 0; k < dims; ++k) {
                const auto incs = increments(responses_, k);
                std::vector<double> v;
                for (const auto& inc : incs) {
                    v.push_back((inc.z1 - inc.z0) / inc.dt);
                    total_dt += inc.dt;
                }
                double mv = 0.0;
                for (double x : v) mv += x;
                mv /= static_cast<double>(std::max<std::size_t>(v.size(), 1));
                for (std::size_t i = 0; i < v.size(); ++i) {
                    var += (v[i] - mv) * (v[i] - mv);
                    ++nv;
                    if (i > 0) {
                        lag += (v[i] - mv) * (v[i - 1] - mv);
                        ++nl;
                    }
                }
            }
            var /= static_cast<double>(std::max<std::size_t>(nv, 1));
            const double rho = std::clamp(nl > 0 && var > 0.0 ? lag / nl / var : 0.5, 0.05, 0.95);
            const double mean_dt = total_dt / static_cast<double>(std::max<std::size_t>(nv, 1));
            r = -std::log(rho) / mean_dt;
            s = std::sqrt(2.0 * r * std::max(var, 1e-12));
            break;
        }
    }

    std::vector<double> natural = {r, s};
    for (const auto& [name, value] : spec_.init) {
        auto it = std::find(info.params.begin(), info.params.end(), name);
        if (it == info.params.end()) throw NameError("starting value for unknown parameter '" + name + "'");
        natural[static_cast<std::size_t>(it - info.params.begin())] = value;
    }
    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(p_fe());
    for (const auto& term : design_.terms) {
        if (term.kind != TermKind::Intercept) continue;
        const double v = natural[static_cast<std::size_t>(term.param)];
        const Link link = info.links[static_cast<std::size_t>(term.param)];
        if (link == Link::Log && !(v > 0.0))
            throw DomainError("starting value for '" + info.params[static_cast<std::size_t>(term.param)] +
                              "' must be positive");
        alpha(term.begin) = link == Link::Log ? std::log(v) : v;
    }
    if (!alpha.allFinite()) throw NumericalError("starting values are not finite");
    return {alpha, aux};
}

int FitResult::num_aux_estimated() const {
    return objective && objective->spec().estimate_zeta ? 1 : 0;
}

FitResult fit(const ModelSpec& spec, const Dataset& data, const FitOptions& options) {
    auto objective = std::make_shared<const JointObjective>(spec, data);
    const int pf = objective->p_fe();
    const int J = objective->num_penalties();
    const int na = spec.estimate_zeta ? 1 : 0;
    auto [alpha0, aux0] = objective->start_values();

    Eigen::VectorXd x0(pf + J + na);
    Eigen::VectorXd lower = Eigen::VectorXd::Constant(x0.size(), -kInf);
    Eigen::VectorXd upper = Eigen::VectorXd::Constant(x0.size(), kInf);
    x0.head(pf) = alpha0;
    x0.segment(pf, J).setZero();
    lower.segment(pf, J).setConstant(options.log_lambda_min);
    upper.segment(pf, J).setConstant(options.log_lambda_max);
    if (na) x0(pf + J) = aux0.zeta;

    auto unpack_aux = [&](const Eigen::VectorXd& x) {
        FamilyAux aux = aux0;
        if (na) aux.zeta = x(pf + J);
        return aux;
    };

    Eigen::VectorXd warm = Eigen::VectorXd::Zero(objective->p_re());
    auto f = [&](const Eigen::VectorXd& x) {
        try {
            InnerResult inner;
            const double v = objective->laplace_marginal_nll(x.head(pf), x.segment(pf, J), unpack_aux(x), warm, &inner,
                                                             options.inner_max_iterations, options.inner_tol);
            if (!std::isfinite(v)) return kInf;
            warm = inner.beta;
            return v;
        } catch (const NumericalError&) {
            return kInf;
        }
    };

    const OptimizerResult opt = minimize_bfgs(f, x0, lower, upper, options.optimizer);

    FitResult res;
    res.objective = objective;
    res.alpha = opt.x.head(pf);
    res.log_lambda = opt.x.segment(pf, J);
    res.aux = unpack_aux(opt.x);
    InnerResult inner;
    res.marginal_nll = objective->laplace_marginal_nll(res.alpha, res.log_lambda, res.aux, warm, &inner,
                                                       options.inner_max_iterations, options.inner_tol);
    res.beta = inner.beta.size() == objective->p_re() ? inner.beta : Eigen::VectorXd::Zero(objective->p_re());
    res.joint_nll = objective->joint_nll(res.alpha, res.beta, res.log_lambda, res.aux);
    res.degenerate = inner.degenerate;
    res.precision = objective->joint_hessian(res.alpha, res.beta, res.log_lambda, res.aux);
    if (res.precision.size() > 0) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(res.precision, Eigen::EigenvaluesOnly);
        const double min_eig = eig.eigenvalues().minCoeff();
        if (min_eig < 1e-8) {
            res.precision += (1e-8 - min_eig) * Eigen::MatrixXd::Identity(res.precision.rows(), res.precision.cols());
            res.degenerate = true;
        }
    }
    res.converged = opt.converged;
    res.grad_norm = opt.grad_norm;
    res.iterations = opt.iterations;
    res.evaluations = opt.evaluations;
    res.message = opt.message;
    res.trace = opt.trace;
    return res;
}

Eigen::MatrixXd fitted_parameters(const FitResult& fit) {
    const auto& info = family_info(fit.objective->spec().family);
    Eigen::MatrixXd eta = fit.objective->eta(fit.alpha, fit.beta);
    for (Eigen::Index a = 0; a < eta.cols(); ++a) eta.col(a) = apply_link(eta.col(a), info.links[static_cast<std::size_t>(a)]);
    return eta;
}

Eigen::MatrixXd posterior_samples(const FitResult& fit, int n_samples, std::uint64_t seed) {
    if (n_samples < 0) throw DomainError("number of posterior samples must be non-negative");
    const Eigen::Index p = fit.precision.rows();
    Eigen::MatrixXd draws(n_samples, p);
    if (n_samples == 0) return draws;
    Eigen::LLT<Eigen::MatrixXd> llt(fit.precision);
    if (llt.info() != Eigen::Success)
        throw NumericalError("joint precision matrix is not positive definite; add a ridge to repair it");
    Eigen::VectorXd mean(p);
    mean << fit.alpha, fit.beta;
    Rng rng(seed);
    Eigen::MatrixXd Z(p, n_samples);
    for (int j = 0; j < n_samples; ++j)
        for (Eigen::Index i = 0; i < p; ++i) Z(i, j) = rng.normal();
    const Eigen::MatrixXd X = llt.matrixU().solve(Z);
    draws = X.transpose();
    draws.rowwise() += mean.transpose();
    return draws;
}

PredictionGrid covariate_grid(const FitResult& fit, const Dataset& data, const std::string& covariate, int grid_size,
                              const std::map<std::string, double>& fixed) {
    if (grid_size < 1) throw DomainError("grid size must be positive");
    const auto& ds = fit.objective->design();
    std::set<std::string> used;
    for (const auto& term : ds.terms)
        if (term.kind == TermKind::Linear || term.kind == TermKind::Smooth) used.insert(term.covariate);
    if (!data.has_column(covariate) || !data.is_numeric(covariate))
        throw NameError("unknown covariate '" + covariate + "'");
    PredictionGrid grid;
    grid.size = static_cast<std::size_t>(grid_size);
    used.insert(covariate);
    for (const auto& name : used) {
        const auto& col = data.numeric(name);
        double lo = kInf, hi = -kInf, sum = 0.0;
        std::size_t n = 0;
        for (double v : col) {
            if (!std::isfinite(v)) continue;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
            sum += v;
            ++n;
        }
        std::vector<double> values(grid.size);
        if (name == covariate) {
            for (int i = 0; i < grid_size; ++i)
                values[static_cast<std::size_t>(i)] =
                    grid_size == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / (grid_size - 1);
        } else {
            auto it = fixed.find(name);
            std::fill(values.begin(), values.end(), it != fixed.end() ? it->second : sum / static_cast<double>(n));
        }
        grid.covariates[name] = std::move(values);
    }
    for (const auto& [name, value] : fixed)
        if (!used.count(name)) throw NameError("fixed value for covariate '" + name + "' not used by the model");
    return grid;
}

double quantile(std::vector<double> values, double p) {
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * std::clamp(p, 0.0, 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] + (h - static_cast<double>(lo)) * (values[lo + 1] - values[lo]);
}

ParameterCurve predict_parameters(const FitResult& fit, const PredictionGrid& grid, const Eigen::MatrixXd& draws,
                                  double level) {
    const auto& ds = fit.objective->design();
    const auto& info = family_info(fit.objective->spec().family);
    ParameterCurve curve;
    curve.params = ds.params;
    curve.level = level;
    auto [Xfe, Xre] = ds.new_rows(grid.covariates, grid.factors, grid.size, &curve.extrapolated);
    const auto n = static_cast<Eigen::Index>(grid.size);
    const int P = ds.num_params();
    curve.mean.resize(n, P);
    curve.lower.resize(n, P);
    curve.upper.resize(n, P);
    const int pf = ds.p_fe();
    for (int a = 0; a < P; ++a) {
        const auto& fe = ds.fe_range[static_cast<std::size_t>(a)];
        const auto& re = ds.re_range[static_cast<std::size_t>(a)];
        const Link link = info.links[static_cast<std::size_t>(a)];
        Eigen::VectorXd eta = Xfe.middleCols(fe.begin, fe.size) * fit.alpha.segment(fe.begin, fe.size) +
                              Xre.middleCols(re.begin, re.size) * fit.beta.segment(re.begin, re.size);
        curve.mean.col(a) = apply_link(eta, link);

        Eigen::MatrixXd E = Xfe.middleCols(fe.begin, fe.size) * draws.middleCols(fe.begin, fe.size).transpose();
        if (re.size > 0) E += Xre.middleCols(re.begin, re.size) * draws.middleCols(pf + re.begin, re.size).transpose();
        for (Eigen::Index i = 0; i < n; ++i) {
            if (level >= 1.0) {
                curve.lower(i, a) = -kInf;
                curve.upper(i, a) = kInf;
                continue;
            }
            std::vector<double> v(static_cast<std::size_t>(E.cols()));
            for (Eigen::Index j = 0; j < E.cols(); ++j) v[static_cast<std::size_t>(j)] = apply_link(E(i, j), link);
            const double p = level <= 0.0 ? 0.5 : 0.5 * (1.0 - level);
            curve.lower(i, a) = quantile(v, p);
            curve.upper(i, a) = quantile(v, 1.0 - p);
        }
    }
    return curve;
}

ParameterCurve predict_parameters(const FitResult& fit, const PredictionGrid& grid, int n_post, double level,
                                  std::uint64_t seed) {
    return predict_parameters(fit, grid, posterior_samples(fit, n_post, seed), level);
}

double marginal_aic(const FitResult& fit) {
    const int k = fit.objective->p_fe() + fit.objective->num_penalties() + fit.num_aux_estimated();
    return 2.0 * fit.marginal_nll + 2.0 * k;
}

}  // namespace smoothsde
