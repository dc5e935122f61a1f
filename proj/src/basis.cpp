#include "smoothsde/basis.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "smoothsde/errors.hpp"

namespace smoothsde {

Eigen::VectorXd apply_link(const Eigen::VectorXd& eta, Link link) {
    if (link == Link::Identity) return eta;
    return eta.array().exp().matrix();
}

double apply_link(double eta, Link link) {
    return link == Link::Identity ? eta : std::exp(eta);
}

std::string link_name(Link link) {
    return link == Link::Identity ? "identity" : "log";
}

// ---------------------------------------------------------------------------
// B-spline basis

BSpline::BSpline(std::vector<double> interior_knots, double lower, double upper, int degree)
    : degree_(degree), lower_(lower), upper_(upper) {
    if (!(upper > lower)) throw DegenerateError("spline range is empty");
    if (degree < 1) throw DimensionError("spline degree must be at least 1");
    std::sort(interior_knots.begin(), interior_knots.end());
    knots_.assign(degree + 1, lower);
    for (double k : interior_knots) {
        if (!(k > lower && k < upper)) throw DimensionError("interior knot outside spline range");
        knots_.push_back(k);
    }
    knots_.insert(knots_.end(), degree + 1, upper);
}

BSpline BSpline::from_quantiles(const std::vector<double>& values, int num_basis) {
    if (num_basis < 3) throw DimensionError("a smooth needs at least 3 basis functions");
    std::vector<double> sorted(values);
    std::sort(sorted.begin(), sorted.end());
    const double lo = sorted.front();
    const double hi = sorted.back();
    if (!(hi > lo)) throw DegenerateError("covariate is constant; cannot build a smooth");

    const int degree = std::min(3, num_basis - 1);
    const int n_interior = num_basis - degree - 1;
    std::vector<double> interior;
    for (int j = 1; j <= n_interior; ++j) {
        const double pos = static_cast<double>(j) / (n_interior + 1) * (sorted.size() - 1);
        const auto below = static_cast<std::size_t>(std::floor(pos));
        const std::size_t above = std::min(below + 1, sorted.size() - 1);
        interior.push_back(sorted[below] + (pos - below) * (sorted[above] - sorted[below]));
    }
    // Heavy ties can collapse quantiles onto each other or onto the bounds.
    bool distinct = true;
    double prev = lo;
    for (double k : interior) {
        if (!(k > prev + 1e-9 * (hi - lo))) distinct = false;
        prev = k;
    }
    if (!interior.empty() && !(interior.back() < hi - 1e-9 * (hi - lo))) distinct = false;
    if (!distinct) {
        for (int j = 1; j <= n_interior; ++j)
            interior[j - 1] = lo + (hi - lo) * j / (n_interior + 1);
    }
    return BSpline(std::move(interior), lo, hi, degree);
}

Eigen::RowVectorXd BSpline::evaluate_inside(double x, int deriv) const {
    const int m = size();
    const int p = degree_;
    // Knot span s with knots[s] <= x < knots[s+1]; the right end belongs to the last span.
    int s = m - 1;
    if (x < upper_) {
        s = static_cast<int>(std::upper_bound(knots_.begin(), knots_.end(), x) - knots_.begin()) - 1;
        s = std::clamp(s, p, m - 1);
    }

    // Derivatives of the p + 1 non-zero basis functions (Piegl & Tiller, A2.3).
    const int nd = std::min(deriv, p);
    std::vector<std::vector<double>> ndu(p + 1, std::vector<double>(p + 1, 0.0));
    std::vector<double> left(p + 1), right(p + 1);
    ndu[0][0] = 1.0;
    for (int j = 1; j <= p; ++j) {
        left[j] = x - knots_[s + 1 - j];
        right[j] = knots_[s + j] - x;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            ndu[j][r] = right[r + 1] + left[j - r];
            const double temp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu[j][j] = saved;
    }
    std::vector<std::vector<double>> ders(nd + 1, std::vector<double>(p + 1, 0.0));
    for (int j = 0; j <= p; ++j) ders[0][j] = ndu[j][p];
    std::vector<std::vector<double>> a(2, std::vector<double>(p + 1, 0.0));
    for (int r = 0; r <= p; ++r) {
        int s1 = 0, s2 = 1;
        a[0][0] = 1.0;
        for (int k = 1; k <= nd; ++k) {
            double d = 0.0;
            const int rk = r - k;
            const int pk = p - k;
            if (r >= k) {
                a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
                d = a[s2][0] * ndu[rk][pk];
            }
            const int j1 = rk >= -1 ? 1 : -rk;
            const int j2 = (r - 1 <= pk) ? k - 1 : p - r;
            for (int j = j1; j <= j2; ++j) {
                a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
                d += a[s2][j] * ndu[rk + j][pk];
            }
            if (r <= pk) {
                a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                d += a[s2][k] * ndu[r][pk];
            }
            ders[k][r] = d;
            std::swap(s1, s2);
        }
    }
    double factor = p;
    for (int k = 1; k <= nd; ++k) {
        for (int j = 0; j <= p; ++j) ders[k][j] *= factor;
        factor *= (p - k);
    }

    Eigen::RowVectorXd out = Eigen::RowVectorXd::Zero(m);
    if (deriv > p) return out;
    for (int j = 0; j <= p; ++j) out(s - p + j) = ders[deriv][j];
    return out;
}

Eigen::RowVectorXd BSpline::evaluate(double x, int deriv) const {
    if (x >= lower_ && x <= upper_) return evaluate_inside(x, deriv);
    const double edge = x < lower_ ? lower_ : upper_;
    switch (deriv) {
        case 0:
            return evaluate_inside(edge, 0) + (x - edge) * evaluate_inside(edge, 1);
        case 1:
            return evaluate_inside(edge, 1);
        default:
            return Eigen::RowVectorXd::Zero(size());
    }
}

Eigen::MatrixXd BSpline::roughness_penalty() const {
    const int m = size();
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(m, m);
    // Second derivatives are piecewise polynomials of degree <= 1; three points are exact.
    const double nodes[3] = {-std::sqrt(0.6), 0.0, std::sqrt(0.6)};
    const double weights[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
    for (std::size_t s = 0; s + 1 < knots_.size(); ++s) {
        const double a = knots_[s];
        const double b = knots_[s + 1];
        if (!(b > a)) continue;
        const double half = 0.5 * (b - a);
        const double mid = 0.5 * (a + b);
        for (int q = 0; q < 3; ++q) {
            const Eigen::RowVectorXd d2 = evaluate_inside(mid + half * nodes[q], 2);
            S.noalias() += (weights[q] * half) * d2.transpose() * d2;
        }
    }
    return 0.5 * (S + S.transpose());
}

// ---------------------------------------------------------------------------
// Smooth blocks

Eigen::MatrixXd SplineSmooth::design(const std::vector<double>& x) const {
    Eigen::MatrixXd B(static_cast<Eigen::Index>(x.size()), spline.size());
    for (std::size_t i = 0; i < x.size(); ++i) B.row(static_cast<Eigen::Index>(i)) = spline.evaluate(x[i]);
    return B * constraint;
}

SplineBlock build_spline_block(const std::vector<double>& covariate, int num_basis, bool shrinkage) {
    if (num_basis < 3) throw DimensionError("a smooth needs at least 3 basis functions");
    if (static_cast<int>(covariate.size()) < num_basis)
        throw DimensionError("smooth with " + std::to_string(num_basis) + " basis functions needs at least " +
                             std::to_string(num_basis) + " observations, got " +
                             std::to_string(covariate.size()));
    for (double v : covariate)
        if (!std::isfinite(v)) throw DataError("smooth covariate contains non-finite values");

    SplineSmooth smooth;
    smooth.spline = BSpline::from_quantiles(covariate, num_basis);
    const int m = smooth.spline.size();

    Eigen::MatrixXd B(static_cast<Eigen::Index>(covariate.size()), m);
    for (std::size_t i = 0; i < covariate.size(); ++i)
        B.row(static_cast<Eigen::Index>(i)) = smooth.spline.evaluate(covariate[i]);

    // Absorb the sum-to-zero constraint 1'B beta = 0 through the orthogonal
    // complement of its normal vector.
    const Eigen::VectorXd c = B.colwise().sum().transpose();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(c);
    const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(m, m);
    smooth.constraint = Q.rightCols(m - 1);

    Eigen::MatrixXd S = smooth.constraint.transpose() * smooth.spline.roughness_penalty() * smooth.constraint;
    S = 0.5 * (S + S.transpose());
    if (shrinkage) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S);
        const double tol = 1e-9 * eig.eigenvalues().cwiseAbs().maxCoeff();
        const double eps = kShrinkageWeight * S.diagonal().mean();
        for (int k = 0; k < eig.eigenvalues().size(); ++k) {
            if (eig.eigenvalues()(k) <= tol) {
                const Eigen::VectorXd u = eig.eigenvectors().col(k);
                S += eps * u * u.transpose();
            }
        }
    }
    smooth.penalty = S;

    SplineBlock block;
    block.basis = B * smooth.constraint;
    // Remove rounding residue so column means vanish to machine precision.
    block.basis.rowwise() -= block.basis.colwise().mean();
    block.penalty = S;
    block.smooth = std::move(smooth);
    return block;
}

// ---------------------------------------------------------------------------
// Design set

namespace {

void finalize_penalty(PenaltyBlock& block) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(block.matrix);
    const Eigen::VectorXd ev = eig.eigenvalues();
    const double tol = 1e-9 * std::max(1.0, ev.cwiseAbs().maxCoeff());
    double sum = 0.0;
    int rank = 0;
    for (int k = 0; k < ev.size(); ++k)
        if (ev(k) > tol) {
            sum += ev(k);
            ++rank;
        }
    if (rank == 0) throw DegenerateError("penalty block '" + block.label + "' is zero");
    block.scale = sum / rank;
    block.matrix /= block.scale;
    block.rank = rank;
    block.log_pdet = 0.0;
    for (int k = 0; k < ev.size(); ++k)
        if (ev(k) > tol) block.log_pdet += std::log(ev(k) / block.scale);
}

}  // namespace

int DesignSet::param_index(const std::string& name) const {
    for (std::size_t a = 0; a < params.size(); ++a)
        if (params[a] == name) return static_cast<int>(a);
    throw NameError("unknown SDE parameter '" + name + "'");
}

DesignSet build_design_set(const std::vector<ParameterFormula>& spec, const Dataset& data) {
    const auto n = static_cast<Eigen::Index>(data.size());
    DesignSet ds;
    std::vector<Eigen::MatrixXd> fe_blocks, re_blocks;
    int fe_col = 0, re_col = 0;

    for (std::size_t a = 0; a < spec.size(); ++a) {
        const auto& formula = spec[a];
        const int param = static_cast<int>(a);
        ds.params.push_back(formula.param);

        // Intercept first, then linear terms, then penalised terms.
        std::vector<const FormulaTerm*> linear, penalised;
        for (const auto& term : formula.terms) {
            if (term.kind == TermKind::Intercept) continue;
            if (!data.has_column(term.covariate))
                throw NameError("parameter '" + formula.param + "': unknown covariate '" + term.covariate + "'");
            if (term.kind == TermKind::Linear) linear.push_back(&term);
            else penalised.push_back(&term);
        }

        const int fe_begin = fe_col;
        {
            TermInfo info;
            info.param = param;
            info.kind = TermKind::Intercept;
            info.label = formula.param + ".(Intercept)";
            info.begin = fe_col;
            info.width = 1;
            ds.terms.push_back(info);
            ds.fe_labels.push_back(info.label);
            fe_blocks.push_back(Eigen::MatrixXd::Ones(n, 1));
            ++fe_col;
        }
        for (const auto* term : linear) {
            const auto& x = data.numeric(term->covariate);
            TermInfo info;
            info.param = param;
            info.kind = TermKind::Linear;
            info.covariate = term->covariate;
            info.label = formula.param + "." + term->covariate;
            info.begin = fe_col;
            info.width = 1;
            ds.terms.push_back(info);
            ds.fe_labels.push_back(info.label);
            fe_blocks.push_back(Eigen::Map<const Eigen::VectorXd>(x.data(), n));
            ++fe_col;
        }
        ds.fe_range.push_back({fe_begin, fe_col - fe_begin});

        const int re_begin = re_col;
        for (const auto* term : penalised) {
            TermInfo info;
            info.param = param;
            info.kind = term->kind;
            info.covariate = term->covariate;
            info.random = true;
            info.begin = re_col;
            PenaltyBlock pen;
            pen.param = param;
            pen.begin = re_col;

            if (term->kind == TermKind::Smooth) {
                auto block = build_spline_block(data.numeric(term->covariate), term->num_basis, term->shrinkage);
                info.label = formula.param + ".s(" + term->covariate + ")";
                info.width = static_cast<int>(block.basis.cols());
                info.smooth = block.smooth;
                pen.matrix = block.penalty;
                re_blocks.push_back(std::move(block.basis));
                for (int k = 1; k <= info.width; ++k) ds.re_labels.push_back(info.label + "." + std::to_string(k));
            } else {
                const auto values = data.factor(term->covariate);
                std::vector<std::string> levels;
                std::set<std::string> seen;
                for (const auto& v : values)
                    if (seen.insert(v).second) levels.push_back(v);
                if (levels.size() < 2)
                    throw DegenerateError("random intercept factor '" + term->covariate + "' has a single level");
                info.label = formula.param + ".re(" + term->covariate + ")";
                info.width = static_cast<int>(levels.size());
                Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(n, info.width);
                for (Eigen::Index i = 0; i < n; ++i) {
                    const auto it = std::find(levels.begin(), levels.end(), values[static_cast<std::size_t>(i)]);
                    Z(i, it - levels.begin()) = 1.0;
                }
                for (const auto& lev : levels) ds.re_labels.push_back(info.label + "." + lev);
                info.levels = std::move(levels);
                pen.matrix = Eigen::MatrixXd::Identity(info.width, info.width);
                re_blocks.push_back(std::move(Z));
            }
            pen.size = info.width;
            pen.label = info.label;
            finalize_penalty(pen);
            info.penalty = static_cast<int>(ds.penalties.size());
            ds.penalties.push_back(std::move(pen));
            ds.terms.push_back(std::move(info));
            re_col += ds.terms.back().width;
        }
        ds.re_range.push_back({re_begin, re_col - re_begin});
    }

    ds.X_fe = Eigen::MatrixXd::Zero(n, fe_col);
    int c = 0;
    for (auto& b : fe_blocks) {
        ds.X_fe.middleCols(c, b.cols()) = b;
        c += static_cast<int>(b.cols());
    }
    ds.X_re = Eigen::MatrixXd::Zero(n, re_col);
    c = 0;
    for (auto& b : re_blocks) {
        ds.X_re.middleCols(c, b.cols()) = b;
        c += static_cast<int>(b.cols());
    }
    return ds;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> DesignSet::new_rows(
    const std::map<std::string, std::vector<double>>& covariates,
    const std::map<std::string, std::vector<std::string>>& factors, std::size_t n, bool* extrapolated) const {
    const auto rows = static_cast<Eigen::Index>(n);
    Eigen::MatrixXd fe = Eigen::MatrixXd::Zero(rows, p_fe());
    Eigen::MatrixXd re = Eigen::MatrixXd::Zero(rows, p_re());
    if (extrapolated) *extrapolated = false;

    auto numeric = [&](const std::string& name) -> const std::vector<double>& {
        const auto it = covariates.find(name);
        if (it == covariates.end()) throw NameError("prediction grid lacks covariate '" + name + "'");
        if (it->second.size() != n) throw DimensionError("covariate '" + name + "' has wrong length");
        return it->second;
    };

    for (const auto& term : terms) {
        switch (term.kind) {
            case TermKind::Intercept:
                fe.col(term.begin).setOnes();
                break;
            case TermKind::Linear: {
                const auto& x = numeric(term.covariate);
                for (Eigen::Index i = 0; i < rows; ++i) fe(i, term.begin) = x[static_cast<std::size_t>(i)];
                break;
            }
            case TermKind::Smooth: {
                const auto& x = numeric(term.covariate);
                if (extrapolated) {
                    for (double v : x)
                        if (v < term.smooth->spline.lower() || v > term.smooth->spline.upper()) *extrapolated = true;
                }
                re.middleCols(term.begin, term.width) = term.smooth->design(x);
                break;
            }
            case TermKind::RandomIntercept: {
                const auto it = factors.find(term.covariate);
                if (it == factors.end()) break;  // population level
                for (Eigen::Index i = 0; i < rows; ++i) {
                    const auto lev = std::find(term.levels.begin(), term.levels.end(),
                                               it->second.at(static_cast<std::size_t>(i)));
                    if (lev != term.levels.end()) re(i, term.begin + (lev - term.levels.begin())) = 1.0;
                }
                break;
            }
        }
    }
    return {fe, re};
}

Eigen::VectorXd linear_predictor(const DesignSet& ds, const Eigen::VectorXd& alpha, const Eigen::VectorXd& beta,
                                 int param) {
    if (param < 0 || param >= ds.num_params()) throw DimensionError("parameter index out of range");
    if (alpha.size() != ds.p_fe() || beta.size() != ds.p_re())
        throw DimensionError("coefficient vectors do not match the design (expected " + std::to_string(ds.p_fe()) +
                             " fixed and " + std::to_string(ds.p_re()) + " random coefficients)");
    const auto fe = ds.fe_range[static_cast<std::size_t>(param)];
    const auto re = ds.re_range[static_cast<std::size_t>(param)];
    Eigen::VectorXd eta = ds.X_fe.middleCols(fe.begin, fe.size) * alpha.segment(fe.begin, fe.size);
    if (re.size > 0) eta += ds.X_re.middleCols(re.begin, re.size) * beta.segment(re.begin, re.size);
    return eta;
}

}  // namespace smoothsde
