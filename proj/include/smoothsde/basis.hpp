#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "smoothsde/dataset.hpp"

namespace smoothsde {

enum class TermKind { Intercept, Linear, Smooth, RandomIntercept };

struct FormulaTerm {
    TermKind kind = TermKind::Linear;
    /// Covariate name, or grouping-factor name for random intercepts.
    std::string covariate;
    int num_basis = 10;
    std::string basis = "cr";  // cubic regression spline (B-spline representation)
    bool shrinkage = true;
};

/// Additive formula for one SDE parameter: intercept + linear + smooths + random intercepts.
struct ParameterFormula {
    std::string param;
    std::vector<FormulaTerm> terms;
};

enum class Link { Identity, Log };

/// Inverse link applied to a linear predictor.
Eigen::VectorXd apply_link(const Eigen::VectorXd& eta, Link link);
double apply_link(double eta, Link link);
std::string link_name(Link link);

/// Clamped B-spline basis on [lower, upper], extended linearly outside.
/// Cubic unless fewer than four functions are requested.
class BSpline {
public:
    BSpline() = default;
    BSpline(std::vector<double> interior_knots, double lower, double upper, int degree = 3);

    /// Interior knots at quantiles of `values`; num_basis >= 3.
    static BSpline from_quantiles(const std::vector<double>& values, int num_basis);

    int size() const { return static_cast<int>(knots_.size()) - degree_ - 1; }
    int degree() const { return degree_; }
    double lower() const { return lower_; }
    double upper() const { return upper_; }
    const std::vector<double>& knots() const { return knots_; }

    /// Basis values (deriv = 0), first or second derivatives at x.
    Eigen::RowVectorXd evaluate(double x, int deriv = 0) const;

    /// Exact integrated squared second derivative, by Gauss-Legendre per knot span.
    Eigen::MatrixXd roughness_penalty() const;

private:
    Eigen::RowVectorXd evaluate_inside(double x, int deriv) const;

    std::vector<double> knots_;
    int degree_ = 3;
    double lower_ = 0.0;
    double upper_ = 1.0;
};

/// A centred spline smooth: f(x) = B(x) * constraint * beta.
struct SplineSmooth {
    BSpline spline;
    Eigen::MatrixXd constraint;  // m x (m - 1), orthonormal null space of the sum-to-zero constraint
    Eigen::MatrixXd penalty;     // (m - 1) x (m - 1), roughness (+ shrinkage)

    Eigen::MatrixXd design(const std::vector<double>& x) const;
};

struct SplineBlock {
    Eigen::MatrixXd basis;    // n x (m - 1), centred columns
    Eigen::MatrixXd penalty;  // (m - 1) x (m - 1)
    SplineSmooth smooth;
};

/// Design and penalty for one smooth of a covariate.
SplineBlock build_spline_block(const std::vector<double>& covariate, int num_basis, bool shrinkage);

/// Relative weight of the null-space shrinkage penalty.
inline constexpr double kShrinkageWeight = 0.1;

struct PenaltyBlock {
    Eigen::MatrixXd matrix;  // normalised to mean positive eigenvalue 1
    int param = 0;
    int begin = 0;           // first column in X_re
    int size = 0;
    int rank = 0;
    double log_pdet = 0.0;   // log pseudo-determinant of `matrix`
    double scale = 1.0;      // raw penalty = scale * matrix
    std::string label;
};

struct TermInfo {
    int param = 0;
    TermKind kind = TermKind::Linear;
    std::string label;
    std::string covariate;
    bool random = false;  // lives in X_re
    int begin = 0;        // first column in X_fe or X_re
    int width = 0;
    int penalty = -1;     // index into DesignSet::penalties
    std::optional<SplineSmooth> smooth;
    std::vector<std::string> levels;  // random intercept levels
};

struct ColumnRange {
    int begin = 0;
    int size = 0;
};

/// Design matrices and penalties for all SDE parameters.
struct DesignSet {
    std::vector<std::string> params;
    Eigen::MatrixXd X_fe;
    Eigen::MatrixXd X_re;
    std::vector<ColumnRange> fe_range;
    std::vector<ColumnRange> re_range;
    std::vector<PenaltyBlock> penalties;
    std::vector<TermInfo> terms;
    std::vector<std::string> fe_labels;
    std::vector<std::string> re_labels;

    int num_params() const { return static_cast<int>(params.size()); }
    int p_fe() const { return static_cast<int>(X_fe.cols()); }
    int p_re() const { return static_cast<int>(X_re.cols()); }
    int param_index(const std::string& name) const;

    /// Design rows for new covariate values, same column layout. Unknown
    /// random-intercept levels (or absent factor columns) get zero rows.
    /// Sets `extrapolated` when a smooth covariate leaves its training range.
    std::pair<Eigen::MatrixXd, Eigen::MatrixXd> new_rows(
        const std::map<std::string, std::vector<double>>& covariates,
        const std::map<std::string, std::vector<std::string>>& factors, std::size_t n,
        bool* extrapolated = nullptr) const;
};

DesignSet build_design_set(const std::vector<ParameterFormula>& spec, const Dataset& data);

/// X_fe * alpha + X_re * beta over the columns of one parameter.
Eigen::VectorXd linear_predictor(const DesignSet& ds, const Eigen::VectorXd& alpha,
                                 const Eigen::VectorXd& beta, int param);

}  // namespace smoothsde
