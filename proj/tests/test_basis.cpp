#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "smoothsde/basis.hpp"
#include "smoothsde/errors.hpp"
#include "smoothsde/rng.hpp"

using namespace smoothsde;

namespace {

std::vector<double> uniform_grid(int n, double lo = 0.0, double hi = 1.0) {
    std::vector<double> x(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) x[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
    return x;
}

// Composite Simpson rule of f''(x)^2 for f = B(x) C beta.
double integrated_curvature(const SplineSmooth& sm, const Eigen::VectorXd& beta, int panels = 20000) {
    const double a = sm.spline.lower(), b = sm.spline.upper();
    const double h = (b - a) / panels;
    const Eigen::VectorXd coef = sm.constraint * beta;
    double sum = 0.0;
    for (int i = 0; i <= panels; ++i) {
        const double x = std::min(a + i * h, b);
        const double f2 = sm.spline.evaluate(x, 2).dot(coef);
        const double w = (i == 0 || i == panels) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        sum += w * f2 * f2;
    }
    return sum * h / 3.0;
}

}  // namespace

TEST_SUITE("basis") {

TEST_CASE("apply_link") {
    CHECK(apply_link(0.0, Link::Log) == 1.0);
    CHECK(apply_link(0.0, Link::Identity) == 0.0);
    CHECK(apply_link(1.5, Link::Log) == doctest::Approx(std::exp(1.5)).epsilon(1e-12));
    Eigen::VectorXd eta(3);
    eta << -1.0, 0.0, 2.0;
    CHECK(apply_link(eta, Link::Identity) == eta);
    CHECK(apply_link(eta, Link::Log)(2) == doctest::Approx(std::exp(2.0)));
}

TEST_CASE("B-spline basis is a partition of unity with matching derivatives") {
    const BSpline sp = BSpline::from_quantiles(uniform_grid(50), 8);
    CHECK(sp.size() == 8);
    for (double x : {0.0, 0.13, 0.5, 0.77, 1.0}) {
        CHECK(sp.evaluate(x).sum() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(std::abs(sp.evaluate(x, 1).sum()) < 1e-10);
        // Central differences inside; the basis extends linearly at the ends.
        const double h = 1e-6;
        const Eigen::RowVectorXd fd = (sp.evaluate(x + h) - sp.evaluate(x - h)) / (2 * h);
        const bool end = x == 0.0 || x == 1.0;
        CHECK(testing::max_abs(fd - sp.evaluate(x, 1)) < (end ? 1e-3 : 1e-6));
    }
}

TEST_CASE("basis extends linearly beyond the construction range") {
    const BSpline sp = BSpline::from_quantiles(uniform_grid(40), 6);
    const Eigen::RowVectorXd d = sp.evaluate(1.0, 1);
    CHECK(testing::max_abs(sp.evaluate(1.5) - (sp.evaluate(1.0) + 0.5 * d)) < 1e-12);
    CHECK(testing::max_abs(sp.evaluate(1.5, 2)) == 0.0);
}

TEST_CASE("roughness penalty matches quadrature of the squared second derivative") {
    const SplineBlock blk = build_spline_block(uniform_grid(100), 5, false);
    smoothsde::Rng rng(3);
    for (int rep = 0; rep < 5; ++rep) {
        Eigen::VectorXd beta(blk.penalty.rows());
        for (Eigen::Index k = 0; k < beta.size(); ++k) beta(k) = rng.normal();
        const double quad = integrated_curvature(blk.smooth, beta);
        CHECK(beta.dot(blk.penalty * beta) == doctest::Approx(quad).epsilon(1e-4));
    }
    CHECK(Eigen::VectorXd::Zero(blk.penalty.rows()).dot(blk.penalty * Eigen::VectorXd::Zero(blk.penalty.rows())) == 0.0);
}

TEST_CASE("linear functions lie in the null space of the unshrunk penalty") {
    const auto x = uniform_grid(100);
    const SplineBlock blk = build_spline_block(x, 7, false);
    // Least-squares coefficients of the centred linear function.
    Eigen::VectorXd y(100);
    for (int i = 0; i < 100; ++i) y(i) = x[static_cast<std::size_t>(i)] - 0.5;
    const Eigen::VectorXd beta = blk.basis.colPivHouseholderQr().solve(y);
    CHECK((blk.basis * beta - y).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(std::abs(beta.dot(blk.penalty * beta)) < 1e-10);
}

TEST_CASE("penalty blocks are symmetric PSD, and PD with shrinkage") {
    smoothsde::Rng rng(11);
    for (int k : {3, 4, 5, 10, 15}) {
        std::vector<double> x(200);
        for (auto& v : x) v = rng.normal();
        for (bool shrink : {false, true}) {
            const SplineBlock blk = build_spline_block(x, k, shrink);
            CHECK(testing::max_abs(blk.penalty - blk.penalty.transpose()) < 1e-12);
            const double lo = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(blk.penalty).eigenvalues().minCoeff();
            CHECK(lo >= -1e-10);
            if (shrink) CHECK(lo > 0.0);
            CHECK(blk.basis.colwise().mean().cwiseAbs().maxCoeff() <= 1e-10);
        }
    }
}

TEST_CASE("more basis functions never approximate worse") {
    const auto x = uniform_grid(300);
    Eigen::VectorXd y(300);
    for (int i = 0; i < 300; ++i) y(i) = std::sin(6.0 * x[static_cast<std::size_t>(i)]);
    y.array() -= y.mean();
    double prev = INFINITY;
    for (int k : {4, 8, 16}) {
        const SplineBlock blk = build_spline_block(x, k, true);
        const Eigen::VectorXd beta = blk.basis.colPivHouseholderQr().solve(y);
        const double err = (blk.basis * beta - y).norm();
        CHECK(err <= prev + 1e-12);
        prev = err;
    }
}

TEST_CASE("spline block errors") {
    CHECK_THROWS_AS(build_spline_block(uniform_grid(4), 5, true), DimensionError);
    CHECK_THROWS_AS(build_spline_block(uniform_grid(10), 2, true), DimensionError);
    CHECK_THROWS_AS(build_spline_block(std::vector<double>(20, 1.0), 5, true), DegenerateError);
}

TEST_CASE("parametric formula gives intercept and linear columns only") {
    Dataset d = testing::single_series(10);
    std::vector<double> x1(10);
    for (int i = 0; i < 10; ++i) x1[static_cast<std::size_t>(i)] = i * i;
    d.add_numeric("x1", x1);
    FormulaTerm lin;
    lin.kind = TermKind::Linear;
    lin.covariate = "x1";
    const DesignSet ds = build_design_set({{"r", {lin}}}, d);
    CHECK(ds.p_fe() == 2);
    CHECK(ds.p_re() == 0);
    CHECK(ds.penalties.empty());
    CHECK(ds.X_fe.col(0).isOnes());
    CHECK(ds.X_fe(3, 1) == 9.0);
    CHECK(ds.fe_labels == std::vector<std::string>{"r.(Intercept)", "r.x1"});
}

TEST_CASE("smooth plus random intercept over four series") {
    std::vector<std::string> ids;
    std::vector<double> t, x2;
    smoothsde::Rng rng(5);
    for (const char* id : {"A", "B", "C", "D"})
        for (int i = 0; i < 25; ++i) {
            ids.push_back(id);
            t.push_back(i);
            x2.push_back(rng.uniform());
        }
    Dataset d(ids, t);
    d.add_numeric("x2", x2);
    FormulaTerm sm;
    sm.kind = TermKind::Smooth;
    sm.covariate = "x2";
    sm.num_basis = 5;
    FormulaTerm re;
    re.kind = TermKind::RandomIntercept;
    re.covariate = "ID";
    const DesignSet ds = build_design_set({{"s", {sm, re}}}, d);
    CHECK(ds.p_fe() == 1);
    CHECK(ds.p_re() == 8);
    REQUIRE(ds.penalties.size() == 2);
    CHECK(ds.penalties[1].size == 4);
    CHECK(ds.penalties[1].matrix == Eigen::MatrixXd::Identity(4, 4));
    const Eigen::MatrixXd ind = ds.X_re.middleCols(4, 4);
    CHECK(ind.rowwise().sum().isOnes());
    CHECK(ds.X_re.leftCols(4).colwise().mean().cwiseAbs().maxCoeff() <= 1e-10);
    // Normalised penalty has mean positive eigenvalue 1.
    const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(ds.penalties[0].matrix).eigenvalues();
    CHECK(ev.mean() == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("design set errors") {
    Dataset d = testing::single_series(10);
    d.add_numeric("x1", std::vector<double>(10, 0.5));
    FormulaTerm t;
    t.kind = TermKind::Linear;
    t.covariate = "nope";
    CHECK_THROWS_AS(build_design_set({{"r", {t}}}, d), NameError);
    t.kind = TermKind::RandomIntercept;
    t.covariate = "ID";
    CHECK_THROWS_AS(build_design_set({{"r", {t}}}, d), DegenerateError);
}

TEST_CASE("linear predictor matches a naive product") {
    std::vector<std::string> ids;
    std::vector<double> t, x1, x2;
    smoothsde::Rng rng(9);
    for (int i = 0; i < 5; ++i) {
        ids.push_back(i < 3 ? "a" : "b");
        t.push_back(i);
        x1.push_back(rng.normal());
        x2.push_back(rng.normal());
    }
    Dataset d(ids, t);
    d.add_numeric("x1", x1);
    d.add_numeric("x2", x2);
    FormulaTerm l1, l2, re;
    l1.covariate = "x1";
    l2.covariate = "x2";
    re.kind = TermKind::RandomIntercept;
    re.covariate = "ID";
    const DesignSet ds = build_design_set({{"r", {l1}}, {"s", {l2, re}}}, d);
    Eigen::VectorXd alpha(ds.p_fe()), beta(ds.p_re());
    for (Eigen::Index k = 0; k < alpha.size(); ++k) alpha(k) = rng.normal();
    for (Eigen::Index k = 0; k < beta.size(); ++k) beta(k) = rng.normal();
    for (int p = 0; p < 2; ++p) {
        const Eigen::VectorXd eta = linear_predictor(ds, alpha, beta, p);
        const auto fe = ds.fe_range[static_cast<std::size_t>(p)];
        const auto rr = ds.re_range[static_cast<std::size_t>(p)];
        for (int i = 0; i < 5; ++i) {
            double v = 0.0;
            for (int c = fe.begin; c < fe.begin + fe.size; ++c) v += ds.X_fe(i, c) * alpha(c);
            for (int c = rr.begin; c < rr.begin + rr.size; ++c) v += ds.X_re(i, c) * beta(c);
            CHECK(eta(i) == doctest::Approx(v).epsilon(1e-12));
        }
    }
    CHECK(linear_predictor(ds, Eigen::VectorXd::Zero(ds.p_fe()), Eigen::VectorXd::Zero(ds.p_re()), 1).isZero());
    CHECK_THROWS_AS(linear_predictor(ds, Eigen::VectorXd::Zero(1), beta, 0), DimensionError);
}

TEST_CASE("new rows reproduce the training design") {
    Dataset d = testing::single_series(60);
    smoothsde::Rng rng(2);
    std::vector<double> x(60);
    for (auto& v : x) v = rng.uniform();
    d.add_numeric("x1", x);
    const DesignSet ds = build_design_set({testing::smooth_of("r", "x1", 6)}, d);
    bool extrap = true;
    const auto [fe, re] = ds.new_rows({{"x1", x}}, {}, 60, &extrap);
    CHECK_FALSE(extrap);
    CHECK(testing::max_abs(fe - ds.X_fe) < 1e-12);
    CHECK(testing::max_abs(re - ds.X_re) < 1e-12);
    ds.new_rows({{"x1", {2.0}}}, {}, 1, &extrap);
    CHECK(extrap);
}

}  // TEST_SUITE
