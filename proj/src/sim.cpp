#include "smoothsde/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "smoothsde/errors.hpp"
#include "smoothsde/rng.hpp"

namespace smoothsde {

ScenarioKind parse_scenario(const std::string& tag) {
    if (tag == "BM_COVARIATE" || tag == "1") return ScenarioKind::BM_COVARIATE;
    if (tag == "CTCRW_COVARIATE" || tag == "2") return ScenarioKind::CTCRW_COVARIATE;
    throw ConfigError("unknown scenario '" + tag + "' (expected BM_COVARIATE or CTCRW_COVARIATE)");
}

std::string scenario_name(ScenarioKind kind) {
    return kind == ScenarioKind::BM_COVARIATE ? "BM_COVARIATE" : "CTCRW_COVARIATE";
}

ScenarioConfig default_scenario(ScenarioKind kind) {
    ScenarioConfig cfg;
    cfg.kind = kind;
    if (kind == ScenarioKind::BM_COVARIATE) {
        cfg.r = Curve::expression("1.5*exp(-2*x)*cos(3*pi*x)");
        cfg.s = Curve::expression("0.5+exp(-(x-0.5)^2/0.08)");
    } else {
        cfg.r = Curve::expression("1+0.8*sin(2*pi*x)");
        cfg.s = Curve::expression("1+exp(-(x-0.6)^2/0.05)");
    }
    return cfg;
}

std::vector<double> simulate_covariate(std::size_t n, std::uint64_t seed, double dt) {
    if (n < 2) throw DimensionError("covariate path needs at least two points");
    Rng rng(seed);
    std::vector<double> x(n);
    const double sd = std::sqrt(dt);
    for (std::size_t i = 1; i < n; ++i) x[i] = x[i - 1] + sd * rng.normal();
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    const double a = *lo, b = *hi;
    for (double& v : x) v = (v - a) / (b - a);
    // Exact end points despite rounding in the division.
    x[static_cast<std::size_t>(lo - x.begin())] = 0.0;
    x[static_cast<std::size_t>(hi - x.begin())] = 1.0;
    return x;
}

std::vector<std::size_t> thin_irregular(std::size_t length, std::size_t n_keep, std::uint64_t seed) {
    if (n_keep < 2) throw DimensionError("at least two observations must be kept");
    if (n_keep > length) throw DimensionError("cannot keep more observations than the path has");
    // Partial Fisher-Yates over 1..length-1; index 0 is always kept.
    std::vector<std::size_t> pool(length - 1);
    std::iota(pool.begin(), pool.end(), std::size_t{1});
    Rng rng(seed);
    for (std::size_t i = 0; i + 1 < n_keep; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
        std::swap(pool[i], pool[j]);
    }
    std::vector<std::size_t> out(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_keep - 1));
    out.push_back(0);
    std::sort(out.begin(), out.end());
    return out;
}

ScenarioData run_scenario(const ScenarioConfig& cfg) {
    if (!(cfg.dt > 0.0)) throw DomainError("fine step must be positive");
    if (cfg.keep > cfg.fine_length) throw DimensionError("kept observations exceed the fine path length");
    const int dims = cfg.kind == ScenarioKind::BM_COVARIATE ? 1 : cfg.dims;
    if (dims != 1 && dims != 2) throw ConfigError("scenario dimension must be 1 or 2");

    const std::size_t n = cfg.fine_length;
    const auto x = simulate_covariate(n, derive_seed(cfg.seed, 1), cfg.dt);
    ThetaPath theta;
    theta.r.resize(n - 1);
    theta.s.resize(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        theta.r[i] = cfg.r(x[i]);
        theta.s[i] = cfg.s(x[i]);
    }

    std::vector<std::vector<double>> paths;
    if (cfg.kind == ScenarioKind::BM_COVARIATE) {
        paths.push_back(simulate_path(Family::BM_DRIFT, theta, cfg.dt, 0.0, derive_seed(cfg.seed, 2)).values);
    } else {
        Rng init(derive_seed(cfg.seed, 4));
        const double v_sd = theta.s[0] / std::sqrt(2.0 * theta.r[0]);
        for (int d = 0; d < dims; ++d) {
            const double v0 = v_sd * init.normal();
            paths.push_back(simulate_path(Family::CTCRW, theta, cfg.dt, 0.0,
                                          derive_seed(cfg.seed, 2 + 10 * static_cast<std::uint64_t>(d)), {}, v0)
                                .values);
        }
    }

    const auto keep = thin_irregular(n, cfg.keep, derive_seed(cfg.seed, 3));
    std::vector<double> times(keep.size()), x1(keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i) {
        times[i] = cfg.dt * static_cast<double>(keep[i]);
        x1[i] = x[keep[i]];
    }
    ScenarioData out;
    out.data = Dataset(std::vector<std::string>(keep.size(), "1"), times);
    const std::vector<std::string> names = dims == 1 ? std::vector<std::string>{"z"} : std::vector<std::string>{"x", "y"};
    for (std::size_t d = 0; d < paths.size(); ++d) {
        std::vector<double> obs(keep.size());
        for (std::size_t i = 0; i < keep.size(); ++i) obs[i] = paths[d][keep[i]];
        out.data.add_numeric(names[d], std::move(obs));
    }
    out.data.add_numeric("x1", std::move(x1));
    out.r = cfg.r;
    out.s = cfg.s;
    return out;
}

ModelSpec scenario_model(const ScenarioConfig& cfg) {
    ModelSpec spec;
    const bool bm = cfg.kind == ScenarioKind::BM_COVARIATE;
    spec.family = bm ? Family::BM_DRIFT : Family::CTCRW;
    spec.response = bm || cfg.dims == 1 ? std::vector<std::string>{"z"} : std::vector<std::string>{"x", "y"};
    for (const char* p : {"r", "s"}) {
        ParameterFormula f;
        f.param = p;
        FormulaTerm t;
        t.kind = TermKind::Smooth;
        t.covariate = "x1";
        t.num_basis = cfg.num_basis;
        f.terms.push_back(t);
        spec.formulas.push_back(f);
    }
    return spec;
}

double normalized_rmse(const std::vector<double>& estimate, const std::vector<double>& truth) {
    if (estimate.size() != truth.size() || truth.empty()) throw DimensionError("curve lengths differ");
    double sq = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) sq += (estimate[i] - truth[i]) * (estimate[i] - truth[i]);
    const auto [lo, hi] = std::minmax_element(truth.begin(), truth.end());
    const double range = *hi - *lo;
    const double rmse = std::sqrt(sq / static_cast<double>(truth.size()));
    return range > 0.0 ? rmse / range : rmse;
}

}  // namespace smoothsde
