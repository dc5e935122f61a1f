#include "smoothsde/diagnostics.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "smoothsde/errors.hpp"
#include "smoothsde/rng.hpp"

namespace smoothsde {

double euler_residual(double z0, double z1, double dt, double mu, double sigma) {
    if (!(dt > 0.0)) throw DomainError("time step must be positive");
    if (!(sigma > 0.0)) throw DomainError("diffusion must be positive");
    return (z1 - (z0 + mu * dt)) / (sigma * std::sqrt(dt));
}

ResidualSeries residuals(const ResponseData& data, const Eigen::MatrixXd& theta) {
    if (family_info(data.family).latent)
        throw UnsupportedError("residuals unsupported for latent-state families");
    if (theta.rows() != data.y.rows() || theta.cols() < 2) throw DimensionError("parameter path has the wrong shape");
    ResidualSeries out;
    if (data.family == Family::T_INCREMENT) {
        out.reference = Reference::StudentT;
        out.nu = data.aux.nu;
    }
    for (Eigen::Index k = 0; k < data.y.cols(); ++k) {
        for (const auto& range : data.series) {
            for (std::size_t i = range.begin; i + 1 < range.end; ++i) {
                const auto row = static_cast<Eigen::Index>(i);
                const double dt = data.time[i + 1] - data.time[i];
                double z0 = data.y(row, k), z1 = data.y(row + 1, k);
                const double r = theta(row, 0), s = theta(row, 1);
                double mu = r;
                switch (data.family) {
                    case Family::GBM:
                        z0 = std::log(z0);
                        z1 = std::log(z1);
                        mu = r - 0.5 * s * s;
                        break;
                    case Family::OU: mu = r * (data.aux.zeta - z0); break;
                    default: break;
                }
                out.values.push_back(euler_residual(z0, z1, dt, mu, s));
                out.series.push_back(range.id);
                out.index.push_back(i);
                out.dim.push_back(static_cast<int>(k));
            }
        }
    }
    return out;
}

ResidualSeries residuals(const FitResult& fit) {
    if (family_info(fit.objective->spec().family).latent)
        throw UnsupportedError("residuals unsupported for latent-state families");
    ResponseData data = fit.objective->responses();
    data.aux = fit.aux;
    return residuals(data, fitted_parameters(fit));
}

double reference_cdf(const ResidualSeries& res, double x) {
    if (res.reference == Reference::StudentT) return boost::math::cdf(boost::math::students_t(res.nu), x);
    return boost::math::cdf(boost::math::normal(), x);
}

double reference_quantile(const ResidualSeries& res, double p) {
    if (res.reference == Reference::StudentT) return boost::math::quantile(boost::math::students_t(res.nu), p);
    return boost::math::quantile(boost::math::normal(), p);
}

std::vector<QQPoint> qq_points(const ResidualSeries& res) {
    const std::size_t n = res.values.size();
    if (n < 10) throw DimensionError("QQ points need at least 10 residuals");
    std::vector<double> sorted = res.values;
    std::sort(sorted.begin(), sorted.end());
    std::vector<QQPoint> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double p = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
        out[i] = {reference_quantile(res, p), sorted[i]};
    }
    return out;
}

AcfResult acf(const std::vector<double>& x, int max_lag) {
    const std::size_t n = x.size();
    if (max_lag < 0 || static_cast<std::size_t>(max_lag) >= n)
        throw DimensionError("maximum lag must be smaller than the series length");
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(n);
    double c0 = 0.0;
    for (double v : x) c0 += (v - mean) * (v - mean);
    AcfResult out;
    out.bound = 1.96 / std::sqrt(static_cast<double>(n));
    for (int lag = 0; lag <= max_lag; ++lag) {
        double c = 0.0;
        for (std::size_t i = static_cast<std::size_t>(lag); i < n; ++i) c += (x[i] - mean) * (x[i - static_cast<std::size_t>(lag)] - mean);
        out.values.push_back(lag == 0 ? 1.0 : c / c0);
    }
    return out;
}

KsResult ks_test(std::vector<double> x, const std::function<double(double)>& cdf) {
    const std::size_t n = x.size();
    if (n == 0) throw DimensionError("KS test needs at least one value");
    std::sort(x.begin(), x.end());
    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double f = cdf(x[i]);
        d = std::max({d, static_cast<double>(i + 1) / static_cast<double>(n) - f, f - static_cast<double>(i) / static_cast<double>(n)});
    }
    const double sn = std::sqrt(static_cast<double>(n));
    const double lambda = (sn + 0.12 + 0.11 / sn) * d;
    double p = 0.0;
    if (lambda < 0.2) {
        p = 1.0;
    } else {
        double sign = 1.0;
        for (int j = 1; j <= 100; ++j) {
            const double term = sign * std::exp(-2.0 * j * j * lambda * lambda);
            p += term;
            if (std::abs(term) < 1e-12) break;
            sign = -sign;
        }
        p = std::clamp(2.0 * p, 0.0, 1.0);
    }
    return {d, p};
}

int worker_threads(int requested) {
    int n = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
    if (n < 1) n = 1;
    if (const char* env = std::getenv("SMOOTHSDE_THREADS")) {
        const int cap = std::atoi(env);
        if (cap >= 1) n = std::min(n, cap);
    }
    return n;
}

CoverageResult coverage_experiment(const ScenarioConfig& scenario, const CoverageConfig& cfg) {
    if (cfg.replicates < 0) throw DomainError("number of replicates must be non-negative");
    if (cfg.grid_size < 2) throw DomainError("coverage grid needs at least two points");
    CoverageResult out;
    out.params = family_info(scenario_model(scenario).family).params;
    const std::size_t P = out.params.size();
    for (int i = 0; i < cfg.grid_size; ++i) out.grid.push_back(static_cast<double>(i) / (cfg.grid_size - 1));
    std::vector<std::vector<double>> truth(P, std::vector<double>(out.grid.size()));
    for (std::size_t g = 0; g < out.grid.size(); ++g) {
        truth[0][g] = scenario.r(out.grid[g]);
        truth[1][g] = scenario.s(out.grid[g]);
    }
    out.hits.assign(P, std::vector<int>(out.grid.size(), 0));
    out.replicates.resize(static_cast<std::size_t>(cfg.replicates));
    std::vector<std::vector<std::vector<char>>> hit(static_cast<std::size_t>(cfg.replicates));

    auto run_one = [&](int rep) {
        const auto start = std::chrono::steady_clock::now();
        ReplicateOutcome& o = out.replicates[static_cast<std::size_t>(rep)];
        o.replicate = rep;
        try {
            ScenarioConfig sc = scenario;
            sc.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(rep));
            const ScenarioData sim = run_scenario(sc);
            const FitResult f = fit(scenario_model(sc), sim.data, cfg.fit);
            PredictionGrid grid;
            grid.size = out.grid.size();
            grid.covariates[sim.covariate] = out.grid;
            const ParameterCurve curve =
                predict_parameters(f, grid, cfg.n_post, cfg.level, derive_seed(sc.seed, 99));
            auto& h = hit[static_cast<std::size_t>(rep)];
            h.assign(P, std::vector<char>(out.grid.size(), 0));
            for (std::size_t a = 0; a < P; ++a) {
                int count = 0;
                std::vector<double> est(out.grid.size());
                for (std::size_t g = 0; g < out.grid.size(); ++g) {
                    const auto gi = static_cast<Eigen::Index>(g);
                    const auto ai = static_cast<Eigen::Index>(a);
                    const bool in = curve.lower(gi, ai) <= truth[a][g] && truth[a][g] <= curve.upper(gi, ai);
                    h[a][g] = in;
                    count += in;
                    est[g] = curve.mean(gi, ai);
                }
                o.coverage.push_back(static_cast<double>(count) / static_cast<double>(out.grid.size()));
                o.nrmse.push_back(normalized_rmse(est, truth[a]));
            }
            o.converged = f.converged;
            o.ok = true;
        } catch (const std::exception& e) {
            o.ok = false;
            o.error = e.what();
        }
        o.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    };

    const int threads = std::min(worker_threads(cfg.threads), std::max(cfg.replicates, 1));
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int rep = next++; rep < cfg.replicates; rep = next++) run_one(rep);
    };
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    int ok = 0;
    for (int rep = 0; rep < cfg.replicates; ++rep) {
        const auto& o = out.replicates[static_cast<std::size_t>(rep)];
        if (!o.ok) {
            ++out.failures;
            continue;
        }
        ++ok;
        for (std::size_t a = 0; a < P; ++a)
            for (std::size_t g = 0; g < out.grid.size(); ++g) out.hits[a][g] += hit[static_cast<std::size_t>(rep)][a][g];
    }
    out.average.assign(P, 0.0);
    for (std::size_t a = 0; a < P; ++a) {
        if (ok == 0) {
            out.average[a] = std::nan("");
            continue;
        }
        double sum = 0.0;
        for (int h : out.hits[a]) sum += h;
        out.average[a] = sum / (static_cast<double>(ok) * static_cast<double>(out.grid.size()));
    }
    return out;
}

}  // namespace smoothsde
