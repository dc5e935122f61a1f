#include "cli.hpp"

#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "smoothsde/config.hpp"
#include "smoothsde/dataset.hpp"
#include "smoothsde/diagnostics.hpp"
#include "smoothsde/errors.hpp"
#include "smoothsde/inference.hpp"
#include "smoothsde/rng.hpp"
#include "smoothsde/sim.hpp"

namespace smoothsde::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Context {
    std::string command;
    RunConfig cfg;
    fs::path out;
    std::vector<std::string> outputs;

    void write(const std::string& name, const std::string& content) {
        write_file_atomic((out / name).string(), content);
        outputs.push_back(name);
    }

    void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }
};

std::string hex64(std::uint64_t v) {
    std::ostringstream ss;
    ss << std::hex;
    ss.width(16);
    ss.fill('0');
    ss << v;
    return ss.str();
}

json number(double x) {
    if (std::isfinite(x)) return x;
    return nullptr;
}

json vector_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number(v(i)));
    return a;
}

void write_manifest(Context& ctx) {
    json m;
    m["command"] = ctx.command;
    m["seed"] = ctx.cfg.seed;
    m["config_hash"] = "fnv1a64:" + hex64(fnv1a(ctx.cfg.text));
    m["version"] = kVersion;
    m["outputs"] = ctx.outputs;
    write_file_atomic((ctx.out / "manifest.json").string(), m.dump(2) + "\n");
}

const ModelSpec& require_model(const RunConfig& cfg) {
    if (!cfg.model) throw ConfigError("config has no \"model\" section");
    return *cfg.model;
}

Dataset require_data(const RunConfig& cfg) {
    if (cfg.data_path.empty()) throw ConfigError("config has no \"data\" path");
    return ingest_csv(cfg.data_path);
}

json fit_json(const FitResult& f) {
    const auto& obj = *f.objective;
    const auto& ds = obj.design();
    const auto& info = family_info(obj.spec().family);
    json j;
    j["family"] = info.tag;
    j["response"] = obj.spec().response;
    json params = json::array();
    for (std::size_t a = 0; a < info.params.size(); ++a)
        params.push_back({{"name", info.params[a]}, {"link", link_name(info.links[a])}});
    j["parameters"] = params;

    Eigen::VectorXd se = Eigen::VectorXd::Constant(f.precision.rows(), std::nan(""));
    if (f.precision.size() > 0) {
        Eigen::LLT<Eigen::MatrixXd> llt(f.precision);
        if (llt.info() == Eigen::Success)
            se = llt.solve(Eigen::MatrixXd::Identity(f.precision.rows(), f.precision.cols())).diagonal().cwiseSqrt();
    }
    json fixed = json::array();
    for (int i = 0; i < obj.p_fe(); ++i)
        fixed.push_back({{"label", ds.fe_labels[static_cast<std::size_t>(i)]}, {"estimate", number(f.alpha(i))},
                         {"se", number(se(i))}});
    j["fixed_effects"] = fixed;
    json random = json::array();
    for (int i = 0; i < obj.p_re(); ++i)
        random.push_back({{"label", ds.re_labels[static_cast<std::size_t>(i)]}, {"estimate", number(f.beta(i))}});
    j["random_effects"] = random;
    json smooth = json::array();
    for (std::size_t k = 0; k < ds.penalties.size(); ++k)
        smooth.push_back({{"term", ds.penalties[k].label},
                          {"log_lambda", number(f.log_lambda(static_cast<Eigen::Index>(k)))}});
    j["smoothing_parameters"] = smooth;
    j["aux"] = {{"zeta", number(f.aux.zeta)}, {"zeta_estimated", obj.spec().estimate_zeta}, {"nu", number(f.aux.nu)}};
    j["marginal_nll"] = number(f.marginal_nll);
    j["joint_nll"] = number(f.joint_nll);
    j["marginal_aic"] = number(marginal_aic(f));
    j["converged"] = f.converged;
    j["degenerate"] = f.degenerate;
    j["gradient_norm"] = number(f.grad_norm);
    j["iterations"] = f.iterations;
    j["evaluations"] = f.evaluations;
    j["message"] = f.message;
    j["n"] = obj.responses().time.size();
    return j;
}

json trace_json(const FitResult& f) {
    json t = json::array();
    for (const auto& e : f.trace)
        t.push_back({{"iteration", e.iteration}, {"value", number(e.value)}, {"gradient_norm", number(e.grad_norm)},
                     {"step", number(e.step)}});
    return t;
}

std::string default_covariate(const FitResult& f) {
    for (const auto& term : f.objective->design().terms)
        if (term.kind == TermKind::Smooth || term.kind == TermKind::Linear) return term.covariate;
    return "";
}

std::string curves_csv(const FitResult& f, const Dataset& data, const PredictConfig& pc, std::uint64_t seed) {
    std::string cov = pc.covariate.empty() ? default_covariate(f) : pc.covariate;
    PredictionGrid grid;
    std::vector<double> xs;
    if (cov.empty()) {
        // Intercept-only model: a single row.
        grid.size = 1;
        xs.push_back(std::nan(""));
        cov = "covariate";
    } else {
        grid = covariate_grid(f, data, cov, pc.grid_size, pc.fixed);
        xs = grid.covariates.at(cov);
    }
    const ParameterCurve curve = predict_parameters(f, grid, pc.n_post, pc.level, derive_seed(seed, 7));
    std::string out = cov + ",param,estimate,lower,upper\n";
    for (std::size_t a = 0; a < curve.params.size(); ++a)
        for (std::size_t i = 0; i < grid.size; ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            const auto ai = static_cast<Eigen::Index>(a);
            out += format_double(xs[i]) + "," + curve.params[a] + "," + format_double(curve.mean(ii, ai)) + "," +
                   format_double(curve.lower(ii, ai)) + "," + format_double(curve.upper(ii, ai)) + "\n";
        }
    return out;
}

// Fits and reports; a non-converged fit still writes its outputs but fails.
int finish_fit(Context& ctx, const FitResult& f) {
    if (!f.converged) {
        json d = {{"error", "outer optimizer did not converge"}, {"message", f.message},
                  {"gradient_norm", number(f.grad_norm)}, {"trace", trace_json(f)}};
        ctx.write_json("diagnostics.json", d);
        write_manifest(ctx);
        std::cerr << "smoothsde: fit did not converge (" << f.message << ", gradient norm " << f.grad_norm << ")\n";
        return 1;
    }
    write_manifest(ctx);
    return 0;
}

int cmd_fit(Context& ctx) {
    const auto& spec = require_model(ctx.cfg);
    const Dataset data = require_data(ctx.cfg);
    const FitResult f = fit(spec, data, ctx.cfg.fit);
    ctx.write_json("fit.json", fit_json(f));
    ctx.write("curves.csv", curves_csv(f, data, ctx.cfg.predict, ctx.cfg.seed));
    return finish_fit(ctx, f);
}

int cmd_predict(Context& ctx) {
    const auto& spec = require_model(ctx.cfg);
    const Dataset data = require_data(ctx.cfg);
    const FitResult f = fit(spec, data, ctx.cfg.fit);
    ctx.write("curves.csv", curves_csv(f, data, ctx.cfg.predict, ctx.cfg.seed));
    return finish_fit(ctx, f);
}

int cmd_simulate(Context& ctx) {
    if (!ctx.cfg.scenario) throw ConfigError("config has no \"scenario\" section");
    const ScenarioData sim = run_scenario(*ctx.cfg.scenario);
    write_csv(sim.data, (ctx.out / "data.csv").string());
    ctx.outputs.push_back("data.csv");
    std::string truth = "x,r,s\n";
    const int g = std::max(ctx.cfg.predict.grid_size, 2);
    for (int i = 0; i < g; ++i) {
        const double x = static_cast<double>(i) / (g - 1);
        truth += format_double(x) + "," + format_double(sim.r(x)) + "," + format_double(sim.s(x)) + "\n";
    }
    ctx.write("truth.csv", truth);
    write_manifest(ctx);
    return 0;
}

int cmd_residuals(Context& ctx) {
    const auto& spec = require_model(ctx.cfg);
    if (family_info(spec.family).latent) throw UnsupportedError("residuals unsupported for latent-state families");
    const Dataset data = require_data(ctx.cfg);
    const FitResult f = fit(spec, data, ctx.cfg.fit);
    const ResidualSeries res = residuals(f);

    std::string rows = "ID,time,response,residual\n";
    for (std::size_t i = 0; i < res.values.size(); ++i)
        rows += res.series[i] + "," + format_double(data.times()[res.index[i]]) + "," +
                spec.response[static_cast<std::size_t>(res.dim[i])] + "," + format_double(res.values[i]) + "\n";
    ctx.write("residuals.csv", rows);

    std::string qq = "theoretical,empirical\n";
    for (const auto& p : qq_points(res)) qq += format_double(p.theoretical) + "," + format_double(p.empirical) + "\n";
    ctx.write("qq.csv", qq);

    const int max_lag = std::min<int>(ctx.cfg.residuals.max_lag, static_cast<int>(res.values.size()) - 1);
    const AcfResult a = acf(res.values, max_lag);
    std::string acf_csv = "lag,acf,lower_bound,upper_bound\n";
    for (std::size_t k = 0; k < a.values.size(); ++k)
        acf_csv += std::to_string(k) + "," + format_double(a.values[k]) + "," + format_double(-a.bound) + "," +
                   format_double(a.bound) + "\n";
    ctx.write("acf.csv", acf_csv);

    const KsResult ks = ks_test(res.values, [&](double x) { return reference_cdf(res, x); });
    json s = {{"reference", res.reference == Reference::StudentT ? "student_t" : "standard_normal"},
              {"nu", res.reference == Reference::StudentT ? json(res.nu) : json(nullptr)},
              {"n", res.values.size()},
              {"ks_statistic", number(ks.statistic)},
              {"ks_p_value", number(ks.p_value)},
              {"fit_converged", f.converged}};
    ctx.write_json("residual_summary.json", s);
    return finish_fit(ctx, f);
}

int cmd_coverage(Context& ctx) {
    if (!ctx.cfg.scenario) throw ConfigError("config has no \"scenario\" section");
    const CoverageResult res = coverage_experiment(*ctx.cfg.scenario, ctx.cfg.coverage);
    const int ok = ctx.cfg.coverage.replicates - res.failures;
    std::string table = "param,x,hits,replicates,coverage\n";
    for (std::size_t a = 0; a < res.params.size(); ++a)
        for (std::size_t g = 0; g < res.grid.size(); ++g)
            table += res.params[a] + "," + format_double(res.grid[g]) + "," + std::to_string(res.hits[a][g]) + "," +
                     std::to_string(ok) + "," +
                     format_double(ok > 0 ? static_cast<double>(res.hits[a][g]) / ok : std::nan("")) + "\n";
    ctx.write("coverage.csv", table);

    std::string reps = "replicate,ok,converged";
    for (const auto& p : res.params) reps += ",coverage_" + p;
    for (const auto& p : res.params) reps += ",nrmse_" + p;
    reps += ",error\n";
    for (const auto& o : res.replicates) {
        reps += std::to_string(o.replicate) + "," + (o.ok ? "1" : "0") + "," + (o.converged ? "1" : "0");
        for (std::size_t a = 0; a < res.params.size(); ++a)
            reps += "," + (o.ok ? format_double(o.coverage[a]) : std::string("NA"));
        for (std::size_t a = 0; a < res.params.size(); ++a)
            reps += "," + (o.ok ? format_double(o.nrmse[a]) : std::string("NA"));
        std::string err = o.error;
        for (char& c : err)
            if (c == ',' || c == '\n') c = ';';
        reps += "," + err + "\n";
    }
    ctx.write("replicates.csv", reps);

    json summary;
    summary["scenario"] = scenario_name(ctx.cfg.scenario->kind);
    summary["level"] = ctx.cfg.coverage.level;
    summary["replicates"] = ctx.cfg.coverage.replicates;
    summary["failures"] = res.failures;
    json avg;
    for (std::size_t a = 0; a < res.params.size(); ++a) avg[res.params[a]] = number(res.average[a]);
    summary["average_coverage"] = avg;
    ctx.write_json("coverage_summary.json", summary);
    write_manifest(ctx);
    return 0;
}

}  // namespace

int run(int argc, char** argv) {
    CLI::App app{"Varying-coefficient SDE fitting"};
    app.require_subcommand(1);
    std::string config_path, out_dir = ".";
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::vector<CLI::App*> subs;
    for (const char* name : {"fit", "simulate", "residuals", "predict", "coverage"}) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "JSON run configuration")->required();
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--seed", seed, "override the configured seed")->each([&](const std::string&) {
            seed_given = true;
        });
        subs.push_back(sub);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    Context ctx;
    for (auto* sub : subs)
        if (sub->parsed()) ctx.command = sub->get_name();
    try {
        ctx.cfg = load_config(config_path);
        if (seed_given) {
            ctx.cfg.seed = seed;
            ctx.cfg.coverage.seed = seed;
            if (ctx.cfg.scenario) ctx.cfg.scenario->seed = seed;
        }
        ctx.out = out_dir;
        std::error_code ec;
        fs::create_directories(ctx.out, ec);
        if (ec) throw ConfigError("cannot create output directory '" + out_dir + "': " + ec.message());

        if (ctx.command == "fit") return cmd_fit(ctx);
        if (ctx.command == "predict") return cmd_predict(ctx);
        if (ctx.command == "simulate") return cmd_simulate(ctx);
        if (ctx.command == "residuals") return cmd_residuals(ctx);
        return cmd_coverage(ctx);
    } catch (const InputError& e) {
        std::cerr << "smoothsde: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "smoothsde: " << e.what() << "\n";
        if (!ctx.out.empty()) {
            try {
                write_file_atomic((ctx.out / "diagnostics.json").string(),
                                  json({{"command", ctx.command}, {"error", e.what()}}).dump(2) + "\n");
            } catch (...) {
            }
        }
        return 1;
    }
}

}  // namespace smoothsde::cli
