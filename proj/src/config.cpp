#include "smoothsde/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "smoothsde/errors.hpp"

namespace smoothsde {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [key, value] : j.items())
        if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

template <class T>
T get(const json& j, const std::string& key, const std::string& where, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + "." + key + " has the wrong type");
    }
}

std::vector<std::string> string_list(const json& j, const std::string& where) {
    if (j.is_string()) return {j.get<std::string>()};
    if (!j.is_array()) throw ConfigError(where + " must be a string or a list of strings");
    std::vector<std::string> out;
    for (const auto& v : j) {
        if (!v.is_string()) throw ConfigError(where + " must contain strings");
        out.push_back(v.get<std::string>());
    }
    return out;
}

FormulaTerm parse_term(const json& j, const std::string& where) {
    check_keys(j, where, {"kind", "covariate", "factor", "k", "shrinkage", "basis"});
    FormulaTerm t;
    const auto kind = get<std::string>(j, "kind", where, "");
    if (kind == "intercept") t.kind = TermKind::Intercept;
    else if (kind == "linear") t.kind = TermKind::Linear;
    else if (kind == "smooth") t.kind = TermKind::Smooth;
    else if (kind == "random_intercept" || kind == "re") t.kind = TermKind::RandomIntercept;
    else throw ConfigError(where + ": unknown term kind '" + kind + "'");
    if (t.kind == TermKind::RandomIntercept) t.covariate = get<std::string>(j, "factor", where, get<std::string>(j, "covariate", where, ""));
    else t.covariate = get<std::string>(j, "covariate", where, "");
    if (t.kind != TermKind::Intercept && t.covariate.empty()) throw ConfigError(where + ": term needs a covariate");
    t.num_basis = get<int>(j, "k", where, 10);
    if (t.kind == TermKind::Smooth && t.num_basis < 3) throw ConfigError(where + ": k must be at least 3");
    t.shrinkage = get<bool>(j, "shrinkage", where, true);
    t.basis = get<std::string>(j, "basis", where, "cr");
    if (t.basis != "cr" && t.basis != "bs" && t.basis != "cs")
        throw ConfigError(where + ": unsupported basis '" + t.basis + "' (cubic B-splines only)");
    return t;
}

ModelSpec parse_model(const json& j) {
    const std::string where = "model";
    check_keys(j, where, {"family", "response", "formulas", "zeta", "estimate_zeta", "nu", "priors", "init"});
    ModelSpec m;
    m.family = parse_family(get<std::string>(j, "family", where, ""));
    if (!j.contains("response")) throw ConfigError("model.response is required");
    m.response = string_list(j.at("response"), "model.response");
    if (!j.contains("formulas") || !j.at("formulas").is_array()) throw ConfigError("model.formulas must be a list");
    int fi = 0;
    for (const auto& f : j.at("formulas")) {
        const std::string fw = "model.formulas[" + std::to_string(fi++) + "]";
        check_keys(f, fw, {"param", "terms"});
        ParameterFormula pf;
        pf.param = canonical_param(get<std::string>(f, "param", fw, ""));
        if (f.contains("terms")) {
            if (!f.at("terms").is_array()) throw ConfigError(fw + ".terms must be a list");
            int ti = 0;
            for (const auto& t : f.at("terms")) pf.terms.push_back(parse_term(t, fw + ".terms[" + std::to_string(ti++) + "]"));
        }
        m.formulas.push_back(std::move(pf));
    }
    m.aux.zeta = get<double>(j, "zeta", where, 0.0);
    m.aux.nu = get<double>(j, "nu", where, 3.0);
    m.estimate_zeta = get<bool>(j, "estimate_zeta", where, false);
    if (j.contains("priors")) {
        if (!j.at("priors").is_array()) throw ConfigError("model.priors must be a list");
        for (const auto& p : j.at("priors")) {
            check_keys(p, "model.priors", {"name", "mean", "sd"});
            m.priors.push_back({get<std::string>(p, "name", "model.priors", ""), get<double>(p, "mean", "model.priors", 0.0),
                                get<double>(p, "sd", "model.priors", 1.0)});
        }
    }
    if (j.contains("init")) {
        check_keys(j.at("init"), "model.init", {"r", "s", "mu", "drift", "beta", "sigma", "diffusion", "scale"});
        for (const auto& [k, v] : j.at("init").items()) {
            if (!v.is_number()) throw ConfigError("model.init." + k + " must be a number");
            m.init[canonical_param(k)] = v.get<double>();
        }
    }
    return m;
}

Curve parse_curve(const json& j, const std::string& where) {
    if (j.is_string()) return Curve::expression(j.get<std::string>());
    check_keys(j, where, {"x", "y"});
    try {
        return Curve::table(j.at("x").get<std::vector<double>>(), j.at("y").get<std::vector<double>>());
    } catch (const json::exception&) {
        throw ConfigError(where + " must be an expression string or {\"x\": [...], \"y\": [...]}");
    }
}

ScenarioConfig parse_scenario_config(const json& j) {
    const std::string where = "scenario";
    check_keys(j, where, {"kind", "r", "s", "dt", "fine_length", "keep", "dims", "k"});
    ScenarioConfig cfg = default_scenario(parse_scenario(get<std::string>(j, "kind", where, "BM_COVARIATE")));
    if (j.contains("r")) cfg.r = parse_curve(j.at("r"), "scenario.r");
    if (j.contains("s")) cfg.s = parse_curve(j.at("s"), "scenario.s");
    cfg.dt = get<double>(j, "dt", where, cfg.dt);
    cfg.fine_length = get<std::size_t>(j, "fine_length", where, cfg.fine_length);
    cfg.keep = get<std::size_t>(j, "keep", where, cfg.keep);
    cfg.dims = get<int>(j, "dims", where, cfg.dims);
    cfg.num_basis = get<int>(j, "k", where, cfg.num_basis);
    return cfg;
}

}  // namespace

std::string canonical_param(const std::string& name) {
    if (name == "mu" || name == "drift" || name == "beta") return "r";
    if (name == "sigma" || name == "diffusion" || name == "scale") return "s";
    return name;
}

std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

RunConfig parse_config(const std::string& text, const std::string& base_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("malformed JSON: ") + e.what());
    }
    check_keys(j, "config", {"data", "model", "optimizer", "predict", "scenario", "coverage", "residuals", "seed"});
    RunConfig cfg;
    cfg.text = text;
    if (j.contains("data")) {
        std::filesystem::path p = get<std::string>(j, "data", "config", "");
        if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
        cfg.data_path = p.lexically_normal().string();
    }
    if (j.contains("model")) cfg.model = parse_model(j.at("model"));
    if (j.contains("optimizer")) {
        const auto& o = j.at("optimizer");
        const std::string w = "optimizer";
        check_keys(o, w, {"max_iterations", "rel_tol", "grad_tol", "fd_step", "max_step", "inner_max_iterations",
                          "inner_tol", "log_lambda_min", "log_lambda_max"});
        auto& opt = cfg.fit.optimizer;
        opt.max_iterations = get<int>(o, "max_iterations", w, opt.max_iterations);
        opt.rel_tol = get<double>(o, "rel_tol", w, opt.rel_tol);
        opt.grad_tol = get<double>(o, "grad_tol", w, opt.grad_tol);
        opt.fd_step = get<double>(o, "fd_step", w, opt.fd_step);
        opt.max_step = get<double>(o, "max_step", w, opt.max_step);
        cfg.fit.inner_max_iterations = get<int>(o, "inner_max_iterations", w, cfg.fit.inner_max_iterations);
        cfg.fit.inner_tol = get<double>(o, "inner_tol", w, cfg.fit.inner_tol);
        cfg.fit.log_lambda_min = get<double>(o, "log_lambda_min", w, cfg.fit.log_lambda_min);
        cfg.fit.log_lambda_max = get<double>(o, "log_lambda_max", w, cfg.fit.log_lambda_max);
    }
    if (j.contains("predict")) {
        const auto& p = j.at("predict");
        const std::string w = "predict";
        check_keys(p, w, {"covariate", "grid_size", "n_post", "level", "fixed"});
        cfg.predict.covariate = get<std::string>(p, "covariate", w, "");
        cfg.predict.grid_size = get<int>(p, "grid_size", w, cfg.predict.grid_size);
        cfg.predict.n_post = get<int>(p, "n_post", w, cfg.predict.n_post);
        cfg.predict.level = get<double>(p, "level", w, cfg.predict.level);
        cfg.predict.fixed = get<std::map<std::string, double>>(p, "fixed", w, {});
    }
    if (j.contains("scenario")) cfg.scenario = parse_scenario_config(j.at("scenario"));
    if (j.contains("coverage")) {
        const auto& c = j.at("coverage");
        const std::string w = "coverage";
        check_keys(c, w, {"replicates", "level", "n_post", "grid_size", "threads"});
        cfg.coverage.replicates = get<int>(c, "replicates", w, cfg.coverage.replicates);
        cfg.coverage.level = get<double>(c, "level", w, cfg.coverage.level);
        cfg.coverage.n_post = get<int>(c, "n_post", w, cfg.coverage.n_post);
        cfg.coverage.grid_size = get<int>(c, "grid_size", w, cfg.coverage.grid_size);
        cfg.coverage.threads = get<int>(c, "threads", w, cfg.coverage.threads);
    }
    if (j.contains("residuals")) {
        check_keys(j.at("residuals"), "residuals", {"max_lag"});
        cfg.residuals.max_lag = get<int>(j.at("residuals"), "max_lag", "residuals", cfg.residuals.max_lag);
    }
    cfg.seed = get<std::uint64_t>(j, "seed", "config", cfg.seed);
    cfg.coverage.seed = cfg.seed;
    cfg.coverage.fit = cfg.fit;
    if (cfg.scenario) cfg.scenario->seed = cfg.seed;
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    const auto dir = std::filesystem::path(path).parent_path();
    return parse_config(ss.str(), dir.empty() ? "." : dir.string());
}

}  // namespace smoothsde
