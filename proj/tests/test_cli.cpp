#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "smoothsde_cli_tests";

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path write(const std::string& name, const std::string& content) {
    fs::create_directories(kRoot);
    const fs::path p = kRoot / name;
    std::ofstream(p, std::ios::binary) << content;
    return p;
}

struct Run {
    int code = -1;
    std::string err;
};

Run run(const std::string& args) {
    fs::create_directories(kRoot);
    const fs::path err = kRoot / "stderr.txt";
    const std::string cmd = std::string("\"") + SMOOTHSDE_BIN + "\" " + args + " >/dev/null 2>\"" + err.string() + "\"";
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = slurp(err);
    return r;
}

std::string bm_csv() {
    std::string s = "ID,time,z,x1\n";
    double z = 0.0;
    std::uint64_t state = 12345;
    auto unit = [&] {
        state = state * 6364136223846793005ULL + 1442695040888963407ULL;
        return static_cast<double>(state >> 11) / 9007199254740992.0;
    };
    for (int i = 0; i < 200; ++i) {
        const double x = 0.5 + 0.4 * std::sin(0.05 * i);
        s += "a," + std::to_string(i * 0.1) + "," + std::to_string(z) + "," + std::to_string(x) + "\n";
        z += 0.1 * (0.5 + x) + std::sqrt(0.1) * (unit() + unit() + unit() - 1.5) * 2.0;
    }
    return s;
}

std::string model_config(const std::string& family, const std::string& data, const std::string& extra = "") {
    return R"({"data": ")" + data + R"(", "seed": 3, "model": {"family": ")" + family +
           R"(", "response": "z", "formulas": [{"param": "r", "terms": [{"kind": "smooth", "covariate": "x1", "k": 5}]},)" +
           R"({"param": "s"}]}, "predict": {"grid_size": 10, "n_post": 100})" + extra + "}";
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit with 2") {
    CHECK(run("").code == 2);
    CHECK(run("frobnicate --config x.json").code == 2);
    CHECK(run("fit").code == 2);
    const Run missing = run("fit --config /nonexistent.json --out " + (kRoot / "o").string());
    CHECK(missing.code == 2);
    CHECK(missing.err.find("cannot open config file") != std::string::npos);
}

TEST_CASE("malformed JSON is a user error with a location") {
    const fs::path cfg = write("bad.json", "{\n  \"seed\": 1,\n  oops\n}\n");
    const Run r = run("fit --config " + cfg.string() + " --out " + (kRoot / "bad").string());
    CHECK(r.code == 2);
    CHECK(r.err.find("malformed JSON") != std::string::npos);
    CHECK(r.err.find("line 3") != std::string::npos);
}

TEST_CASE("fit writes outputs and reruns are byte-identical") {
    write("bm.csv", bm_csv());
    const fs::path cfg = write("fit.json", model_config("BM_DRIFT", "bm.csv"));
    const fs::path a = kRoot / "fit_a", b = kRoot / "fit_b";
    fs::remove_all(a);
    fs::remove_all(b);
    REQUIRE(run("fit --config " + cfg.string() + " --out " + a.string()).code == 0);
    REQUIRE(run("fit --config " + cfg.string() + " --out " + b.string()).code == 0);
    for (const char* f : {"fit.json", "curves.csv", "manifest.json"}) {
        CAPTURE(f);
        REQUIRE(fs::exists(a / f));
        CHECK(slurp(a / f) == slurp(b / f));
    }
    const json fit = json::parse(slurp(a / "fit.json"));
    CHECK(fit["converged"] == true);
    CHECK(fit["family"] == "BM_DRIFT");
    CHECK(fit["fixed_effects"].size() == 2);
    CHECK(fit["smoothing_parameters"].size() == 1);
    const json manifest = json::parse(slurp(a / "manifest.json"));
    CHECK(manifest["command"] == "fit");
    CHECK(manifest["seed"] == 3);
    CHECK(manifest["config_hash"].get<std::string>().rfind("fnv1a64:", 0) == 0);
    // Header plus 10 grid points for each of two parameters.
    const std::string curves = slurp(a / "curves.csv");
    CHECK(std::count(curves.begin(), curves.end(), '\n') == 21);
    CHECK(curves.rfind("x1,param,estimate,lower,upper\n", 0) == 0);

    const fs::path c = kRoot / "fit_c";
    REQUIRE(run("fit --config " + cfg.string() + " --out " + c.string() + " --seed 4").code == 0);
    CHECK(slurp(c / "curves.csv") != slurp(a / "curves.csv"));
    CHECK(slurp(c / "fit.json") == slurp(a / "fit.json"));
}

TEST_CASE("residuals are written for BM and refused for CTCRW") {
    write("bm.csv", bm_csv());
    const fs::path bm = write("res.json", model_config("BM_DRIFT", "bm.csv", R"(, "residuals": {"max_lag": 4})"));
    const fs::path out = kRoot / "res";
    REQUIRE(run("residuals --config " + bm.string() + " --out " + out.string()).code == 0);
    for (const char* f : {"residuals.csv", "qq.csv", "acf.csv", "residual_summary.json"}) CHECK(fs::exists(out / f));
    const std::string acf = slurp(out / "acf.csv");
    CHECK(std::count(acf.begin(), acf.end(), '\n') == 6);
    const json s = json::parse(slurp(out / "residual_summary.json"));
    CHECK(s["n"] == 199);
    CHECK(s["reference"] == "standard_normal");

    const fs::path cr = write("res_ctcrw.json", model_config("CTCRW", "bm.csv"));
    const Run r = run("residuals --config " + cr.string() + " --out " + (kRoot / "res_ctcrw").string());
    CHECK(r.code == 2);
    CHECK(r.err.find("unsupported for latent-state families") != std::string::npos);
}

TEST_CASE("missing responses are allowed only for latent-state families") {
    std::string csv = bm_csv();
    const auto row = csv.find("\na,0.500000,");
    REQUIRE(row != std::string::npos);
    const auto start = csv.find(',', row + 3) + 1;
    const auto end = csv.find(',', start);
    csv.replace(start, end - start, "NA");
    write("gap.csv", csv);
    const Run bm = run("fit --config " + write("gap_bm.json", model_config("BM_DRIFT", "gap.csv")).string() + " --out " +
                       (kRoot / "gap_bm").string());
    CHECK(bm.code == 2);
    CHECK(run("fit --config " + write("gap_cr.json", model_config("CTCRW", "gap.csv")).string() + " --out " +
              (kRoot / "gap_cr").string())
              .code == 0);
}

TEST_CASE("simulate then fit") {
    const fs::path cfg = write("sim.json", R"({"data": "sim/data.csv", "seed": 9,
        "scenario": {"kind": "BM_COVARIATE", "fine_length": 20000, "keep": 400, "k": 6},
        "model": {"family": "BM_DRIFT", "response": "z", "formulas": [
            {"param": "r", "terms": [{"kind": "smooth", "covariate": "x1", "k": 6}]},
            {"param": "s", "terms": [{"kind": "smooth", "covariate": "x1", "k": 6}]}]},
        "predict": {"grid_size": 5, "n_post": 50}})");
    REQUIRE(run("simulate --config " + cfg.string() + " --out " + (kRoot / "sim").string()).code == 0);
    CHECK(fs::exists(kRoot / "sim" / "truth.csv"));
    const std::string data = slurp(kRoot / "sim" / "data.csv");
    CHECK(std::count(data.begin(), data.end(), '\n') == 401);
    CHECK(run("fit --config " + cfg.string() + " --out " + (kRoot / "sim_fit").string()).code == 0);
    CHECK(json::parse(slurp(kRoot / "sim_fit" / "fit.json"))["n"] == 400);
}

TEST_CASE("coverage with two replicates") {
    const fs::path cfg = write("cov.json", R"({"seed": 2,
        "scenario": {"kind": "BM_COVARIATE", "fine_length": 20000, "keep": 400, "k": 6},
        "coverage": {"replicates": 2, "n_post": 100, "grid_size": 11, "threads": 1}})");
    const fs::path out = kRoot / "cov";
    REQUIRE(run("coverage --config " + cfg.string() + " --out " + out.string()).code == 0);
    const json s = json::parse(slurp(out / "coverage_summary.json"));
    CHECK(s["replicates"] == 2);
    CHECK(s["failures"] == 0);
    CHECK(s["average_coverage"]["r"].get<double>() >= 0.0);
    CHECK(s["average_coverage"]["r"].get<double>() <= 1.0);
    const std::string table = slurp(out / "coverage.csv");
    CHECK(std::count(table.begin(), table.end(), '\n') == 23);
    CHECK(fs::exists(out / "replicates.csv"));
}

}  // TEST_SUITE
