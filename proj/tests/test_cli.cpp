#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"

#include "subres/scenario.hpp"
#include "subres/serialize.hpp"

using namespace subres;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("subres_cli_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

ScenarioConfig config_for(const std::string& scenario, const fs::path& out) {
    ScenarioConfig c = parse_config(Json{{"scenario", scenario}});
    c.out_dir = out;
    return c;
}

RunOutcome run(const ScenarioConfig& c, Stage stage, std::string* diag_text = nullptr) {
    std::ostringstream diag;
    RunOutcome o = run_scenario(c, stage, diag);
    if (diag_text) {
        *diag_text = diag.str();
    }
    return o;
}

double coefficient(const Json& map, int target, const std::vector<int>& alpha) {
    for (const auto& t : map.at("terms")) {
        if (t.at("target_index").get<int>() == target && t.at("multi_index").get<std::vector<int>>() == alpha) {
            return t.at("coefficient").get<double>();
        }
    }
    return 0.0;
}

int cli(const std::string& args) {
    const std::string cmd = std::string(SUBRES_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path write_config(const fs::path& dir, const Json& j) {
    const fs::path p = dir / "config.json";
    write_atomic(p, dump(j));
    return p;
}

} // namespace

TEST_CASE("builtin listing") {
    const auto b = list_builtins();
    auto has = [&](const std::string& n) {
        return std::any_of(b.begin(), b.end(), [&](const BuiltinInfo& i) { return i.name == n; });
    };
    CHECK(has("koenigs"));
    CHECK(has("resonant2"));
    CHECK(b.size() == 6);
    for (const auto& i : b) {
        CHECK_FALSE(i.description.empty());
    }
}

TEST_CASE("config parsing") {
    CHECK_THROWS_AS(parse_config(Json::array()), ConfigError);
    CHECK_THROWS_AS(parse_config(Json{{"scenario", "koenigs"}, {"bogus", 1}}), ConfigError);
    CHECK_THROWS_AS(parse_config(Json{{"scenario", "nope"}}), ConfigError);
    CHECK_THROWS_AS(parse_config(Json{{"scenario", "koenigs"}, {"epsilon", "x"}}), ConfigError);
    CHECK_THROWS_AS(parse_config(Json{{"scenario", "koenigs"}, {"epsilon", -1.0}}), ConfigError);
    CHECK_THROWS_AS(parse_config(Json::parse(R"({"checks": {"residual": {"radii": [0.01, 0.1]}}})")), ConfigError);
    CHECK_THROWS_AS(parse_config(Json::parse(R"({"tolerances": {"oracle": 0}})")), ConfigError);
    CHECK_THROWS_AS(parse_config(Json::parse(R"({"tolerances": {"nonsense": 1}})")), ConfigError);

    const auto c = parse_config(Json::parse(R"({
        "scenario": "random_full", "order": 3, "seed": 9, "lift": "custom_transversal",
        "random": {"points": 3, "dim": 2, "blocks": 2},
        "checks": {"chart": false, "residual": {"radii": [0.2, 0.1], "samples": 8}, "flag": {"samples": 5}},
        "tolerances": {"oracle": 1e-9}
    })"));
    CHECK(c.scenario == "random_full");
    CHECK(c.order == 3);
    CHECK(c.seed == 9);
    CHECK(c.lift == LiftPolicy::custom_transversal);
    CHECK(c.random.points == 3);
    CHECK_FALSE(c.check_chart);
    CHECK(c.radii == std::vector<double>{0.2, 0.1});
    CHECK(c.residual_samples == 8);
    CHECK(c.flag_samples == 5);
    CHECK(c.tol.oracle == 1e-9);

    // Round trip through the report form.
    const auto again = parse_config(config_to_json(c));
    CHECK(dump(config_to_json(again)) == dump(config_to_json(c)));

    const auto inline_cfg = parse_config(Json::parse(R"({
        "cocycle": {"grading": [1], "periodic": true,
                    "maps": [{"terms": [{"target_index": 0, "multi_index": [1], "coefficient": 0.5},
                                        {"target_index": 0, "multi_index": [2], "coefficient": 0.1}]}]}
    })"));
    CHECK(inline_cfg.scenario == "inline");
    const auto sc = build_scenario(inline_cfg);
    CHECK(sc.cocycle.map(0).coeff(0, {2}) == 0.1);
}

TEST_CASE("tolerance overrides") {
    ScenarioConfig c;
    apply_override(c, "epsilon=0.02");
    CHECK(c.epsilon == 0.02);
    apply_override(c, "oracle=1e-8");
    CHECK(c.tol.oracle == 1e-8);
    apply_override(c, "max_series_terms=500");
    CHECK(c.max_series_terms == 500);
    CHECK_THROWS_AS(apply_override(c, "oracle"), ConfigError);
    CHECK_THROWS_AS(apply_override(c, "oracle=abc"), ConfigError);
    CHECK_THROWS_AS(apply_override(c, "nonsense=1"), ConfigError);
    CHECK_THROWS_AS(apply_override(c, "oracle=-1"), ConfigError);
}

TEST_CASE("every builtin passes under defaults") {
    for (const auto& b : list_builtins()) {
        CAPTURE(b.name);
        const auto out = scratch("builtin_" + b.name);
        const auto o = run(config_for(b.name, out), Stage::full);
        CHECK(o.exit_code == 0);
        CHECK(o.failed_checks.empty());
        CHECK(fs::exists(out / "report.json"));
        CHECK(fs::exists(out / "residuals.csv"));
        CHECK(fs::exists(out / "result.json"));
    }
}

TEST_CASE("report contents") {
    {
        const auto out = scratch("koenigs_report");
        REQUIRE(run(config_for("koenigs", out), Stage::full).exit_code == 0);
        const Json r = Json::parse(slurp(out / "report.json"));
        const Json& h = r.at("result").at("points").at(0).at("H");
        CHECK(coefficient(h, 0, {2}) == doctest::Approx(0.4).epsilon(1e-14));
        CHECK(r.at("pass").get<bool>());
        for (const char* key : {"spectrum", "structure", "cocycle", "frames", "checks", "result"}) {
            CHECK(r.contains(key));
        }
        const std::string csv = slurp(out / "residuals.csv");
        CHECK(csv.rfind("radius,max_residual,slope_cumulative\n", 0) == 0);
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
    }
    {
        const auto out = scratch("resonant_report");
        REQUIRE(run(config_for("resonant2", out), Stage::full).exit_code == 0);
        const Json r = Json::parse(slurp(out / "report.json"));
        const Json& p = r.at("result").at("points").at(0).at("P");
        CHECK(coefficient(p, 0, {0, 2}) == 0.3);
        CHECK(coefficient(r.at("result").at("points").at(0).at("H"), 0, {0, 2}) == 0.0);
    }
}

TEST_CASE("configuration failures exit with code 2") {
    const auto out = scratch("bad_eps");
    auto c = config_for("nonresonant2", out);
    c.epsilon = 0.5;
    std::string diag;
    const auto o = run(c, Stage::full, &diag);
    CHECK(o.exit_code == 2);
    CHECK(diag.find("contraction") != std::string::npos);
}

TEST_CASE("failed checks exit with code 1") {
    const auto out = scratch("tight");
    auto c = config_for("koenigs", out);
    c.tol.chart = 1e-300;
    std::string diag;
    const auto o = run(c, Stage::full, &diag);
    CHECK(o.exit_code == 1);
    CHECK(o.failed_checks == std::vector<std::string>{"chart"});
    CHECK(diag.find("chart") != std::string::npos);
}

TEST_CASE("determinism and staged runs") {
    const auto a = scratch("det_a");
    const auto b = scratch("det_b");
    auto ca = config_for("random_full", a);
    ca.seed = 21;
    auto cb = ca;
    cb.out_dir = b;
    REQUIRE(run(ca, Stage::full).exit_code == 0);
    REQUIRE(run(cb, Stage::full).exit_code == 0);
    CHECK(slurp(a / "report.json") == slurp(b / "report.json"));
    CHECK(slurp(a / "residuals.csv") == slurp(b / "residuals.csv"));

    // verify reuses the cached solve and reproduces the checks.
    const std::string before = slurp(a / "report.json");
    CHECK(run(ca, Stage::verify_cached).exit_code == 0);
    const Json verified = Json::parse(slurp(a / "report.json"));
    CHECK(verified.at("stage") == "verify");
    CHECK(Json::parse(before).at("checks") == verified.at("checks"));

    auto other = ca;
    other.seed = 22;
    CHECK(run(other, Stage::verify_cached).exit_code == 2);
    const auto empty = scratch("det_empty");
    auto missing = ca;
    missing.out_dir = empty;
    CHECK(run(missing, Stage::verify_cached).exit_code == 2);

    const auto sp = scratch("spectrum_only");
    auto cs = config_for("koenigs_period2", sp);
    CHECK(run(cs, Stage::spectrum_only).exit_code == 0);
    CHECK(fs::exists(sp / "spectrum.json"));
    CHECK_FALSE(fs::exists(sp / "result.json"));
}

TEST_CASE("command line") {
    const auto dir = scratch("cli");
    const auto cfg = write_config(dir, Json{{"scenario", "koenigs"}});
    const std::string out = (dir / "out").string();
    CHECK(cli("list") == 0);
    CHECK(cli("run " + cfg.string() + " --out-dir " + out) == 0);
    CHECK(fs::exists(dir / "out" / "report.json"));
    CHECK(cli("verify " + cfg.string() + " --out-dir " + out) == 0);
    CHECK(cli("spectrum " + cfg.string() + " --out-dir " + out + " --seed 3") == 0);
    CHECK(cli("run " + cfg.string() + " --out-dir " + out + " --tol-override chart=1e-300") == 1);
    CHECK(cli("run " + cfg.string() + " --out-dir " + out + " --tol-override epsilon=0.5") == 2);
    CHECK(cli("run " + cfg.string() + " --out-dir " + out + " --tol-override bogus=1") == 2);
    CHECK(cli("run " + (dir / "missing.json").string()) == 2);
    CHECK(cli("frobnicate") == 2);
    CHECK(cli("") == 2);

    const auto bad = write_config(dir, Json{{"scenario", "koenigs"}, {"unknown", true}});
    CHECK(cli("run " + bad.string() + " --out-dir " + out) == 2);
}
