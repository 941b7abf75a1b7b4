#include "subres/scenario.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include "subres/errors.hpp"

namespace subres {

namespace {

const std::set<std::string> kBuiltinNames{"koenigs", "koenigs_period2", "resonant2",
                                          "nonresonant2", "random_subres", "random_full"};

std::string fmt(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void require(bool ok, const std::string& what) {
    if (!ok) {
        throw ConfigError(what);
    }
}

void check_keys(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!allowed.count(it.key())) {
            throw ConfigError("unknown key '" + it.key() + "' in " + where);
        }
    }
}

double& tolerance_slot(Tolerances& t, const std::string& key) {
    if (key == "exact_residual") return t.exact_residual;
    if (key == "oracle") return t.oracle;
    if (key == "gauge") return t.gauge;
    if (key == "lift_identity") return t.lift_identity;
    if (key == "centralizer") return t.centralizer;
    if (key == "commute") return t.commute;
    if (key == "flag") return t.flag;
    if (key == "chart") return t.chart;
    if (key == "sandwich") return t.sandwich;
    if (key == "p_n_part") return t.p_n_part;
    if (key == "tail") return t.tail;
    if (key == "cluster") return t.cluster;
    throw ConfigError("unknown tolerance '" + key + "'");
}

const std::vector<std::string> kToleranceKeys{"exact_residual", "oracle",   "gauge", "lift_identity",
                                              "centralizer",    "commute",  "flag",  "chart",
                                              "sandwich",       "p_n_part", "tail",  "cluster"};

Eigen::VectorXd vec(std::initializer_list<double> v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) {
        out(i++) = x;
    }
    return out;
}

LiftPolicy parse_lift(const std::string& s) {
    if (s == "orthogonal_complement") {
        return LiftPolicy::orthogonal_complement;
    }
    if (s == "custom_transversal") {
        return LiftPolicy::custom_transversal;
    }
    throw ConfigError("lift must be orthogonal_complement or custom_transversal");
}

std::string lift_name(LiftPolicy p) {
    return p == LiftPolicy::orthogonal_complement ? "orthogonal_complement" : "custom_transversal";
}

void validate(const ScenarioConfig& c) {
    if (c.scenario == "inline") {
        require(c.inline_cocycle.has_value(), "scenario 'inline' needs a cocycle");
    } else {
        require(kBuiltinNames.count(c.scenario) > 0, "unknown scenario '" + c.scenario + "'");
    }
    require(c.epsilon > 0.0, "epsilon must be positive");
    require(c.resonance_tol >= 0.0, "resonance_tol must be non-negative");
    require(c.order >= 0, "order must be at least 1 (0 selects the scenario default)");
    require(c.series_tol > 0.0, "series_tol must be positive");
    require(c.max_series_terms >= 1, "max_series_terms must be positive");
    require(!c.radii.empty(), "residual radii must not be empty");
    for (std::size_t i = 0; i < c.radii.size(); ++i) {
        require(c.radii[i] > 0.0 && (i == 0 || c.radii[i] < c.radii[i - 1]),
                "residual radii must be positive and strictly decreasing");
    }
    require(c.residual_samples >= 1 && c.flag_samples >= 1 && c.sandwich_trials >= 1 && c.sandwich_horizon >= 1,
            "sample counts must be positive");
    require(c.chart_internal_order >= 1, "chart internal_order must be positive");
    Tolerances t = c.tol;
    for (const auto& key : kToleranceKeys) {
        require(tolerance_slot(t, key) > 0.0, "tolerance '" + key + "' must be positive");
    }
    const auto& r = c.random;
    require(r.points >= 1 && r.points <= 16, "random.points must be in 1..16");
    require(r.dim >= 1 && r.dim <= 6, "random.dim must be in 1..6");
    require(r.blocks >= 1 && r.blocks <= r.dim, "random.blocks must be in 1..dim");
    require(r.degree >= 2 && r.degree <= 8, "random.degree must be in 2..8");
    require(r.coefficient_scale >= 0.0, "random.coefficient_scale must be non-negative");
}

} // namespace

ScenarioConfig parse_config(const Json& j) {
    if (!j.is_object()) {
        throw ConfigError("config must be a JSON object");
    }
    check_keys(j,
               {"scenario", "cocycle", "random", "epsilon", "resonance_tol", "order", "series_tol",
                "max_series_terms", "lift", "transversal_weight", "checks", "tolerances", "seed", "out_dir"},
               "config");
    ScenarioConfig c;
    try {
        if (j.contains("scenario")) {
            const Json& s = j.at("scenario");
            if (s.is_object()) {
                c.scenario = "inline";
                c.inline_cocycle = s;
            } else {
                c.scenario = s.get<std::string>();
            }
        }
        if (j.contains("cocycle")) {
            c.inline_cocycle = j.at("cocycle");
            if (!j.contains("scenario")) {
                c.scenario = "inline";
            }
        }
        if (j.contains("random")) {
            const Json& r = j.at("random");
            check_keys(r, {"points", "dim", "blocks", "degree", "coefficient_scale"}, "random");
            c.random.points = r.value("points", c.random.points);
            c.random.dim = r.value("dim", c.random.dim);
            c.random.blocks = r.value("blocks", std::min(c.random.blocks, c.random.dim));
            c.random.degree = r.value("degree", c.random.degree);
            c.random.coefficient_scale = r.value("coefficient_scale", c.random.coefficient_scale);
        }
        c.epsilon = j.value("epsilon", c.epsilon);
        c.resonance_tol = j.value("resonance_tol", c.resonance_tol);
        c.order = j.value("order", c.order);
        c.series_tol = j.value("series_tol", c.series_tol);
        c.max_series_terms = j.value("max_series_terms", c.max_series_terms);
        if (j.contains("lift")) {
            c.lift = parse_lift(j.at("lift").get<std::string>());
        }
        c.transversal_weight = j.value("transversal_weight", c.transversal_weight);
        if (j.contains("checks")) {
            const Json& ch = j.at("checks");
            check_keys(ch, {"residual", "oracle", "gauge", "centralizer", "flag", "lyapunov", "chart"}, "checks");
            auto toggle = [&](const char* key, bool& flag) -> const Json* {
                if (!ch.contains(key)) {
                    return nullptr;
                }
                const Json& v = ch.at(key);
                if (v.is_boolean()) {
                    flag = v.get<bool>();
                    return nullptr;
                }
                flag = v.value("enabled", true);
                return &v;
            };
            if (const Json* v = toggle("residual", c.check_residual)) {
                check_keys(*v, {"enabled", "radii", "samples"}, "checks.residual");
                c.radii = v->value("radii", c.radii);
                c.residual_samples = v->value("samples", c.residual_samples);
            }
            toggle("oracle", c.check_oracle);
            toggle("gauge", c.check_gauge);
            toggle("centralizer", c.check_centralizer);
            if (const Json* v = toggle("flag", c.check_flag)) {
                check_keys(*v, {"enabled", "samples"}, "checks.flag");
                c.flag_samples = v->value("samples", c.flag_samples);
            }
            if (const Json* v = toggle("lyapunov", c.check_lyapunov)) {
                check_keys(*v, {"enabled", "trials", "horizon"}, "checks.lyapunov");
                c.sandwich_trials = v->value("trials", c.sandwich_trials);
                c.sandwich_horizon = v->value("horizon", c.sandwich_horizon);
            }
            if (const Json* v = toggle("chart", c.check_chart)) {
                check_keys(*v, {"enabled", "points", "internal_order"}, "checks.chart");
                if (v->contains("points")) {
                    std::vector<Eigen::VectorXd> pts;
                    for (const auto& p : v->at("points")) {
                        const auto xs = p.get<std::vector<double>>();
                        pts.push_back(Eigen::Map<const Eigen::VectorXd>(xs.data(), static_cast<Eigen::Index>(xs.size())));
                    }
                    c.chart_points = std::move(pts);
                }
                c.chart_internal_order = v->value("internal_order", c.chart_internal_order);
            }
        }
        if (j.contains("tolerances")) {
            for (auto it = j.at("tolerances").begin(); it != j.at("tolerances").end(); ++it) {
                tolerance_slot(c.tol, it.key()) = it.value().get<double>();
            }
        }
        if (j.contains("seed")) {
            c.seed = j.at("seed").get<std::uint64_t>();
        }
        if (j.contains("out_dir")) {
            c.out_dir = j.at("out_dir").get<std::string>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    validate(c);
    return c;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot read config " + path.string());
    }
    Json j;
    try {
        j = Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    return parse_config(j);
}

Json config_to_json(const ScenarioConfig& c) {
    Json out;
    out["scenario"] = c.scenario;
    if (c.inline_cocycle) {
        out["cocycle"] = *c.inline_cocycle;
    }
    if (c.scenario.rfind("random_", 0) == 0) {
        out["random"] = Json{{"points", c.random.points},
                             {"dim", c.random.dim},
                             {"blocks", c.random.blocks},
                             {"degree", c.random.degree},
                             {"coefficient_scale", c.random.coefficient_scale}};
    }
    out["epsilon"] = c.epsilon;
    out["resonance_tol"] = c.resonance_tol;
    out["order"] = c.order;
    out["series_tol"] = c.series_tol;
    out["max_series_terms"] = c.max_series_terms;
    out["lift"] = lift_name(c.lift);
    out["transversal_weight"] = c.transversal_weight;
    Json checks;
    checks["residual"] = Json{{"enabled", c.check_residual}, {"radii", c.radii}, {"samples", c.residual_samples}};
    checks["oracle"] = c.check_oracle;
    checks["gauge"] = c.check_gauge;
    checks["centralizer"] = c.check_centralizer;
    checks["flag"] = Json{{"enabled", c.check_flag}, {"samples", c.flag_samples}};
    checks["lyapunov"] = Json{{"enabled", c.check_lyapunov}, {"trials", c.sandwich_trials}, {"horizon", c.sandwich_horizon}};
    Json chart{{"enabled", c.check_chart}, {"internal_order", c.chart_internal_order}};
    if (c.chart_points) {
        Json pts = Json::array();
        for (const auto& p : *c.chart_points) {
            pts.push_back(std::vector<double>(p.data(), p.data() + p.size()));
        }
        chart["points"] = std::move(pts);
    }
    checks["chart"] = std::move(chart);
    out["checks"] = std::move(checks);
    Json tol;
    Tolerances t = c.tol;
    for (const auto& key : kToleranceKeys) {
        tol[key] = tolerance_slot(t, key);
    }
    out["tolerances"] = std::move(tol);
    out["seed"] = c.seed;
    return out;
}

void apply_override(ScenarioConfig& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("override must look like key=value: " + assignment);
    }
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    double value = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        throw ConfigError("override value is not a number: " + assignment);
    }
    if (key == "epsilon") {
        config.epsilon = value;
    } else if (key == "resonance_tol") {
        config.resonance_tol = value;
    } else if (key == "series_tol") {
        config.series_tol = value;
    } else if (key == "max_series_terms") {
        config.max_series_terms = static_cast<int>(value);
    } else {
        tolerance_slot(config.tol, key) = value;
    }
    validate(config);
}

std::vector<BuiltinInfo> list_builtins() {
    return {
        {"koenigs", "scalar F(t) = 0.5t + 0.1t^2 at a fixed point, M = 6 (Koenigs linearization)"},
        {"koenigs_period2", "scalar 2-cycle F0 = 0.5t + 0.1t^2, F1 = 0.4t"},
        {"resonant2", "chi = (-2,-1), F = (e^-2 t1 + 0.3 t2^2, e^-1 t2): resonant term kept in P"},
        {"nonresonant2", "chi = (-1,-0.4), F = (e^-1 t1, e^-0.4 t2 + 0.2 t1^2): quadratic term removed"},
        {"random_subres", "seeded random periodic extension with sub-resonance nonlinearity only (H = Id)"},
        {"random_full", "seeded random periodic extension with a full random polynomial nonlinearity"},
    };
}

namespace {

std::vector<int> random_multiplicities(std::mt19937_64& rng, int dim, int blocks) {
    std::vector<int> m(static_cast<std::size_t>(blocks), 1);
    std::uniform_int_distribution<int> pick(0, blocks - 1);
    for (int extra = dim - blocks; extra > 0; --extra) {
        ++m[static_cast<std::size_t>(pick(rng))];
    }
    return m;
}

Spectrum random_spectrum(std::mt19937_64& rng, const std::vector<int>& mult, const ScenarioConfig& c, int order,
                         bool need_resonance) {
    std::uniform_real_distribution<double> chi_dist(-2.0, -0.6);
    const int blocks = static_cast<int>(mult.size());
    for (int attempt = 0; attempt < 10000; ++attempt) {
        std::vector<double> chi(static_cast<std::size_t>(blocks));
        for (auto& x : chi) {
            x = chi_dist(rng);
        }
        std::sort(chi.begin(), chi.end());
        bool ok = true;
        for (int i = 1; i < blocks; ++i) {
            ok = ok && chi[static_cast<std::size_t>(i)] - chi[static_cast<std::size_t>(i) - 1] >= 0.15;
        }
        if (!ok || (need_resonance && degree_bound(chi) < 2)) {
            continue;
        }
        try {
            Spectrum s(chi, mult, c.epsilon, c.resonance_tol);
            contraction_factor(s, std::max(order, 2));
            // Keep clear of near-resonances so classification is robust.
            const double gap = 1e-3;
            for (int n = 1; n <= s.degree_bound() + 1 && ok; ++n) {
                for (int i = 0; i < blocks && ok; ++i) {
                    for (const auto& comp : compositions(blocks, n)) {
                        if (n == 1 && comp[static_cast<std::size_t>(i)] == 1) {
                            continue;
                        }
                        double v = -chi[static_cast<std::size_t>(i)];
                        for (int j = 0; j < blocks; ++j) {
                            v += comp[static_cast<std::size_t>(j)] * chi[static_cast<std::size_t>(j)];
                        }
                        if (std::abs(v) < gap) {
                            ok = false;
                            break;
                        }
                    }
                }
            }
            if (ok) {
                return s;
            }
        } catch (const Error&) {
        }
    }
    throw ConfigError("could not draw a valid random spectrum for this epsilon/order");
}

OrbitCocycle random_cocycle(const ScenarioConfig& c, int order, bool subres_only) {
    const RandomSpec& r = c.random;
    if (subres_only && r.blocks < 2) {
        throw ConfigError("random_subres needs at least two blocks");
    }
    std::mt19937_64 rng(c.seed);
    const auto mult = random_multiplicities(rng, r.dim, r.blocks);
    const Spectrum spec = random_spectrum(rng, mult, c, order, subres_only);
    const GradedSpace space(mult);
    const SubResStructure structure(spec);
    const int K = r.points;
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::bernoulli_distribution coin(0.5);

    std::vector<Eigen::MatrixXd> linear(static_cast<std::size_t>(K), Eigen::MatrixXd::Zero(r.dim, r.dim));
    for (int i = 0; i < space.blocks(); ++i) {
        const int o = space.block_offset(i);
        const int s = mult[static_cast<std::size_t>(i)];
        const double chi = spec.exponents()[static_cast<std::size_t>(i)];
        std::vector<double> wobble(static_cast<std::size_t>(K));
        double total = 0.0;
        for (int k = 0; k + 1 < K; ++k) {
            wobble[static_cast<std::size_t>(k)] = 0.15 * unit(rng);
            total += wobble[static_cast<std::size_t>(k)];
        }
        wobble[static_cast<std::size_t>(K) - 1] = -total;
        const bool rotation = s > 1 && coin(rng);
        for (int k = 0; k < K; ++k) {
            Eigen::MatrixXd block;
            if (s == 1) {
                block = Eigen::MatrixXd::Constant(1, 1, coin(rng) ? 1.0 : -1.0);
            } else if (rotation) {
                Eigen::MatrixXd g(s, s);
                for (int a = 0; a < s; ++a) {
                    for (int b = 0; b < s; ++b) {
                        g(a, b) = gauss(rng);
                    }
                }
                block = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
            } else {
                block = Eigen::MatrixXd::Identity(s, s);
                for (int a = 0; a < s; ++a) {
                    for (int b = a + 1; b < s; ++b) {
                        block(a, b) = 0.2 * unit(rng);
                    }
                }
            }
            linear[static_cast<std::size_t>(k)].block(o, o, s, s) =
                std::exp(chi + wobble[static_cast<std::size_t>(k)]) * block;
        }
    }

    const int top = std::min(r.degree, std::max(order, 2));
    std::vector<PolyMap> maps;
    for (int k = 0; k < K; ++k) {
        PolyMap f = PolyMap::linear(space, space, linear[static_cast<std::size_t>(k)], top);
        bool nonlinear = false;
        for (int n = 2; n <= top; ++n) {
            const Eigen::MatrixXd mask = nonresonance_mask(space, space, n, structure);
            Eigen::MatrixXd block = Eigen::MatrixXd::Zero(mask.rows(), mask.cols());
            for (Eigen::Index a = 0; a < mask.rows(); ++a) {
                for (Eigen::Index b = 0; b < mask.cols(); ++b) {
                    const bool allowed = !subres_only || mask(a, b) == 0.0;
                    const double v = r.coefficient_scale * unit(rng);
                    if (allowed && coin(rng)) {
                        block(a, b) = v;
                        nonlinear = true;
                    }
                }
            }
            f.set_homogeneous_block(n, block);
        }
        // Keep at least one nonlinear term so small cases are not trivially linear.
        if (!subres_only && !nonlinear) {
            std::vector<int> alpha(static_cast<std::size_t>(r.dim), 0);
            alpha[0] = 2;
            f.set_coeff(0, alpha, r.coefficient_scale * (coin(rng) ? 1.0 : -1.0));
        }
        maps.push_back(std::move(f));
    }
    return OrbitCocycle(space, std::move(maps), true);
}

} // namespace

Scenario build_scenario(const ScenarioConfig& c) {
    const double e = std::exp(1.0);
    if (c.scenario == "koenigs") {
        return {OrbitCocycle(GradedSpace::single(1), {PolyMap::univariate({0.0, 0.5, 0.1})}, true), 6,
                {vec({0.05}), vec({-0.05}), vec({0.02}), vec({-0.02})}};
    }
    if (c.scenario == "koenigs_period2") {
        return {OrbitCocycle(GradedSpace::single(1),
                             {PolyMap::univariate({0.0, 0.5, 0.1}), PolyMap::univariate({0.0, 0.4})}, true),
                6, {vec({0.05}), vec({-0.02})}};
    }
    if (c.scenario == "resonant2") {
        const GradedSpace space({1, 1});
        PolyMap f(space, space, 2);
        f.set_coeff(0, {1, 0}, std::exp(-2.0));
        f.set_coeff(0, {0, 2}, 0.3);
        f.set_coeff(1, {0, 1}, 1.0 / e);
        return {OrbitCocycle(space, {f}, true), 4, {vec({0.05, 0.05}), vec({-0.05, 0.02})}};
    }
    if (c.scenario == "nonresonant2") {
        const GradedSpace space({1, 1});
        PolyMap f(space, space, 2);
        f.set_coeff(0, {1, 0}, 1.0 / e);
        f.set_coeff(1, {0, 1}, std::exp(-0.4));
        f.set_coeff(1, {2, 0}, 0.2);
        return {OrbitCocycle(space, {f}, true), 4, {vec({0.05, 0.05})}};
    }
    const int order = c.order > 0 ? c.order : 4;
    if (c.scenario == "random_subres") {
        return {random_cocycle(c, order, true), 4, {}};
    }
    if (c.scenario == "random_full") {
        return {random_cocycle(c, order, false), 4, {}};
    }
    if (c.scenario == "inline") {
        try {
            return {cocycle_from_json(*c.inline_cocycle), 4, {}};
        } catch (const nlohmann::json::exception& ex) {
            throw ConfigError(std::string("inline cocycle: ") + ex.what());
        }
    }
    throw ConfigError("unknown scenario '" + c.scenario + "'");
}

namespace {

struct Pipeline {
    std::optional<OrbitCocycle> cocycle;
    std::optional<MonodromySpectrum> mono;
    std::vector<LyapunovFrame> frames;
    bool adapted = false;
    int order = 0;
    std::vector<Eigen::VectorXd> chart_points;
};

Json solve_key(const ScenarioConfig& c) {
    Json full = config_to_json(c);
    Json key;
    for (const char* k : {"scenario", "cocycle", "random", "epsilon", "resonance_tol", "order", "series_tol",
                          "max_series_terms", "lift", "transversal_weight", "seed"}) {
        if (full.contains(k)) {
            key[k] = full[k];
        }
    }
    key["cluster_tol"] = c.tol.cluster;
    key["tail_tol"] = c.tol.tail;
    return key;
}

SolverOptions solver_options(const ScenarioConfig& c, int order, LiftPolicy lift) {
    SolverOptions o;
    o.order = order;
    o.series_tol = c.series_tol;
    o.max_series_terms = c.max_series_terms;
    o.lift = lift;
    if (lift == LiftPolicy::custom_transversal) {
        o.transversal = skew_transversal(c.transversal_weight);
    }
    return o;
}

double max_n_part(const std::vector<PolyMap>& maps, const SubResStructure& structure) {
    double worst = 0.0;
    for (const auto& m : maps) {
        worst = std::max(worst, project_subresonance(m, structure).n_part.max_abs_coeff());
    }
    return worst;
}

std::vector<PolyMap> random_admissible_delta(const SolverContext& ctx, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-0.3, 0.3);
    const GradedSpace& space = ctx.cocycle().space();
    std::vector<PolyMap> out;
    for (int k = 0; k < ctx.points(); ++k) {
        PolyMap delta(space, space, ctx.order());
        for (int n = 2; n <= ctx.degree_bound(); ++n) {
            const Eigen::MatrixXd& mask = ctx.mask(n);
            Eigen::MatrixXd block = Eigen::MatrixXd::Zero(mask.rows(), mask.cols());
            for (Eigen::Index a = 0; a < mask.rows(); ++a) {
                for (Eigen::Index b = 0; b < mask.cols(); ++b) {
                    if (mask(a, b) == 0.0) {
                        block(a, b) = unit(rng);
                    }
                }
            }
            delta.set_homogeneous_block(n, block);
        }
        out.push_back(std::move(delta));
    }
    return out;
}

std::string residual_csv(const ResidualReport& r) {
    std::ostringstream out;
    out << "radius,max_residual,slope_cumulative\n";
    for (std::size_t i = 0; i < r.radii.size(); ++i) {
        out << fmt(r.radii[i]) << ',' << fmt(r.max_residual[i]) << ',';
        if (std::isfinite(r.slope_cumulative[i])) {
            out << fmt(r.slope_cumulative[i]);
        } else {
            out << "nan";
        }
        out << '\n';
    }
    return out.str();
}

} // namespace

RunOutcome run_scenario(const ScenarioConfig& config, Stage stage, std::ostream& diag) {
    RunOutcome outcome;
    Json report;
    report["stage"] = stage == Stage::full ? "run" : stage == Stage::spectrum_only ? "spectrum" : "verify";
    report["config"] = config_to_json(config);

    auto config_failure = [&](const std::string& msg) {
        diag << "configuration error: " << msg << "\n";
        report["error"] = msg;
        report["pass"] = false;
        outcome.exit_code = 2;
        outcome.report = report;
        return outcome;
    };

    // Stage 1: cocycle, spectrum, splitting, frames.
    Pipeline pipe;
    try {
        Scenario sc = build_scenario(config);
        pipe.order = config.order > 0 ? config.order : sc.default_order;
        pipe.chart_points = config.chart_points ? *config.chart_points : sc.chart_points;
        if (!sc.cocycle.periodic()) {
            throw ConfigError("the pipeline needs a periodic orbit");
        }
        for (const auto& y : pipe.chart_points) {
            if (y.size() != sc.cocycle.dim()) {
                throw ConfigError("chart point has the wrong dimension");
            }
        }
        pipe.cocycle = sc.cocycle;
        pipe.mono = monodromy_spectrum(*pipe.cocycle, config.epsilon, config.resonance_tol, config.tol.cluster);
        if (!is_block_aligned(pipe.mono->splitting, pipe.cocycle->space())) {
            pipe.cocycle = adapt_to_splitting(*pipe.cocycle, pipe.mono->splitting);
            pipe.mono = monodromy_spectrum(*pipe.cocycle, config.epsilon, config.resonance_tol, config.tol.cluster);
            pipe.adapted = true;
        }
        pipe.frames = lyapunov_frames(*pipe.cocycle, pipe.mono->spectrum, pipe.mono->splitting, config.tol.tail);
    } catch (const Error& e) {
        return config_failure(e.what());
    }
    const Spectrum& spectrum = pipe.mono->spectrum;
    const SubResStructure structure(spectrum);
    const OrbitCocycle& cocycle = *pipe.cocycle;

    Json spec_json = to_json(spectrum);
    spec_json["log_moduli"] = pipe.mono->log_moduli;
    report["spectrum"] = std::move(spec_json);
    report["structure"] = to_json(structure);
    report["adapted_coordinates"] = pipe.adapted;
    report["cocycle"] = to_json(cocycle);
    Json frames = Json::array();
    for (const auto& f : pipe.frames) {
        frames.push_back(to_json(f));
    }
    report["frames"] = std::move(frames);

    Json checks = Json::object();
    bool all_pass = true;
    auto record = [&](const std::string& name, Json body, bool pass) {
        body["pass"] = pass;
        checks[name] = std::move(body);
        if (!pass) {
            all_pass = false;
            outcome.failed_checks.push_back(name);
            diag << "check " << name << " FAILED\n";
        }
    };
    auto guarded = [&](const std::string& name, auto&& fn) {
        try {
            fn();
        } catch (const std::exception& e) {
            record(name, Json{{"error", e.what()}}, false);
        }
    };

    if (config.check_lyapunov) {
        guarded("lyapunov", [&] {
            const double sandwich = sandwich_check(cocycle, pipe.frames, spectrum, config.sandwich_trials,
                                                   config.sandwich_horizon, config.seed);
            const auto tempered = k_epsilon_growth_check(pipe.frames, spectrum.epsilon(), cocycle.length());
            Json body{{"sandwich_violation", sandwich},
                      {"k_epsilon_growth_violation", tempered.max_violation},
                      {"k_epsilon_growth_within_slack", tempered.pass}};
            record("lyapunov", std::move(body), sandwich <= config.tol.sandwich);
        });
    }

    auto finish = [&](const std::filesystem::path& name) {
        report["checks"] = checks;
        report["pass"] = all_pass;
        outcome.exit_code = all_pass ? 0 : 1;
        outcome.report = report;
        write_atomic(config.out_dir / name, dump(report));
        return outcome;
    };

    if (stage == Stage::spectrum_only) {
        return finish("spectrum.json");
    }

    // Stage 2: solve (or load the cached solution).
    std::optional<SolverContext> ctx;
    try {
        ctx.emplace(cocycle, spectrum, pipe.frames, solver_options(config, pipe.order, config.lift));
    } catch (const Error& e) {
        return config_failure(e.what());
    }
    const std::filesystem::path cache_path = config.out_dir / "result.json";
    NormalFormResult result;
    if (stage == Stage::verify_cached) {
        try {
            std::ifstream in(cache_path);
            if (!in) {
                throw MissingData("no cached result at " + cache_path.string());
            }
            const Json cache = Json::parse(in);
            if (cache.at("solve_key") != solve_key(config)) {
                throw MissingData("cached result was produced by a different configuration");
            }
            result = result_from_json(cache.at("result"));
            if (static_cast<int>(result.H.size()) != ctx->points() || result.order != ctx->order() ||
                !(result.H[0].source() == cocycle.space())) {
                throw MissingData("cached result does not match the scenario");
            }
        } catch (const nlohmann::json::exception& e) {
            return config_failure(std::string("cached result: ") + e.what());
        } catch (const Error& e) {
            return config_failure(e.what());
        }
    } else {
        try {
            const auto t0 = std::chrono::steady_clock::now();
            result = solve_normal_form(*ctx);
            const auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
            diag << "solve: order " << ctx->order() << ", " << ctx->points() << " point(s), " << ms << " ms\n";
        } catch (const Error& e) {
            record("solve", Json{{"error", e.what()}}, false);
            return finish("report.json");
        }
        Json cache;
        cache["solve_key"] = solve_key(config);
        cache["result"] = to_json(result);
        write_atomic(cache_path, dump(cache));
    }
    report["result"] = to_json(result);

    // Stage 3: checks.
    guarded("invariants", [&] {
        double h_low = 0.0;
        for (const auto& h : result.H) {
            h_low = std::max(h_low, h.constant().cwiseAbs().maxCoeff());
            h_low = std::max(h_low, (h.linear_part() - Eigen::MatrixXd::Identity(h.source().dim(), h.source().dim()))
                                        .cwiseAbs()
                                        .maxCoeff());
        }
        const double p_n = max_n_part(result.P, structure);
        double tail = 0.0;
        for (const auto& d : result.diagnostics) {
            tail = std::max(tail, d.tail_bound);
        }
        double defect = 0.0;
        for (double v : result.conjugacy_defect) {
            defect = std::max(defect, v);
        }
        Json body{{"h_low_degree_deviation", h_low},
                  {"p_n_part", p_n},
                  {"max_tail_bound", tail},
                  {"max_conjugacy_defect", defect}};
        record("invariants", std::move(body),
               h_low <= 1e-14 && p_n <= config.tol.p_n_part && tail < config.series_tol);
    });

    if (config.check_residual) {
        guarded("residual", [&] {
            const auto r = conjugacy_residual(result, *ctx, config.radii, config.residual_samples, config.seed,
                                              config.tol.exact_residual);
            write_atomic(config.out_dir / "residuals.csv", residual_csv(r));
            record("residual", to_json(r), r.pass);
        });
    }
    if (config.check_oracle) {
        guarded("oracle", [&] {
            const auto r = series_vs_direct(*ctx, result, config.tol.oracle);
            record("oracle", to_json(r), r.pass);
        });
    }
    if (config.check_gauge) {
        guarded("gauge", [&] {
            const LiftPolicy other = config.lift == LiftPolicy::orthogonal_complement ? LiftPolicy::custom_transversal
                                                                                       : LiftPolicy::orthogonal_complement;
            const SolverContext alt_ctx(cocycle, spectrum, {}, solver_options(config, pipe.order, other));
            const NormalFormResult alt = solve_normal_form(alt_ctx);
            const GaugeReport lift_cmp = gauge_compare(result, alt, structure, config.tol.gauge);
            Json body;
            body["alternate_lift"] = to_json(lift_cmp);
            body["alternate_lift"].erase("G");
            bool pass = lift_cmp.pass;
            double h_diff = 0.0;
            for (std::size_t k = 0; k < result.H.size(); ++k) {
                h_diff = std::max(h_diff, (result.H[k] - alt.H[k]).max_abs_coeff());
            }
            body["alternate_lift_h_difference"] = h_diff;
            if (ctx->degree_bound() == 1) {
                pass = pass && h_diff <= config.tol.lift_identity;
            } else {
                const auto delta = random_admissible_delta(*ctx, config.seed + 7);
                const NormalFormResult perturbed = apply_gauge(*ctx, result, delta);
                const GaugeReport g = gauge_compare(result, perturbed, structure, config.tol.gauge);
                double recovered = 0.0;
                for (std::size_t k = 0; k < delta.size(); ++k) {
                    const PolyMap expect = PolyMap::identity(cocycle.space(), result.order) + delta[k];
                    recovered = std::max(recovered, (g.G[k] - expect).max_abs_coeff());
                }
                double defect = 0.0;
                for (double v : perturbed.conjugacy_defect) {
                    defect = std::max(defect, v);
                }
                const double p_n = max_n_part(perturbed.P, structure);
                body["perturbation"] = Json{{"recovery_error", recovered},
                                            {"n_part_violation", g.n_part_violation},
                                            {"perturbed_p_n_part", p_n},
                                            {"perturbed_conjugacy_defect", defect}};
                pass = pass && g.pass && recovered <= config.tol.gauge && p_n <= config.tol.gauge &&
                       defect <= config.tol.gauge;
            }
            record("gauge", std::move(body), pass);
        });
    }
    if (config.check_centralizer) {
        guarded("centralizer", [&] {
            Json body;
            bool pass = true;
            for (int power : {2, 3}) {
                const auto g = iterate_cocycle(cocycle, power, result.order);
                const auto r = centralizer_check(result, *ctx, g, power, true, config.tol.centralizer,
                                                 config.tol.commute);
                body["F^" + std::to_string(power)] = to_json(r);
                pass = pass && r.pass;
            }
            record("centralizer", std::move(body), pass);
        });
    }
    if (config.check_flag) {
        guarded("flag", [&] {
            double worst = 0.0;
            for (std::size_t k = 0; k < result.P.size(); ++k) {
                worst = std::max(worst, flag_invariance(result.P[k], config.flag_samples, config.seed + k));
            }
            Json body{{"max_below_flag", worst}};
            bool pass = worst <= config.tol.flag;
            const GradedSpace& space = cocycle.space();
            if (space.blocks() >= 2) {
                PolyMap injected = result.P[0].with_order(std::max(result.P[0].order(), 2));
                MultiIndex alpha(static_cast<std::size_t>(space.dim()), 0);
                alpha[0] = 2;
                const int target = space.block_offset(space.blocks() - 1);
                injected.set_coeff(target, alpha, injected.coeff(target, alpha) + 0.1);
                const double seen = flag_invariance(injected, config.flag_samples, config.seed);
                body["injected_violation"] = seen;
                body["injected_detected"] = seen > 10.0 * config.tol.flag;
                pass = pass && seen > 10.0 * config.tol.flag;
            }
            record("flag", std::move(body), pass);
        });
    }
    if (config.check_chart && !pipe.chart_points.empty()) {
        guarded("chart", [&] {
            Json body = Json::array();
            bool pass = true;
            ChartOptions opts;
            opts.internal_order = std::max(config.chart_internal_order, pipe.order);
            opts.check_degree = pipe.order;
            opts.tol = config.tol.chart;
            for (const auto& y : pipe.chart_points) {
                Json entry;
                entry["y"] = std::vector<double>(y.data(), y.data() + y.size());
                try {
                    const auto r = chart_consistency(*ctx, y, opts);
                    entry["report"] = to_json(r);
                    pass = pass && r.pass;
                } catch (const Error& e) {
                    entry["error"] = e.what();
                    pass = false;
                }
                body.push_back(std::move(entry));
            }
            record("chart", Json{{"points", std::move(body)}}, pass);
        });
    }
    return finish("report.json");
}

} // namespace subres
