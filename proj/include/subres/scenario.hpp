#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "subres/cocycle.hpp"
#include "subres/errors.hpp"
#include "subres/normalform.hpp"
#include "subres/serialize.hpp"

namespace subres {

/// Raised for malformed or inconsistent scenario configurations (exit code 2).
class ConfigError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

struct Tolerances {
    double exact_residual = kExactResidualTol;
    double oracle = 1e-10;
    double gauge = 1e-9;
    double lift_identity = 1e-12;
    double centralizer = 1e-9;
    double commute = 1e-10;
    double flag = 1e-12;
    double chart = 1e-7;
    double sandwich = 1e-6;
    double p_n_part = 1e-12;
    double tail = kDefaultTailTol;
    double cluster = kDefaultClusterTol;
};

struct RandomSpec {
    int points = 2;
    int dim = 3;
    int blocks = 2;
    /// Highest degree of the random nonlinear terms.
    int degree = 3;
    double coefficient_scale = 0.3;
};

struct ScenarioConfig {
    std::string scenario = "koenigs";
    /// Inline cocycle (same layout as the cocycle report) when scenario == "inline".
    std::optional<Json> inline_cocycle;
    RandomSpec random;

    double epsilon = 0.01;
    double resonance_tol = kDefaultResonanceTol;
    /// 0 selects the scenario default.
    int order = 0;
    double series_tol = kDefaultSeriesTol;
    int max_series_terms = kDefaultMaxSeriesTerms;
    LiftPolicy lift = LiftPolicy::orthogonal_complement;
    double transversal_weight = 0.25;

    bool check_residual = true;
    std::vector<double> radii{1e-1, 3e-2, 1e-2};
    int residual_samples = 64;
    bool check_oracle = true;
    bool check_gauge = true;
    bool check_centralizer = true;
    bool check_flag = true;
    int flag_samples = 100;
    bool check_lyapunov = true;
    int sandwich_trials = 20;
    int sandwich_horizon = 12;
    bool check_chart = true;
    /// Empty selects the scenario default points.
    std::optional<std::vector<Eigen::VectorXd>> chart_points;
    int chart_internal_order = 16;

    Tolerances tol;
    std::uint64_t seed = 1;
    std::filesystem::path out_dir = "out";
};

ScenarioConfig parse_config(const Json& j);
ScenarioConfig load_config(const std::filesystem::path& path);
Json config_to_json(const ScenarioConfig& config);
/// key=value; keys are the Tolerances fields plus epsilon, resonance_tol,
/// series_tol and max_series_terms.
void apply_override(ScenarioConfig& config, const std::string& assignment);

struct BuiltinInfo {
    std::string name;
    std::string description;
};

std::vector<BuiltinInfo> list_builtins();

struct Scenario {
    OrbitCocycle cocycle;
    int default_order = 4;
    std::vector<Eigen::VectorXd> chart_points;
};

/// Cocycle and defaults for the configured scenario (random ones drawn from the seed).
Scenario build_scenario(const ScenarioConfig& config);

enum class Stage {
    full,
    spectrum_only,
    verify_cached,
};

struct RunOutcome {
    int exit_code = 0;
    std::vector<std::string> failed_checks;
    Json report;
};

/// Runs the pipeline and writes the report files into config.out_dir.
/// Exit code 0 when every enabled check passes, 1 on a failed check,
/// 2 on configuration errors. Diagnostics go to `diag`.
RunOutcome run_scenario(const ScenarioConfig& config, Stage stage, std::ostream& diag);

} // namespace subres
