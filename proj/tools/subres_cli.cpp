#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "subres/errors.hpp"
#include "subres/scenario.hpp"

namespace {

int run_stage(const std::string& config_path, subres::Stage stage, const std::optional<std::uint64_t>& seed,
              const std::optional<std::string>& out_dir, const std::vector<std::string>& overrides) {
    subres::ScenarioConfig config;
    try {
        config = subres::load_config(config_path);
        if (seed) {
            config.seed = *seed;
        }
        if (out_dir) {
            config.out_dir = *out_dir;
        }
        for (const auto& o : overrides) {
            subres::apply_override(config, o);
        }
    } catch (const subres::Error& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    }
    try {
        const auto outcome = subres::run_scenario(config, stage, std::cerr);
        if (outcome.exit_code == 0) {
            std::cerr << "all checks passed; reports in " << config.out_dir.string() << "\n";
        } else if (outcome.exit_code == 1) {
            std::cerr << "failed checks:";
            for (const auto& name : outcome.failed_checks) {
                std::cerr << " " << name;
            }
            std::cerr << "\n";
        }
        return outcome.exit_code;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sub-resonance normal forms along periodic orbits"};
    app.require_subcommand(1);
    app.fallthrough();

    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::vector<std::string> overrides;
    app.add_option("--seed", seed, "RNG seed (overrides the config)");
    app.add_option("--out-dir", out_dir, "Output directory (overrides the config)");
    app.add_option("--tol-override", overrides, "Tolerance override key=value (repeatable)");

    std::string config_path;
    auto* run = app.add_subcommand("run", "Solve and verify a scenario");
    run->add_option("config", config_path, "Scenario config (JSON)")->required();
    auto* spectrum = app.add_subcommand("spectrum", "Stop after the Lyapunov stage");
    spectrum->add_option("config", config_path, "Scenario config (JSON)")->required();
    auto* verify = app.add_subcommand("verify", "Re-run the checks on the cached result");
    verify->add_option("config", config_path, "Scenario config (JSON)")->required();
    auto* list = app.add_subcommand("list", "List builtin scenarios");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (list->parsed()) {
        for (const auto& b : subres::list_builtins()) {
            std::cout << b.name << "\t" << b.description << "\n";
        }
        return 0;
    }
    if (run->parsed()) {
        return run_stage(config_path, subres::Stage::full, seed, out_dir, overrides);
    }
    if (spectrum->parsed()) {
        return run_stage(config_path, subres::Stage::spectrum_only, seed, out_dir, overrides);
    }
    return run_stage(config_path, subres::Stage::verify_cached, seed, out_dir, overrides);
}
