#pragma once

#include <cmath>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "subres/cocycle.hpp"
#include "subres/normalform.hpp"
#include "subres/polymap.hpp"
#include "subres/scenario.hpp"

namespace testing {

using namespace subres;

inline Eigen::VectorXd vec(std::initializer_list<double> v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) {
        out(i++) = x;
    }
    return out;
}

inline Eigen::MatrixXd diag(std::initializer_list<double> v) {
    return vec(v).asDiagonal();
}

/// Spectrum, adaptation and frames, as the runner does them.
struct Prepared {
    OrbitCocycle cocycle;
    MonodromySpectrum mono;
    std::vector<LyapunovFrame> frames;
};

inline Prepared prepare(OrbitCocycle cocycle, double epsilon = 0.01) {
    MonodromySpectrum mono = monodromy_spectrum(cocycle, epsilon);
    if (!is_block_aligned(mono.splitting, cocycle.space())) {
        cocycle = adapt_to_splitting(cocycle, mono.splitting);
        mono = monodromy_spectrum(cocycle, epsilon);
    }
    auto frames = lyapunov_frames(cocycle, mono.spectrum, mono.splitting);
    return {std::move(cocycle), std::move(mono), std::move(frames)};
}

inline SolverOptions options(int order, LiftPolicy lift = LiftPolicy::orthogonal_complement, double weight = 0.25) {
    SolverOptions o;
    o.order = order;
    o.lift = lift;
    if (lift == LiftPolicy::custom_transversal) {
        o.transversal = skew_transversal(weight);
    }
    return o;
}

inline SolverContext context(const OrbitCocycle& cocycle, int order, double epsilon = 0.01,
                             LiftPolicy lift = LiftPolicy::orthogonal_complement) {
    Prepared p = prepare(cocycle, epsilon);
    return SolverContext(p.cocycle, p.mono.spectrum, p.frames, options(order, lift));
}

inline OrbitCocycle builtin(const std::string& name, std::uint64_t seed = 1, int order = 0,
                            std::optional<RandomSpec> spec = std::nullopt) {
    ScenarioConfig c;
    c.scenario = name;
    c.seed = seed;
    c.order = order;
    if (spec) {
        c.random = *spec;
    }
    return build_scenario(c).cocycle;
}

inline int builtin_order(const std::string& name) {
    ScenarioConfig c;
    c.scenario = name;
    return build_scenario(c).default_order;
}

inline OrbitCocycle koenigs() { return builtin("koenigs"); }
inline OrbitCocycle resonant2() { return builtin("resonant2"); }
inline OrbitCocycle nonresonant2() { return builtin("nonresonant2"); }

inline double max_abs_diff(const std::vector<PolyMap>& a, const std::vector<PolyMap>& b) {
    double worst = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        worst = std::max(worst, (a[k] - b[k]).max_abs_coeff());
    }
    return worst;
}

/// Random map with coefficients uniform in [-scale, scale] on degrees lo..hi.
inline PolyMap random_map(const GradedSpace& space, int order, int lo, int hi, double scale, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-scale, scale);
    PolyMap p(space, space, order);
    for (std::size_t k = 1; k < p.basis().size(); ++k) {
        const int deg = p.basis().degree(k);
        if (deg < lo || deg > hi) {
            continue;
        }
        for (int r = 0; r < space.dim(); ++r) {
            p.coefficients()(r, static_cast<Eigen::Index>(k)) = u(rng);
        }
    }
    return p;
}

} // namespace testing
