#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "subres/grading.hpp"
#include "subres/lyapunov_frame.hpp"
#include "subres/polymap.hpp"

namespace subres {

/// Fiber maps F_0..F_{K-1} along a finite or periodic orbit; F_k maps the
/// fiber at point k to the fiber at point k+1 (mod K when periodic).
class OrbitCocycle {
public:
    OrbitCocycle(GradedSpace space, std::vector<PolyMap> maps, bool periodic);

    int length() const noexcept { return static_cast<int>(maps_.size()); }
    bool periodic() const noexcept { return periodic_; }
    const GradedSpace& space() const noexcept { return space_; }
    int dim() const noexcept { return space_.dim(); }
    const std::vector<PolyMap>& maps() const noexcept { return maps_; }
    const PolyMap& map(int k) const { return maps_.at(static_cast<std::size_t>(wrap(k))); }
    const Eigen::MatrixXd& linear(int k) const { return linear_.at(static_cast<std::size_t>(wrap(k))); }
    const Eigen::MatrixXd& linear_inverse(int k) const { return linear_inv_.at(static_cast<std::size_t>(wrap(k))); }

    /// Point index arithmetic; wraps for periodic orbits, range-checked otherwise.
    int wrap(int k) const;
    /// Highest polynomial order among the fiber maps.
    int max_order() const;

    /// Linear part of F^n at point `start`; negative n uses inverses.
    Eigen::MatrixXd linear_power(int start, int n) const;
    /// Period monodromy A_{start+K-1} ... A_start (periodic only).
    Eigen::MatrixXd monodromy(int start = 0) const;

private:
    GradedSpace space_;
    std::vector<PolyMap> maps_;
    bool periodic_;
    std::vector<Eigen::MatrixXd> linear_;
    std::vector<Eigen::MatrixXd> linear_inv_;
};

/// Oseledets splitting along a periodic orbit: per point an m x m basis whose
/// grouped columns span the blocks (orthonormal within each block).
struct Splitting {
    std::vector<int> block_dims;
    std::vector<Eigen::MatrixXd> bases;
};

struct MonodromySpectrum {
    Spectrum spectrum;
    Splitting splitting;
    /// log|mu| / K for every monodromy eigenvalue, ascending.
    std::vector<double> log_moduli;
};

inline constexpr double kDefaultClusterTol = 1e-6;

/// Exponents and splitting of a periodic cocycle from the period monodromy.
MonodromySpectrum monodromy_spectrum(const OrbitCocycle& cocycle, double epsilon,
                                     double resonance_tol = kDefaultResonanceTol,
                                     double cluster_tol = kDefaultClusterTol);

/// Finite-time exponent estimates (ascending, with multiplicity) by
/// repeated QR re-orthogonalization.
std::vector<double> finite_time_exponents(const OrbitCocycle& cocycle, int horizon);

/// True when every block of the splitting lies in the matching coordinate block.
bool is_block_aligned(const Splitting& splitting, const GradedSpace& space, double tol = 1e-10);

/// Cocycle in splitting-adapted coordinates: B_{k+1}^{-1} o F_k o B_k.
OrbitCocycle adapt_to_splitting(const OrbitCocycle& cocycle, const Splitting& splitting);

inline constexpr double kDefaultTailTol = 1e-12;

/// Epsilon-Lyapunov frames at every orbit point from the truncated
/// two-sided series, with a certified tail below `tail_tol`.
std::vector<LyapunovFrame> lyapunov_frames(const OrbitCocycle& cocycle, const Spectrum& spectrum,
                                           const Splitting& splitting, double tail_tol = kDefaultTailTol);

/// Max relative violation of e^{n chi_i -+ eps|n|} |u| <= |F^n u| over random
/// block vectors and |n| <= horizon, measured in the Lyapunov norms.
double sandwich_check(const OrbitCocycle& cocycle, const std::vector<LyapunovFrame>& frames,
                      const Spectrum& spectrum, int trials, int horizon, std::uint64_t seed = 1);

struct TemperedReport {
    double max_violation = 0.0;
    bool pass = true;
};

/// K(x) e^{-eps|n|} <= K(f^n x) <= K(x) e^{eps|n|} for 1 <= n <= horizon.
TemperedReport k_epsilon_growth_check(const std::vector<LyapunovFrame>& frames, double epsilon, int horizon);

} // namespace subres
