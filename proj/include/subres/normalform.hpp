#pragma once

#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "subres/cocycle.hpp"
#include "subres/grading.hpp"
#include "subres/lyapunov_frame.hpp"
#include "subres/polymap.hpp"

namespace subres {

enum class LiftPolicy {
    /// Lift with zero S-part (orthogonal complement under the monomial inner product).
    orthogonal_complement,
    /// Lift along a user-supplied transversal: H = Hbar + T(Hbar), T into S.
    custom_transversal,
};

/// Maps a degree-n N-part coefficient block at `point` to the S-part added
/// by the lift. Entries on non sub-resonance monomials are ignored.
using Transversal = std::function<Eigen::MatrixXd(const Eigen::MatrixXd& n_block, int point, int degree)>;

/// A deterministic transversal mixing each N-block into the S-monomials with
/// weight `weight` times the sum of the N-coefficients of the same target row.
Transversal skew_transversal(double weight);

inline constexpr double kDefaultSeriesTol = 1e-15;
inline constexpr int kDefaultMaxSeriesTerms = 10000;

struct SolverOptions {
    int order = 2;
    double series_tol = kDefaultSeriesTol;
    int max_series_terms = kDefaultMaxSeriesTerms;
    LiftPolicy lift = LiftPolicy::orthogonal_complement;
    Transversal transversal;
};

/// Everything the per-degree solver needs; validated once and immutable.
///
/// Periodic cocycles are solved by the forward fixed-point series. A
/// non-periodic window of length W is solved backwards from `terminal`, the
/// coordinate change at point W (typically the base-orbit solution the window
/// settles onto).
class SolverContext {
public:
    SolverContext(OrbitCocycle cocycle, Spectrum spectrum, std::vector<LyapunovFrame> frames,
                  SolverOptions options, std::optional<PolyMap> terminal = std::nullopt);

    const OrbitCocycle& cocycle() const noexcept { return cocycle_; }
    const Spectrum& spectrum() const noexcept { return spectrum_; }
    const SubResStructure& structure() const noexcept { return structure_; }
    const std::vector<LyapunovFrame>& frames() const noexcept { return frames_; }
    const SolverOptions& options() const noexcept { return options_; }
    const std::optional<PolyMap>& terminal() const noexcept { return terminal_; }

    int order() const noexcept { return options_.order; }
    int degree_bound() const noexcept { return structure_.degree_bound(); }
    int points() const noexcept { return cocycle_.length(); }
    /// Number of H slots: K for periodic orbits, W+1 for windows.
    int h_points() const noexcept { return cocycle_.periodic() ? points() : points() + 1; }
    /// H slot following point k.
    int next(int k) const noexcept { return cocycle_.periodic() ? (k + 1) % points() : k + 1; }

    /// 1 on non sub-resonance monomials of degree n.
    const Eigen::MatrixXd& mask(int n) const { return masks_.at(static_cast<std::size_t>(n)); }
    /// S with R o A_k = R S^T on degree-n blocks.
    const Eigen::MatrixXd& substitution(int point, int n) const;

private:
    OrbitCocycle cocycle_;
    Spectrum spectrum_;
    SubResStructure structure_;
    std::vector<LyapunovFrame> frames_;
    SolverOptions options_;
    std::optional<PolyMap> terminal_;
    std::vector<Eigen::MatrixXd> masks_;
    std::vector<std::vector<Eigen::MatrixXd>> substitutions_;
};

struct DegreeDiagnostics {
    int degree = 0;
    int series_terms = 0;
    double final_term_norm = 0.0;
    double final_term_lyapunov_norm = 0.0;
    double tail_bound = 0.0;
    double period_ratio = 0.0;
    bool full_space = false;
};

struct NormalFormResult {
    int order = 0;
    int degree_bound = 0;
    /// Per point: coordinate change, order M, H(0) = 0, DH(0) = Id.
    std::vector<PolyMap> H;
    /// Per point: sub-resonance normal form, order max(d, 1).
    std::vector<PolyMap> P;
    std::vector<DegreeDiagnostics> diagnostics;
    /// Per point: max |coeff| of H_{fx} o F_x - P_x o H_x through degree M.
    std::vector<double> conjugacy_defect;
};

/// Lower-degree data consumed by the degree-n step.
struct PartialSolution {
    std::vector<PolyMap> H;
    std::vector<PolyMap> P;
    int solved_through = 1;

    /// Degree-one start: H = Id, P = F (plus the window terminal, if any).
    static PartialSolution start(const SolverContext& ctx);
    /// Truncate a finished result to degrees <= degree.
    static PartialSolution from_result(const SolverContext& ctx, const NormalFormResult& result, int degree);
};

/// Q_x = F_x^{-1}(F^(n)_x + degree-n cross terms of H_{fx} o F_x minus those
/// of P_x o H_x), one homogeneous map per orbit point.
std::vector<PolyMap> assemble_Q(const SolverContext& ctx, int n, const PartialSolution& partial);

/// Phi_x(R) = F_x^{-1} o R o F_x for R homogeneous at the next point.
PolyMap twisted_transfer(const SolverContext& ctx, const PolyMap& r, int point);

/// Solves degree n in place (writes H^(n), P^(n) into `partial`).
DegreeDiagnostics solve_homogeneous_degree(const SolverContext& ctx, int n, PartialSolution& partial);

/// Degrees 2..M; returns H (order M), P (order d) and diagnostics.
NormalFormResult solve_normal_form(const SolverContext& ctx);

/// Coefficient-wise max of H_{next} o F_k - P_k o H_k through `order`.
double conjugacy_defect(const PolyMap& h_next, const PolyMap& f, const PolyMap& p, const PolyMap& h, int order);

} // namespace subres
