#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "subres/cocycle.hpp"
#include "subres/grading.hpp"
#include "subres/normalform.hpp"
#include "subres/polymap.hpp"

namespace subres {

struct ResidualReport {
    /// Strictly decreasing.
    std::vector<double> radii;
    std::vector<double> max_residual;
    /// Least-squares log-log slope over radii[0..j].
    std::vector<double> slope_cumulative;
    double slope = 0.0;
    bool exact = false;
    bool pass = false;
};

inline constexpr double kExactResidualTol = 1e-12;

/// max |H_{next}(F_k(t)) - P_k(H_k(t))| over sampled |t| = r and orbit points.
/// Passes when the slope is at least M + 0.9, or every residual is below
/// `exact_tol` (conjugacy exact at this truncation).
ResidualReport conjugacy_residual(const NormalFormResult& result, const SolverContext& ctx,
                                  const std::vector<double>& radii, int samples_per_radius,
                                  std::uint64_t seed = 1, double exact_tol = kExactResidualTol);

/// Degree-n N-part of H at every orbit point from the stacked one-period
/// linear system R_k = mask(Phi_k(R_{k+1})) + Qbar_k, using the lower
/// degrees of `partial`. The source terms are expanded independently of
/// the solver's composition code. Throws SingularSystem.
std::vector<PolyMap> direct_solve_oracle(const SolverContext& ctx, int n, const PartialSolution& partial);

struct OracleReport {
    /// Per degree 2..M: max |series - direct| over points and N-coefficients.
    std::vector<double> per_degree;
    double max_difference = 0.0;
    bool pass = false;
};

/// Runs direct_solve_oracle for every degree of `result` and compares.
OracleReport series_vs_direct(const SolverContext& ctx, const NormalFormResult& result, double tol = 1e-10);

struct GaugeReport {
    /// G_k = H_alt,k o H_ref,k^{-1}, order M.
    std::vector<PolyMap> G;
    /// Max N-part coefficient of G (all degrees > d count as N-part).
    double n_part_violation = 0.0;
    /// Max coefficient of G of degree above d.
    double high_degree = 0.0;
    /// Max |G - Id| coefficient.
    double identity_deviation = 0.0;
    int degree_bound = 0;
    bool pass = false;
};

/// Compares two normal-form charts of the same extension.
GaugeReport gauge_compare(const NormalFormResult& result, const NormalFormResult& result_alt,
                          const SubResStructure& structure, double tol = 1e-9);

/// (Id + Delta_k) o H_k and the matching normal form
/// (Id + Delta_{k+1}) o P_k o (Id + Delta_k)^{-1} truncated to d.
NormalFormResult apply_gauge(const SolverContext& ctx, const NormalFormResult& result,
                             const std::vector<PolyMap>& delta);

struct CentralizerReport {
    /// Max coefficient of G_{k+1} o F_k - F_{k+s} o G_k.
    double commutation_residual = 0.0;
    /// Max N-part coefficient of H_{k+s} o G_k o H_k^{-1}.
    double n_part_violation = 0.0;
    double high_degree = 0.0;
    /// |linear part - D_0 G_k| and its below-flag entries.
    double linear_mismatch = 0.0;
    double flag_violation = 0.0;
    /// Max |H G H^{-1} - P_{k+s-1} o ... o P_k| when `shift` iterates of F were supplied.
    double iterate_mismatch = 0.0;
    std::vector<PolyMap> conjugated;
    bool pass = false;
};

/// G_k = F_{k+s-1} o ... o F_k, truncated to `order`.
std::vector<PolyMap> iterate_cocycle(const OrbitCocycle& cocycle, int power, int order);

/// Normal-form conjugates of a commuting extension G_k : fiber k -> fiber k+shift.
/// Throws NonCommuting when G does not commute with F within `commute_tol`.
/// With `compare_iterate` the conjugates are also compared to the iterated P.
CentralizerReport centralizer_check(const NormalFormResult& result, const SolverContext& ctx,
                                    const std::vector<PolyMap>& commuting, int shift, bool compare_iterate,
                                    double tol = 1e-9, double commute_tol = 1e-10);

/// Max |DP(y)_{rc}| over blocks with block(c) < block(r), y uniform in the unit ball.
double flag_invariance(const PolyMap& P, int samples, std::uint64_t seed = 1);

struct ChartOptions {
    /// Working order of the base and recentered solves; degrees above
    /// `check_degree` are dropped from the report.
    int internal_order = 16;
    int check_degree = 6;
    double tol = 1e-7;
    /// The orbit of y is followed until |y_W| falls below this.
    double settle_tol = 1e-16;
    int max_window = 20000;
};

struct ChartReport {
    /// w -> H_y(B_0^{-1}(H_x^{-1}(H_x(y) + w) - y)), truncated to check_degree.
    PolyMap transition;
    double high_degree = 0.0;
    double n_part_violation = 0.0;
    int window = 0;
    bool pass = false;
};

/// Normal-form chart around y (fiber of point 0) against the base chart.
/// Throws OutsideConvergenceBall when the orbit of y does not settle.
ChartReport chart_consistency(const SolverContext& ctx, const Eigen::VectorXd& y, const ChartOptions& options = {});

} // namespace subres
