#include "subres/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <random>
#include <sstream>

#include "subres/errors.hpp"

namespace subres {

namespace {

double least_squares_slope(const std::vector<double>& x, const std::vector<double>& y, std::size_t count) {
    if (count < 2) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(count);
    my /= static_cast<double>(count);
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxy / sxx;
}

std::vector<Eigen::VectorXd> sphere_samples(int dim, int samples, double radius, std::mt19937_64& rng) {
    std::vector<Eigen::VectorXd> out;
    if (dim == 1) {
        out.push_back(Eigen::VectorXd::Constant(1, radius));
        out.push_back(Eigen::VectorXd::Constant(1, -radius));
        return out;
    }
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int s = 0; s < samples; ++s) {
        Eigen::VectorXd v(dim);
        for (int i = 0; i < dim; ++i) {
            v(i) = gauss(rng);
        }
        out.push_back(radius * v / v.norm());
    }
    return out;
}

// Sparse polynomials kept deliberately separate from the dense basis code.
using Sparse = std::map<MultiIndex, double>;

Sparse sparse_mul(const Sparse& a, const Sparse& b, int max_degree) {
    Sparse out;
    for (const auto& [ea, ca] : a) {
        int da = 0;
        for (int e : ea) {
            da += e;
        }
        for (const auto& [eb, cb] : b) {
            int db = 0;
            for (int e : eb) {
                db += e;
            }
            if (da + db > max_degree) {
                continue;
            }
            MultiIndex e(ea.size());
            for (std::size_t i = 0; i < ea.size(); ++i) {
                e[i] = ea[i] + eb[i];
            }
            out[e] += ca * cb;
        }
    }
    return out;
}

std::vector<Sparse> to_sparse(const PolyMap& map, int lo, int hi) {
    std::vector<Sparse> out(static_cast<std::size_t>(map.target().dim()));
    const MonomialBasis& basis = map.basis();
    for (std::size_t k = 0; k < basis.size(); ++k) {
        const int deg = basis.degree(k);
        if (deg < lo || deg > hi) {
            continue;
        }
        const auto e = basis.exponents(k);
        for (int r = 0; r < map.target().dim(); ++r) {
            const double c = map.coefficients()(r, static_cast<Eigen::Index>(k));
            if (c != 0.0) {
                out[static_cast<std::size_t>(r)][MultiIndex(e.begin(), e.end())] += c;
            }
        }
    }
    return out;
}

std::vector<Sparse> sparse_compose(const std::vector<Sparse>& outer, const std::vector<Sparse>& inner, int dim,
                                   int max_degree) {
    const Sparse one{{MultiIndex(static_cast<std::size_t>(dim), 0), 1.0}};
    std::vector<std::vector<Sparse>> powers(inner.size(), std::vector<Sparse>{one});
    auto power = [&](std::size_t v, int e) -> const Sparse& {
        auto& list = powers[v];
        while (static_cast<int>(list.size()) <= e) {
            list.push_back(sparse_mul(list.back(), inner[v], max_degree));
        }
        return list[static_cast<std::size_t>(e)];
    };
    std::vector<Sparse> out(outer.size());
    for (std::size_t r = 0; r < outer.size(); ++r) {
        for (const auto& [alpha, c] : outer[r]) {
            Sparse term{{MultiIndex(static_cast<std::size_t>(dim), 0), c}};
            for (std::size_t v = 0; v < alpha.size(); ++v) {
                if (alpha[v] > 0) {
                    term = sparse_mul(term, power(v, alpha[v]), max_degree);
                }
            }
            for (const auto& [e, value] : term) {
                out[r][e] += value;
            }
        }
    }
    return out;
}

Eigen::MatrixXd degree_block(const std::vector<Sparse>& poly, int dim, int n) {
    const auto comps = compositions(dim, n);
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(poly.size()),
                                                static_cast<Eigen::Index>(comps.size()));
    for (std::size_t r = 0; r < poly.size(); ++r) {
        for (std::size_t j = 0; j < comps.size(); ++j) {
            auto it = poly[r].find(comps[j]);
            if (it != poly[r].end()) {
                out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = it->second;
            }
        }
    }
    return out;
}

// T(j, i) = coefficient of monomial i in (L t)^{alpha_j}.
Eigen::MatrixXd linear_substitution(const Eigen::MatrixXd& L, int n) {
    const int dim = static_cast<int>(L.rows());
    std::vector<Sparse> lin(static_cast<std::size_t>(dim));
    for (int r = 0; r < dim; ++r) {
        for (int c = 0; c < dim; ++c) {
            if (L(r, c) != 0.0) {
                MultiIndex e(static_cast<std::size_t>(dim), 0);
                e[static_cast<std::size_t>(c)] = 1;
                lin[static_cast<std::size_t>(r)][e] = L(r, c);
            }
        }
    }
    const auto comps = compositions(dim, n);
    std::vector<Sparse> monomials(comps.size());
    for (std::size_t j = 0; j < comps.size(); ++j) {
        monomials[j][comps[j]] = 1.0;
    }
    const auto expanded = sparse_compose(monomials, lin, dim, n);
    return degree_block(expanded, dim, n);
}

Eigen::MatrixXd independent_mask(const Spectrum& spectrum, const GradedSpace& space, int n) {
    const auto comps = compositions(space.dim(), n);
    Eigen::MatrixXd mask(space.dim(), static_cast<Eigen::Index>(comps.size()));
    for (std::size_t j = 0; j < comps.size(); ++j) {
        HomogeneousType type;
        type.s.assign(static_cast<std::size_t>(space.blocks()), 0);
        for (int v = 0; v < space.dim(); ++v) {
            type.s[static_cast<std::size_t>(space.block_of(v))] += comps[j][static_cast<std::size_t>(v)];
        }
        for (int r = 0; r < space.dim(); ++r) {
            type.block = space.block_of(r);
            mask(r, static_cast<Eigen::Index>(j)) = spectrum.admissible(type) ? 0.0 : 1.0;
        }
    }
    return mask;
}

PolyMap translation(const GradedSpace& space, const Eigen::VectorXd& shift) {
    PolyMap t = PolyMap::identity(space, 1);
    t.coefficients().col(0) = shift;
    return t;
}

void require_periodic(const SolverContext& ctx, const char* what) {
    if (!ctx.cocycle().periodic()) {
        throw ValidationError(std::string(what) + " needs a periodic cocycle");
    }
}

} // namespace

ResidualReport conjugacy_residual(const NormalFormResult& result, const SolverContext& ctx,
                                  const std::vector<double>& radii, int samples_per_radius, std::uint64_t seed,
                                  double exact_tol) {
    if (radii.empty()) {
        throw ValidationError("conjugacy_residual: no radii");
    }
    for (std::size_t i = 0; i < radii.size(); ++i) {
        if (!(radii[i] > 0.0) || (i > 0 && !(radii[i] < radii[i - 1]))) {
            throw ValidationError("conjugacy_residual: radii must be positive and strictly decreasing");
        }
    }
    if (samples_per_radius < 1) {
        throw ValidationError("conjugacy_residual: samples_per_radius must be positive");
    }
    ResidualReport report;
    report.radii = radii;
    std::mt19937_64 rng(seed);
    const int K = ctx.points();

    // The residual map is itself a polynomial; expanding it exactly keeps the
    // small-radius values clear of cancellation in H(F(t)) - P(H(t)).
    std::vector<std::optional<PolyMap>> residual_maps(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
        const PolyMap& f = ctx.cocycle().map(k);
        const PolyMap& h = result.H.at(static_cast<std::size_t>(k));
        const PolyMap& p = result.P.at(static_cast<std::size_t>(k));
        const PolyMap& h_next = result.H.at(static_cast<std::size_t>(ctx.next(k) % K));
        const int full = std::max(std::max(1, h_next.max_degree()) * std::max(1, f.max_degree()),
                                  std::max(1, p.max_degree()) * std::max(1, h.max_degree()));
        try {
            residual_maps[static_cast<std::size_t>(k)] =
                compose_truncated(h_next, f, full) - compose_truncated(p, h, full);
        } catch (const std::length_error&) {
            // Too many monomials for an exact expansion; evaluate directly.
        }
    }
    // One direction set for every radius, so the fitted slope is not polluted
    // by sampling noise between radii.
    const auto directions = sphere_samples(ctx.cocycle().dim(), samples_per_radius, 1.0, rng);
    for (double r : radii) {
        double worst = 0.0;
        for (const auto& u : directions) {
            const Eigen::VectorXd t = r * u;
            for (int k = 0; k < K; ++k) {
                const auto& exact = residual_maps[static_cast<std::size_t>(k)];
                if (exact) {
                    worst = std::max(worst, exact->evaluate(t).norm());
                    continue;
                }
                const PolyMap& h_next = result.H.at(static_cast<std::size_t>(ctx.next(k) % K));
                const Eigen::VectorXd lhs = h_next.evaluate(ctx.cocycle().map(k).evaluate(t));
                const Eigen::VectorXd rhs =
                    result.P.at(static_cast<std::size_t>(k)).evaluate(result.H.at(static_cast<std::size_t>(k)).evaluate(t));
                worst = std::max(worst, (lhs - rhs).norm());
            }
        }
        report.max_residual.push_back(worst);
    }
    std::vector<double> lx;
    std::vector<double> ly;
    for (std::size_t i = 0; i < radii.size(); ++i) {
        lx.push_back(std::log(radii[i]));
        ly.push_back(std::log(std::max(report.max_residual[i], std::numeric_limits<double>::min())));
        report.slope_cumulative.push_back(least_squares_slope(lx, ly, i + 1));
    }
    report.slope = report.slope_cumulative.back();
    report.exact = std::all_of(report.max_residual.begin(), report.max_residual.end(),
                               [&](double v) { return v <= exact_tol; });
    report.pass = report.exact || (std::isfinite(report.slope) && report.slope >= ctx.order() + 0.9);
    return report;
}

std::vector<PolyMap> direct_solve_oracle(const SolverContext& ctx, int n, const PartialSolution& partial) {
    require_periodic(ctx, "direct_solve_oracle");
    if (n < 2 || n > ctx.order()) {
        throw ValidationError("direct_solve_oracle: degree outside 2..M");
    }
    if (partial.solved_through < n - 1) {
        throw MissingData("direct_solve_oracle: lower degrees missing");
    }
    const OrbitCocycle& c = ctx.cocycle();
    const GradedSpace& space = c.space();
    const int m = space.dim();
    const int K = c.length();
    const int d = ctx.degree_bound();
    const Eigen::MatrixXd mask = independent_mask(ctx.spectrum(), space, n);
    const Eigen::Index cols = mask.cols();
    const Eigen::Index block = m * cols;

    std::vector<Eigen::MatrixXd> qbar;
    std::vector<Eigen::MatrixXd> transfer_t;
    for (int k = 0; k < K; ++k) {
        const auto f = to_sparse(c.map(k), 1, n);
        Eigen::MatrixXd rhs = degree_block(to_sparse(c.map(k), n, n), m, n);
        if (n >= 3) {
            const auto h_next = to_sparse(partial.H[static_cast<std::size_t>((k + 1) % K)], 2, n - 1);
            const auto f_low = to_sparse(c.map(k), 1, n - 1);
            rhs += degree_block(sparse_compose(h_next, f_low, m, n), m, n);
            if (std::min(d, n - 1) >= 2) {
                const auto p = to_sparse(partial.P[static_cast<std::size_t>(k)], 2, std::min(d, n - 1));
                const auto h = to_sparse(partial.H[static_cast<std::size_t>(k)], 1, n - 1);
                rhs -= degree_block(sparse_compose(p, h, m, n), m, n);
            }
        }
        const Eigen::MatrixXd L = c.linear(k);
        qbar.push_back(L.fullPivLu().solve(rhs).cwiseProduct(mask));
        transfer_t.push_back(linear_substitution(L, n));
    }

    // x_k - D (T_k^T kron L_k^{-1}) x_{k+1} = vec(Qbar_k), column-major vec.
    const Eigen::Index N = K * block;
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(N, N);
    Eigen::VectorXd b(N);
    for (int k = 0; k < K; ++k) {
        const Eigen::MatrixXd Linv = c.linear(k).fullPivLu().inverse();
        const Eigen::MatrixXd& T = transfer_t[static_cast<std::size_t>(k)];
        const Eigen::Index row0 = k * block;
        const Eigen::Index col0 = ((k + 1) % K) * block;
        for (Eigen::Index j = 0; j < cols; ++j) {
            for (Eigen::Index r = 0; r < m; ++r) {
                const Eigen::Index row = row0 + j * m + r;
                b(row) = qbar[static_cast<std::size_t>(k)](r, j);
                if (mask(r, j) == 0.0) {
                    continue;
                }
                // (Linv R T)(r, j) = sum_{a,i} Linv(r,a) R(a,i) T(i,j)
                for (Eigen::Index i = 0; i < cols; ++i) {
                    if (T(i, j) == 0.0) {
                        continue;
                    }
                    for (Eigen::Index a = 0; a < m; ++a) {
                        A(row, col0 + i * m + a) -= Linv(r, a) * T(i, j);
                    }
                }
            }
        }
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    if (!lu.isInvertible()) {
        throw SingularSystem("direct_solve_oracle: singular period system at degree " + std::to_string(n));
    }
    const Eigen::VectorXd x = lu.solve(b);
    std::vector<PolyMap> out;
    for (int k = 0; k < K; ++k) {
        Eigen::MatrixXd R(m, cols);
        for (Eigen::Index j = 0; j < cols; ++j) {
            for (Eigen::Index r = 0; r < m; ++r) {
                R(r, j) = x(k * block + j * m + r);
            }
        }
        PolyMap hmap(space, space, n);
        hmap.set_homogeneous_block(n, R);
        out.push_back(std::move(hmap));
    }
    return out;
}

OracleReport series_vs_direct(const SolverContext& ctx, const NormalFormResult& result, double tol) {
    OracleReport report;
    for (int n = 2; n <= ctx.order(); ++n) {
        const PartialSolution partial = PartialSolution::from_result(ctx, result, n - 1);
        const auto direct = direct_solve_oracle(ctx, n, partial);
        const Eigen::MatrixXd mask = independent_mask(ctx.spectrum(), ctx.cocycle().space(), n);
        double worst = 0.0;
        for (int k = 0; k < ctx.points(); ++k) {
            const Eigen::MatrixXd series = result.H[static_cast<std::size_t>(k)].homogeneous_block(n).cwiseProduct(mask);
            const Eigen::MatrixXd diff = series - direct[static_cast<std::size_t>(k)].homogeneous_block(n);
            if (diff.size() > 0) {
                worst = std::max(worst, diff.cwiseAbs().maxCoeff());
            }
        }
        report.per_degree.push_back(worst);
        report.max_difference = std::max(report.max_difference, worst);
    }
    report.pass = report.max_difference <= tol;
    return report;
}

GaugeReport gauge_compare(const NormalFormResult& result, const NormalFormResult& result_alt,
                          const SubResStructure& structure, double tol) {
    if (result.H.size() != result_alt.H.size() || result.H.empty()) {
        throw DimensionMismatch("gauge_compare: results cover different orbits");
    }
    GaugeReport report;
    report.degree_bound = structure.degree_bound();
    const int M = std::min(result.order, result_alt.order);
    const int d = structure.degree_bound();
    for (std::size_t k = 0; k < result.H.size(); ++k) {
        const PolyMap& ref = result.H[k];
        if (!ref.has_invertible_linear_part()) {
            throw SingularLinearPart("gauge_compare: reference chart is not invertible");
        }
        PolyMap g = compose_truncated(result_alt.H[k], invert_truncated(ref.with_order(M), M), M);
        const auto split = project_subresonance(g, structure);
        report.n_part_violation = std::max(report.n_part_violation, split.n_part.max_abs_coeff());
        if (d + 1 <= M) {
            report.high_degree = std::max(report.high_degree, g.max_abs_coeff(d + 1, M));
        }
        report.identity_deviation =
            std::max(report.identity_deviation, (g - PolyMap::identity(g.source(), M)).max_abs_coeff());
        report.G.push_back(std::move(g));
    }
    report.pass = report.n_part_violation <= tol && report.high_degree <= tol &&
                  (d > 1 || report.identity_deviation <= tol);
    return report;
}

NormalFormResult apply_gauge(const SolverContext& ctx, const NormalFormResult& result,
                             const std::vector<PolyMap>& delta) {
    if (static_cast<int>(delta.size()) != ctx.points()) {
        throw DimensionMismatch("apply_gauge: one perturbation per orbit point is required");
    }
    require_periodic(ctx, "apply_gauge");
    const int M = result.order;
    const GradedSpace& space = ctx.cocycle().space();
    std::vector<PolyMap> g;
    for (const auto& dk : delta) {
        PolyMap gk = PolyMap::identity(space, M) + dk.with_order(M);
        g.push_back(std::move(gk));
    }
    NormalFormResult out = result;
    out.conjugacy_defect.clear();
    for (int k = 0; k < ctx.points(); ++k) {
        out.H[static_cast<std::size_t>(k)] = compose_truncated(g[static_cast<std::size_t>(k)], result.H[static_cast<std::size_t>(k)], M);
    }
    for (int k = 0; k < ctx.points(); ++k) {
        const PolyMap& p = result.P[static_cast<std::size_t>(k)];
        const PolyMap conj = compose_truncated(compose_truncated(g[static_cast<std::size_t>(ctx.next(k))], p, M),
                                               invert_truncated(g[static_cast<std::size_t>(k)], M), M);
        out.P[static_cast<std::size_t>(k)] = conj.with_order(p.order());
    }
    for (int k = 0; k < ctx.points(); ++k) {
        out.conjugacy_defect.push_back(conjugacy_defect(out.H[static_cast<std::size_t>(ctx.next(k))], ctx.cocycle().map(k),
                                                        out.P[static_cast<std::size_t>(k)],
                                                        out.H[static_cast<std::size_t>(k)], M));
    }
    return out;
}

std::vector<PolyMap> iterate_cocycle(const OrbitCocycle& cocycle, int power, int order) {
    if (power < 1) {
        throw ValidationError("iterate_cocycle: power must be positive");
    }
    if (!cocycle.periodic()) {
        throw ValidationError("iterate_cocycle needs a periodic cocycle");
    }
    std::vector<PolyMap> out;
    for (int k = 0; k < cocycle.length(); ++k) {
        PolyMap g = cocycle.map(k).with_order(order);
        for (int j = 1; j < power; ++j) {
            g = compose_truncated(cocycle.map(k + j), g, order);
        }
        out.push_back(std::move(g));
    }
    return out;
}

CentralizerReport centralizer_check(const NormalFormResult& result, const SolverContext& ctx,
                                    const std::vector<PolyMap>& commuting, int shift, bool compare_iterate,
                                    double tol, double commute_tol) {
    require_periodic(ctx, "centralizer_check");
    const OrbitCocycle& c = ctx.cocycle();
    const int K = c.length();
    if (static_cast<int>(commuting.size()) != K) {
        throw DimensionMismatch("centralizer_check: one commuting map per orbit point is required");
    }
    const int M = result.order;
    const int d = ctx.degree_bound();
    const GradedSpace& space = c.space();
    CentralizerReport report;
    for (int k = 0; k < K; ++k) {
        const PolyMap lhs = compose_truncated(commuting[static_cast<std::size_t>((k + 1) % K)], c.map(k), M);
        const PolyMap rhs = compose_truncated(c.map(k + shift), commuting[static_cast<std::size_t>(k)], M);
        report.commutation_residual = std::max(report.commutation_residual, (lhs - rhs).max_abs_coeff());
    }
    if (report.commutation_residual > commute_tol) {
        std::ostringstream msg;
        msg << "centralizer_check: supplied maps do not commute with the extension (residual "
            << report.commutation_residual << ")";
        throw NonCommuting(msg.str());
    }
    for (int k = 0; k < K; ++k) {
        const PolyMap& gk = commuting[static_cast<std::size_t>(k)];
        const PolyMap h_inv = invert_truncated(result.H[static_cast<std::size_t>(k)], M);
        PolyMap conj = compose_truncated(result.H[static_cast<std::size_t>(((k + shift) % K + K) % K)],
                                         compose_truncated(gk, h_inv, M), M);
        const auto split = project_subresonance(conj, SubResStructure(ctx.spectrum()));
        report.n_part_violation = std::max(report.n_part_violation, split.n_part.max_abs_coeff());
        if (d + 1 <= M) {
            report.high_degree = std::max(report.high_degree, conj.max_abs_coeff(d + 1, M));
        }
        const Eigen::MatrixXd lin = conj.linear_part();
        report.linear_mismatch = std::max(report.linear_mismatch, (lin - gk.linear_part()).cwiseAbs().maxCoeff());
        for (int r = 0; r < space.dim(); ++r) {
            for (int col = 0; col < space.dim(); ++col) {
                if (space.block_of(col) < space.block_of(r)) {
                    report.flag_violation = std::max(report.flag_violation, std::abs(lin(r, col)));
                }
            }
        }
        if (compare_iterate) {
            PolyMap pit = result.P[static_cast<std::size_t>(k)].with_order(M);
            for (int j = 1; j < shift; ++j) {
                pit = compose_truncated(result.P[static_cast<std::size_t>((k + j) % K)], pit, M);
            }
            report.iterate_mismatch = std::max(report.iterate_mismatch, (conj - pit).max_abs_coeff());
        }
        report.conjugated.push_back(std::move(conj));
    }
    report.pass = report.n_part_violation <= tol && report.high_degree <= tol && report.linear_mismatch <= tol &&
                  report.flag_violation <= tol && report.iterate_mismatch <= tol;
    return report;
}

double flag_invariance(const PolyMap& P, int samples, std::uint64_t seed) {
    if (!(P.source() == P.target())) {
        throw DimensionMismatch("flag_invariance: source and target gradings differ");
    }
    const GradedSpace& space = P.source();
    const int m = space.dim();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double worst = 0.0;
    for (int s = 0; s < samples; ++s) {
        Eigen::VectorXd y(m);
        for (int i = 0; i < m; ++i) {
            y(i) = gauss(rng);
        }
        y *= std::pow(unif(rng), 1.0 / m) / y.norm();
        const Eigen::MatrixXd J = P.jacobian(y);
        for (int r = 0; r < m; ++r) {
            for (int c = 0; c < m; ++c) {
                if (space.block_of(c) < space.block_of(r)) {
                    worst = std::max(worst, std::abs(J(r, c)));
                }
            }
        }
    }
    return worst;
}

namespace {

// M = B U with B block unit lower triangular, U block upper triangular.
Eigen::MatrixXd block_lower_factor(const Eigen::MatrixXd& M, const GradedSpace& space) {
    const int m = space.dim();
    Eigen::MatrixXd A = M;
    Eigen::MatrixXd B = Eigen::MatrixXd::Identity(m, m);
    for (int j = 0; j < space.blocks(); ++j) {
        const int o = space.block_offset(j);
        const int s = space.block_dims()[static_cast<std::size_t>(j)];
        const int below = m - o - s;
        if (below == 0) {
            break;
        }
        Eigen::FullPivLU<Eigen::MatrixXd> pivot(A.block(o, o, s, s).transpose());
        if (!pivot.isInvertible()) {
            throw OutsideConvergenceBall("chart_consistency: flag degenerates along the orbit");
        }
        const Eigen::MatrixXd factor =
            pivot.solve(Eigen::MatrixXd(A.block(o + s, o, below, s).transpose())).transpose();
        B.block(o + s, o, below, s) = factor;
        A.bottomRows(below) -= factor * A.middleRows(o, s);
    }
    return B;
}

} // namespace

ChartReport chart_consistency(const SolverContext& ctx, const Eigen::VectorXd& y, const ChartOptions& options) {
    require_periodic(ctx, "chart_consistency");
    const OrbitCocycle& c = ctx.cocycle();
    const GradedSpace& space = c.space();
    const int K = c.length();
    if (y.size() != space.dim()) {
        throw DimensionMismatch("chart_consistency: point has the wrong dimension");
    }
    const int Mi = std::max({options.internal_order, ctx.order(), 1});
    const int check = std::min(std::max(options.check_degree, ctx.degree_bound()), Mi);

    SolverOptions base_opts = ctx.options();
    base_opts.order = Mi;
    const SolverContext base(c, ctx.spectrum(), {}, base_opts);
    const NormalFormResult base_result = solve_normal_form(base);

    // Orbit of y until it settles at the base point.
    std::vector<Eigen::VectorXd> orbit{y};
    const double settle = options.settle_tol * std::max(1.0, y.norm());
    int W = 0;
    while (!(W > 0 && W % K == 0 && orbit.back().norm() <= settle)) {
        if (W >= options.max_window || !orbit.back().allFinite() || orbit.back().norm() > 1e6 * (1.0 + y.norm())) {
            std::ostringstream msg;
            msg << "chart_consistency: orbit of y did not settle within " << W << " steps";
            throw OutsideConvergenceBall(msg.str());
        }
        orbit.push_back(c.map(W).evaluate(orbit.back()));
        ++W;
    }

    std::vector<PolyMap> recentered;
    for (int k = 0; k < W; ++k) {
        const PolyMap& f = c.map(k);
        PolyMap fk = compose_truncated(f, translation(space, orbit[static_cast<std::size_t>(k)]), f.order());
        fk.coefficients().col(0).setZero();
        recentered.push_back(std::move(fk));
    }

    // Pull the coordinate flag back from y_W and keep a block unit lower basis.
    std::vector<Eigen::MatrixXd> B(static_cast<std::size_t>(W) + 1);
    B[static_cast<std::size_t>(W)] = Eigen::MatrixXd::Identity(space.dim(), space.dim());
    for (int k = W - 1; k >= 0; --k) {
        Eigen::FullPivLU<Eigen::MatrixXd> lu(recentered[static_cast<std::size_t>(k)].linear_part());
        if (!lu.isInvertible()) {
            throw OutsideConvergenceBall("chart_consistency: singular derivative along the orbit of y");
        }
        B[static_cast<std::size_t>(k)] = block_lower_factor(lu.solve(B[static_cast<std::size_t>(k) + 1]), space);
    }

    const int window_order = check;
    std::vector<PolyMap> adapted;
    for (int k = 0; k < W; ++k) {
        const PolyMap& fk = recentered[static_cast<std::size_t>(k)];
        const int ord = std::max(fk.order(), 1);
        const PolyMap into = PolyMap::linear(space, space, B[static_cast<std::size_t>(k)], ord);
        const PolyMap out = PolyMap::linear(space, space, B[static_cast<std::size_t>(k) + 1].inverse(), ord);
        PolyMap ak = compose_truncated(out, compose_truncated(fk, into, ord), ord);
        for (int r = 0; r < space.dim(); ++r) {
            for (int col = 0; col < space.dim(); ++col) {
                if (space.block_of(col) < space.block_of(r)) {
                    ak.coefficients()(r, 1 + col) = 0.0;
                }
            }
        }
        adapted.push_back(std::move(ak));
    }

    SolverOptions window_opts = ctx.options();
    window_opts.order = window_order;
    const PolyMap terminal = base_result.H[static_cast<std::size_t>(W % K)].with_order(window_order);
    const SolverContext window(OrbitCocycle(space, adapted, false), ctx.spectrum(), {}, window_opts, terminal);
    const NormalFormResult window_result = solve_normal_form(window);

    // J = inverse of s -> H_x(y + s) - H_x(y).
    PolyMap shifted = compose_truncated(base_result.H[0], translation(space, y), Mi);
    shifted.coefficients().col(0).setZero();
    const PolyMap J = invert_truncated(shifted.with_order(check), check);
    const PolyMap b0_inv = PolyMap::linear(space, space, B[0].inverse(), check);
    PolyMap transition = compose_truncated(window_result.H[0], compose_truncated(b0_inv, J, check), check);

    ChartReport report;
    report.window = W;
    const int d = ctx.degree_bound();
    if (d + 1 <= check) {
        report.high_degree = transition.max_abs_coeff(d + 1, check);
    }
    const auto split = project_subresonance(transition.degree_range(0, d), SubResStructure(ctx.spectrum()));
    report.n_part_violation = split.n_part.max_abs_coeff();
    report.transition = std::move(transition);
    report.pass = report.high_degree <= options.tol && report.n_part_violation <= options.tol;
    return report;
}

} // namespace subres
