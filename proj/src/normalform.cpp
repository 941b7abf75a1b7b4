#include "subres/normalform.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "subres/errors.hpp"

namespace subres {

Transversal skew_transversal(double weight) {
    return [weight](const Eigen::MatrixXd& n_block, int /*point*/, int /*degree*/) {
        Eigen::MatrixXd out(n_block.rows(), n_block.cols());
        for (Eigen::Index i = 0; i < n_block.rows(); ++i) {
            out.row(i).setConstant(weight * n_block.row(i).sum());
        }
        return out;
    };
}

namespace {

bool preserves_flag(const Eigen::MatrixXd& linear, const GradedSpace& space) {
    const double scale = std::max(1.0, linear.cwiseAbs().maxCoeff());
    for (int r = 0; r < space.dim(); ++r) {
        for (int c = 0; c < space.dim(); ++c) {
            if (space.block_of(c) < space.block_of(r) && std::abs(linear(r, c)) > 1e-12 * scale) {
                return false;
            }
        }
    }
    return true;
}

} // namespace

SolverContext::SolverContext(OrbitCocycle cocycle, Spectrum spectrum, std::vector<LyapunovFrame> frames,
                             SolverOptions options, std::optional<PolyMap> terminal)
    : cocycle_(std::move(cocycle)), spectrum_(std::move(spectrum)), structure_(spectrum_),
      frames_(std::move(frames)), options_(std::move(options)), terminal_(std::move(terminal)) {
    const int M = options_.order;
    if (M < structure_.degree_bound() || M < 1) {
        throw ValidationError("truncation order M must be at least the degree bound d = " +
                              std::to_string(structure_.degree_bound()));
    }
    if (!(options_.series_tol > 0.0) || options_.max_series_terms < 1) {
        throw ValidationError("series_tol and max_series_terms must be positive");
    }
    if (options_.lift == LiftPolicy::custom_transversal && !options_.transversal) {
        throw ValidationError("custom transversal lift needs a transversal map");
    }
    if (cocycle_.space().block_dims() != spectrum_.multiplicities()) {
        throw DimensionMismatch("cocycle grading does not match the spectrum multiplicities");
    }
    if (!frames_.empty() && static_cast<int>(frames_.size()) != cocycle_.length()) {
        throw DimensionMismatch("one Lyapunov frame per orbit point is required");
    }
    for (int k = 0; k < cocycle_.length(); ++k) {
        if (!preserves_flag(cocycle_.linear(k), cocycle_.space())) {
            throw ValidationError("fiber map " + std::to_string(k) +
                                  " does not preserve the coordinate fast flag; adapt coordinates first");
        }
    }
    if (cocycle_.periodic()) {
        if (terminal_) {
            throw ValidationError("terminal data is only meaningful for non-periodic windows");
        }
    } else {
        if (!terminal_) {
            throw ValidationError("a non-periodic window needs terminal coordinate-change data");
        }
        if (!(terminal_->source() == cocycle_.space()) || !(terminal_->target() == cocycle_.space())) {
            throw DimensionMismatch("terminal data does not act on the cocycle space");
        }
    }
    for (int n = 2; n <= M; ++n) {
        contraction_factor(spectrum_, n);
    }

    masks_.resize(static_cast<std::size_t>(M) + 1);
    substitutions_.resize(static_cast<std::size_t>(cocycle_.length()));
    for (int n = 1; n <= M; ++n) {
        masks_[static_cast<std::size_t>(n)] =
            nonresonance_mask(cocycle_.space(), cocycle_.space(), n, structure_);
    }
    for (int k = 0; k < cocycle_.length(); ++k) {
        auto& per_point = substitutions_[static_cast<std::size_t>(k)];
        per_point.resize(static_cast<std::size_t>(M) + 1);
        for (int n = 2; n <= M; ++n) {
            per_point[static_cast<std::size_t>(n)] = substitution_matrix(cocycle_.linear(k), n);
        }
    }
}

const Eigen::MatrixXd& SolverContext::substitution(int point, int n) const {
    return substitutions_.at(static_cast<std::size_t>(point)).at(static_cast<std::size_t>(n));
}

PartialSolution PartialSolution::start(const SolverContext& ctx) {
    PartialSolution partial;
    const GradedSpace& space = ctx.cocycle().space();
    const int M = ctx.order();
    const int p_order = std::max(ctx.degree_bound(), 1);
    for (int k = 0; k < ctx.h_points(); ++k) {
        partial.H.push_back(PolyMap::identity(space, M));
    }
    if (ctx.terminal()) {
        // Only the linear part is taken now; higher degrees enter per degree.
        PolyMap term = ctx.terminal()->with_order(M).degree_range(1, 1);
        partial.H.back() = term;
    }
    for (int k = 0; k < ctx.points(); ++k) {
        partial.P.push_back(PolyMap::linear(space, space, ctx.cocycle().linear(k), p_order));
    }
    partial.solved_through = 1;
    return partial;
}

PartialSolution PartialSolution::from_result(const SolverContext& ctx, const NormalFormResult& result, int degree) {
    PartialSolution partial = start(ctx);
    for (int k = 0; k < ctx.points(); ++k) {
        partial.H[static_cast<std::size_t>(k)] =
            result.H.at(static_cast<std::size_t>(k)).with_order(ctx.order()).degree_range(0, degree);
        partial.P[static_cast<std::size_t>(k)] = result.P.at(static_cast<std::size_t>(k))
                                                     .with_order(partial.P[static_cast<std::size_t>(k)].order())
                                                     .degree_range(0, degree);
    }
    if (ctx.terminal()) {
        partial.H.back() = ctx.terminal()->with_order(ctx.order()).degree_range(0, degree);
    }
    partial.solved_through = degree;
    return partial;
}

namespace {

struct DegreeSources {
    std::vector<Eigen::MatrixXd> rhs; // F^(n) + A - B
    std::vector<Eigen::MatrixXd> q;   // F^{-1} rhs
};

DegreeSources degree_sources(const SolverContext& ctx, int n, const PartialSolution& partial) {
    if (partial.solved_through < n - 1) {
        throw MissingData("degree " + std::to_string(n) + " needs degrees up to " + std::to_string(n - 1) +
                          ", have " + std::to_string(partial.solved_through));
    }
    if (static_cast<int>(partial.H.size()) != ctx.h_points() || static_cast<int>(partial.P.size()) != ctx.points()) {
        throw MissingData("partial solution does not cover the orbit");
    }
    const int d = ctx.degree_bound();
    DegreeSources out;
    for (int k = 0; k < ctx.points(); ++k) {
        const PolyMap& f = ctx.cocycle().map(k);
        const PolyMap& h_next = partial.H[static_cast<std::size_t>(ctx.next(k))];
        const PolyMap& h_here = partial.H[static_cast<std::size_t>(k)];
        const PolyMap& p_here = partial.P[static_cast<std::size_t>(k)];

        Eigen::MatrixXd rhs = f.homogeneous_block(n);
        if (n >= 3) {
            const PolyMap outer = h_next.degree_range(2, n - 1);
            const PolyMap inner = f.degree_range(1, n - 1);
            rhs += compose_truncated(outer, inner, n).homogeneous_block(n);
            const int top = std::min(d, n - 1);
            if (top >= 2) {
                const PolyMap p_outer = p_here.degree_range(2, top);
                const PolyMap h_inner = h_here.degree_range(1, n - 1);
                rhs -= compose_truncated(p_outer, h_inner, n).homogeneous_block(n);
            }
        }
        out.q.push_back(ctx.cocycle().linear_inverse(k) * rhs);
        out.rhs.push_back(std::move(rhs));
    }
    return out;
}

PolyMap block_to_map(const GradedSpace& space, int n, const Eigen::MatrixXd& block) {
    PolyMap out(space, space, n);
    out.set_homogeneous_block(n, block);
    return out;
}

} // namespace

std::vector<PolyMap> assemble_Q(const SolverContext& ctx, int n, const PartialSolution& partial) {
    if (n < 2 || n > ctx.order()) {
        throw ValidationError("assemble_Q: degree outside 2..M");
    }
    const auto sources = degree_sources(ctx, n, partial);
    std::vector<PolyMap> out;
    for (const auto& q : sources.q) {
        out.push_back(block_to_map(ctx.cocycle().space(), n, q));
    }
    return out;
}

PolyMap twisted_transfer(const SolverContext& ctx, const PolyMap& r, int point) {
    const GradedSpace& space = ctx.cocycle().space();
    const int order = std::max(r.order(), 1);
    const PolyMap lin = PolyMap::linear(space, space, ctx.cocycle().linear(point), order);
    const PolyMap lin_inv = PolyMap::linear(space, space, ctx.cocycle().linear_inverse(point), order);
    return compose_truncated(lin_inv, compose_truncated(r, lin, order), order);
}

DegreeDiagnostics solve_homogeneous_degree(const SolverContext& ctx, int n, PartialSolution& partial) {
    if (n < 2 || n > ctx.order()) {
        throw ValidationError("solve_homogeneous_degree: degree outside 2..M");
    }
    const auto sources = degree_sources(ctx, n, partial);
    const int K = ctx.points();
    const Eigen::MatrixXd& mask = ctx.mask(n);
    const int d = ctx.degree_bound();
    const auto& opts = ctx.options();

    DegreeDiagnostics diag;
    diag.degree = n;
    diag.full_space = n > d;

    auto transfer = [&](int k, const Eigen::MatrixXd& r_next) -> Eigen::MatrixXd {
        const Eigen::MatrixXd moved =
            ctx.cocycle().linear_inverse(k) * r_next * ctx.substitution(k, n).transpose();
        return moved.cwiseProduct(mask);
    };

    std::vector<Eigen::MatrixXd> hbar(static_cast<std::size_t>(ctx.h_points()));
    Eigen::MatrixXd last_term;
    int last_term_point = 0;

    if (ctx.cocycle().periodic()) {
        // Hbar_x = sum_k (F^k_x)^{-1} o Qbar_{x_k} o F^k_x, one transfer per step.
        std::vector<Eigen::MatrixXd> term(static_cast<std::size_t>(K));
        for (int k = 0; k < K; ++k) {
            term[static_cast<std::size_t>(k)] = sources.q[static_cast<std::size_t>(k)].cwiseProduct(mask);
            hbar[static_cast<std::size_t>(k)] = term[static_cast<std::size_t>(k)];
        }
        auto term_norm = [&](const std::vector<Eigen::MatrixXd>& t) {
            double v = 0.0;
            for (const auto& b : t) {
                if (b.size() > 0) {
                    v = std::max(v, b.cwiseAbs().maxCoeff());
                }
            }
            return v;
        };
        std::vector<double> norms{term_norm(term)};
        int steps = 1;
        double tail = 0.0;
        double ratio = 0.0;
        bool converged = norms.back() == 0.0;
        while (!converged) {
            if (steps >= opts.max_series_terms) {
                std::ostringstream msg;
                msg << "series budget of " << opts.max_series_terms << " terms exhausted at degree " << n
                    << " (last term norm " << norms.back() << ")";
                throw BudgetExhausted(msg.str());
            }
            std::vector<Eigen::MatrixXd> next(static_cast<std::size_t>(K));
            for (int k = 0; k < K; ++k) {
                next[static_cast<std::size_t>(k)] = transfer(k, term[static_cast<std::size_t>(ctx.next(k))]);
                hbar[static_cast<std::size_t>(k)] += next[static_cast<std::size_t>(k)];
            }
            term = std::move(next);
            norms.push_back(term_norm(term));
            ++steps;
            const auto s = norms.size() - 1;
            if (norms[s] == 0.0) {
                tail = 0.0;
                converged = true;
                break;
            }
            const auto period = static_cast<std::size_t>(K);
            if (s < period || norms[s - period] == 0.0) {
                continue;
            }
            ratio = norms[s] / norms[s - period];
            if (ratio < 1.0) {
                double last_period = 0.0;
                for (std::size_t j = s + 1 - period; j <= s; ++j) {
                    last_period += norms[j];
                }
                tail = last_period * ratio / (1.0 - ratio);
                if (tail < opts.series_tol) {
                    converged = true;
                    break;
                }
            }
            const std::size_t window = 16 * period;
            if (s >= 2 * window && norms[s] >= norms[s - window]) {
                std::ostringstream msg;
                msg << "series stagnation at degree " << n << ": term norms did not decrease over " << window
                    << " steps (ratio " << norms[s] / norms[s - window] << ")";
                throw SeriesStagnation(msg.str());
            }
        }
        diag.series_terms = steps;
        diag.final_term_norm = norms.back();
        diag.tail_bound = tail;
        diag.period_ratio = ratio;
        // Report the Lyapunov size of the last term at the point where it is largest.
        double biggest = -1.0;
        for (int k = 0; k < K; ++k) {
            const double v = term[static_cast<std::size_t>(k)].size() ? term[static_cast<std::size_t>(k)].cwiseAbs().maxCoeff() : 0.0;
            if (v > biggest) {
                biggest = v;
                last_term_point = k;
            }
        }
        last_term = term[static_cast<std::size_t>(last_term_point)];
    } else {
        // Window: backward recursion from the terminal data at point W.
        hbar[static_cast<std::size_t>(K)] = ctx.terminal()->with_order(ctx.order()).homogeneous_block(n).cwiseProduct(mask);
        for (int k = K - 1; k >= 0; --k) {
            hbar[static_cast<std::size_t>(k)] = sources.q[static_cast<std::size_t>(k)].cwiseProduct(mask) +
                                                transfer(k, hbar[static_cast<std::size_t>(k + 1)]);
        }
        diag.series_terms = K;
        diag.tail_bound = 0.0;
    }

    // Lift and write H^(n).
    for (int k = 0; k < K; ++k) {
        Eigen::MatrixXd h = hbar[static_cast<std::size_t>(k)];
        if (opts.lift == LiftPolicy::custom_transversal) {
            const Eigen::MatrixXd extra = opts.transversal(h, k, n);
            h += extra.cwiseProduct(Eigen::MatrixXd::Ones(mask.rows(), mask.cols()) - mask);
        }
        partial.H[static_cast<std::size_t>(k)].set_homogeneous_block(n, h);
    }
    if (ctx.terminal()) {
        partial.H.back().set_homogeneous_block(n, ctx.terminal()->with_order(ctx.order()).homogeneous_block(n));
    }

    // P^(n) = F^(n) + A - B + H^(n)_{fx} o F_x - F_x o H^(n)_x, sub-resonance for n <= d.
    // Its N-part vanishes up to rounding; that residue is dropped (the
    // conjugacy defect still sees it).
    const Eigen::MatrixXd s_mask = Eigen::MatrixXd::Ones(mask.rows(), mask.cols()) - mask;
    for (int k = 0; k < K; ++k) {
        if (n > d) {
            continue;
        }
        const Eigen::MatrixXd& h_next = partial.H[static_cast<std::size_t>(ctx.next(k))].homogeneous_block(n);
        const Eigen::MatrixXd h_here = partial.H[static_cast<std::size_t>(k)].homogeneous_block(n);
        const Eigen::MatrixXd p = sources.rhs[static_cast<std::size_t>(k)] +
                                  h_next * ctx.substitution(k, n).transpose() -
                                  ctx.cocycle().linear(k) * h_here;
        partial.P[static_cast<std::size_t>(k)].set_homogeneous_block(n, p.cwiseProduct(s_mask));
    }
    partial.solved_through = n;

    if (!ctx.frames().empty() && last_term.size() > 0) {
        const auto& frame = ctx.frames()[static_cast<std::size_t>(last_term_point)];
        diag.final_term_lyapunov_norm =
            lyapunov_opnorm(block_to_map(ctx.cocycle().space(), n, last_term), frame, frame);
    }
    return diag;
}

double conjugacy_defect(const PolyMap& h_next, const PolyMap& f, const PolyMap& p, const PolyMap& h, int order) {
    const PolyMap lhs = compose_truncated(h_next, f, order);
    const PolyMap rhs = compose_truncated(p, h, order);
    return (lhs - rhs).max_abs_coeff();
}

NormalFormResult solve_normal_form(const SolverContext& ctx) {
    const int M = ctx.order();
    PartialSolution partial = PartialSolution::start(ctx);

    bool linear_input = true;
    for (const auto& f : ctx.cocycle().maps()) {
        linear_input = linear_input && f.max_degree() <= 1;
    }
    if (ctx.terminal()) {
        linear_input = linear_input && ctx.terminal()->max_degree() <= 1;
    }

    NormalFormResult result;
    result.order = M;
    result.degree_bound = ctx.degree_bound();
    for (int n = 2; n <= M; ++n) {
        if (linear_input) {
            DegreeDiagnostics diag;
            diag.degree = n;
            diag.full_space = n > ctx.degree_bound();
            result.diagnostics.push_back(diag);
            continue;
        }
        result.diagnostics.push_back(solve_homogeneous_degree(ctx, n, partial));
    }
    partial.solved_through = M;

    for (int k = 0; k < ctx.points(); ++k) {
        result.H.push_back(partial.H[static_cast<std::size_t>(k)]);
        result.P.push_back(partial.P[static_cast<std::size_t>(k)]);
    }
    for (int k = 0; k < ctx.points(); ++k) {
        result.conjugacy_defect.push_back(conjugacy_defect(partial.H[static_cast<std::size_t>(ctx.next(k))],
                                                           ctx.cocycle().map(k), partial.P[static_cast<std::size_t>(k)],
                                                           partial.H[static_cast<std::size_t>(k)], M));
    }
    return result;
}

} // namespace subres
