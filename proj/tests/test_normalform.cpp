#include <cmath>
#include <random>

#include "doctest.h"

#include "subres/errors.hpp"
#include "subres/normalform.hpp"
#include "support.hpp"

using namespace subres;
using testing::diag;
using testing::vec;

namespace {

const double kE = std::exp(1.0);

PolyMap koenigs_map() { return PolyMap::univariate({0.0, 0.5, 0.1}); }

OrbitCocycle scaled_nonlinearity(const OrbitCocycle& c, double eta) {
    std::vector<PolyMap> maps;
    for (const auto& f : c.maps()) {
        PolyMap g = f.degree_range(1, 1) + eta * f.degree_range(2, f.order());
        maps.push_back(g);
    }
    return OrbitCocycle(c.space(), std::move(maps), c.periodic());
}

} // namespace

TEST_CASE("solver context validation") {
    const auto res = testing::resonant2();
    const auto p = testing::prepare(res);
    CHECK_THROWS_AS(SolverContext(p.cocycle, p.mono.spectrum, p.frames, testing::options(1)), ValidationError);
    SolverOptions bad_tol = testing::options(3);
    bad_tol.series_tol = 0.0;
    CHECK_THROWS_AS(SolverContext(p.cocycle, p.mono.spectrum, p.frames, bad_tol), ValidationError);
    SolverOptions no_transversal = testing::options(3);
    no_transversal.lift = LiftPolicy::custom_transversal;
    CHECK_THROWS_AS(SolverContext(p.cocycle, p.mono.spectrum, p.frames, no_transversal), ValidationError);
    CHECK_THROWS_AS(SolverContext(p.cocycle, p.mono.spectrum, {p.frames[0], p.frames[0]}, testing::options(3)),
                    DimensionMismatch);
    CHECK_THROWS_AS(SolverContext(p.cocycle, p.mono.spectrum, p.frames, testing::options(3),
                                  PolyMap::identity(p.cocycle.space(), 3)),
                    ValidationError);

    // A linear part mixing the slow block into the fast one breaks the flag.
    const GradedSpace space({1, 1});
    Eigen::MatrixXd a(2, 2);
    a << std::exp(-2.0), 0.0, 0.5, std::exp(-1.0);
    const OrbitCocycle mixed(space, {PolyMap::linear(space, space, a, 2)}, true);
    CHECK_THROWS_AS(SolverContext(mixed, Spectrum({-2.0, -1.0}, {1, 1}, 0.01), {}, testing::options(2)),
                    ValidationError);

    // Koenigs: lambda = ln 0.5, so eps = 0.1 fails the contraction check at degree 6.
    CHECK_THROWS_AS(testing::context(testing::koenigs(), 6, 0.1), NonContraction);
    CHECK_NOTHROW(testing::context(testing::koenigs(), 5, 0.1));
}

TEST_CASE("assemble_Q examples") {
    const auto ctx = testing::context(testing::koenigs(), 6);
    auto partial = PartialSolution::start(ctx);
    const auto q2 = assemble_Q(ctx, 2, partial);
    CHECK(q2[0].coeff(0, {2}) == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(q2[0].max_degree() == 2);
    solve_homogeneous_degree(ctx, 2, partial);
    const auto q3 = assemble_Q(ctx, 3, partial);
    CHECK(q3[0].coeff(0, {3}) == doctest::Approx(0.08).epsilon(1e-14));

    const GradedSpace s1 = GradedSpace::single(1);
    const auto lin = testing::context(OrbitCocycle(s1, {PolyMap::univariate({0.0, 0.5})}, true), 3);
    const auto ql = assemble_Q(lin, 2, PartialSolution::start(lin));
    CHECK(ql[0].max_abs_coeff() == 0.0);

    CHECK_THROWS_AS(assemble_Q(ctx, 1, partial), ValidationError);
    auto fresh = PartialSolution::start(ctx);
    CHECK_THROWS_AS(solve_homogeneous_degree(ctx, 3, fresh), MissingData);
}

TEST_CASE("twisted transfer examples") {
    const GradedSpace s1 = GradedSpace::single(1);
    const auto scalar = testing::context(OrbitCocycle(s1, {PolyMap::univariate({0.0, 1.0 / kE})}, true), 2);
    const PolyMap r = PolyMap::univariate({0.0, 0.0, 1.0}).homogeneous_part(2);
    CHECK(twisted_transfer(scalar, r, 0).coeff(0, {2}) == doctest::Approx(1.0 / kE).epsilon(1e-14));

    const GradedSpace space({1, 1});
    const OrbitCocycle d2(space, {PolyMap::linear(space, space, diag({std::exp(-2.0), 1.0 / kE}), 2)}, true);
    const auto ctx = testing::context(d2, 2);
    PolyMap lin(space, space, 1);
    lin.set_coeff(1, {1, 0}, 1.0); // type (block 2, s = (1, 0))
    CHECK(twisted_transfer(ctx, lin, 0).coeff(1, {1, 0}) == doctest::Approx(1.0 / kE).epsilon(1e-14));
    PolyMap quad(space, space, 2);
    quad.set_coeff(1, {2, 0}, 1.0); // -chi_2 + 2 chi_1 = 1 - 4
    CHECK(twisted_transfer(ctx, quad, 0).coeff(1, {2, 0}) == doctest::Approx(std::exp(-3.0)).epsilon(1e-14));
    PolyMap res(space, space, 2);
    res.set_coeff(0, {0, 2}, 1.0); // resonant: scale 1
    CHECK(twisted_transfer(ctx, res, 0).coeff(0, {0, 2}) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("twisted transfer obeys the Lyapunov-norm bound") {
    std::mt19937_64 rng(41);
    const GradedSpace space({1, 1});
    const OrbitCocycle c(space,
                         {PolyMap::linear(space, space, diag({0.2, 0.6}), 3),
                          PolyMap::linear(space, space, diag({0.3, 0.5}), 3)},
                         true);
    const double eps = 0.05;
    const auto ctx = testing::context(c, 3, eps);
    const auto& chi = ctx.spectrum().exponents();
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int n = 2; n <= 3; ++n) {
        for (const auto& alpha : compositions(2, n)) {
            for (int i = 0; i < 2; ++i) {
                PolyMap r(space, space, n);
                r.set_coeff(i, alpha, u(rng));
                const double rate = -chi[static_cast<std::size_t>(i)] + alpha[0] * chi[0] + alpha[1] * chi[1];
                for (int x = 0; x < 2; ++x) {
                    const auto& fx = ctx.frames()[static_cast<std::size_t>(x)];
                    const auto& fn = ctx.frames()[static_cast<std::size_t>((x + 1) % 2)];
                    const double out = lyapunov_opnorm(twisted_transfer(ctx, r, x), fx, fx);
                    const double in = lyapunov_opnorm(r, fn, fn);
                    CHECK(out <= std::exp(rate + (n + 1) * eps) * in * (1 + 1e-9));
                }
            }
        }
    }
}

TEST_CASE("Koenigs solve") {
    const auto ctx = testing::context(testing::koenigs(), 6);
    const auto r = solve_normal_form(ctx);
    REQUIRE(r.H.size() == 1);
    CHECK(std::abs(r.H[0].coeff(0, {2}) - 0.4) <= 1e-12);
    CHECK(std::abs(r.H[0].coeff(0, {3}) - 8.0 / 75.0) <= 1e-12);
    CHECK(r.P[0].max_degree() == 1);
    CHECK(r.P[0].coeff(0, {1}) == 0.5);
    CHECK(r.degree_bound == 1);
    CHECK(r.order == 6);
    CHECK(r.diagnostics.size() == 5);
    for (const auto& d : r.diagnostics) {
        CHECK(d.tail_bound < ctx.options().series_tol);
        CHECK(d.full_space);
        CHECK(d.period_ratio <= contraction_factor(ctx.spectrum(), d.degree));
    }
    CHECK(r.conjugacy_defect[0] <= 1e-15);

    // Closed form from the Schroeder recursion at order 4 as a second check.
    const double a = 0.5;
    const double b = 0.1;
    const double h2 = b / (a - a * a);
    const double h3 = 2 * h2 * a * b / (a - a * a * a);
    CHECK(r.H[0].coeff(0, {3}) == doctest::Approx(h3).epsilon(1e-14));

    SUBCASE("budget") {
        SolverOptions o = testing::options(6);
        o.max_series_terms = 3;
        const auto p = testing::prepare(testing::koenigs());
        const SolverContext tight(p.cocycle, p.mono.spectrum, p.frames, o);
        CHECK_THROWS_AS(solve_normal_form(tight), BudgetExhausted);
    }
}

TEST_CASE("resonant term stays in the normal form") {
    const auto ctx = testing::context(testing::resonant2(), 4);
    const auto r = solve_normal_form(ctx);
    CHECK((r.H[0] - PolyMap::identity(ctx.cocycle().space(), 4)).max_abs_coeff() <= 1e-12);
    CHECK((r.P[0] - ctx.cocycle().map(0).with_order(r.P[0].order())).max_abs_coeff() == 0.0);
    CHECK(r.P[0].coeff(0, {0, 2}) == 0.3);
    CHECK(r.diagnostics[0].degree == 2);
    CHECK_FALSE(r.diagnostics[0].full_space);
    CHECK(r.diagnostics[1].full_space);
}

TEST_CASE("non-resonant term is removed") {
    const auto ctx = testing::context(testing::nonresonant2(), 4);
    const auto r = solve_normal_form(ctx);
    const double expect = 0.2 / (std::exp(-0.4) - std::exp(-2.0));
    CHECK(std::abs(r.H[0].coeff(1, {2, 0}) - expect) <= 1e-10);
    CHECK(expect == doctest::Approx(0.373842).epsilon(1e-6));
    CHECK(r.P[0].max_degree() == 1);
    CHECK(r.H[0].coeff(0, {1, 0}) == 1.0);
    CHECK(r.H[0].max_abs_coeff(3, 4) <= 1e-15);
}

TEST_CASE("linear input short-circuits") {
    const GradedSpace space({1, 2});
    Eigen::MatrixXd a = diag({0.1, 0.5, 0.5});
    a(1, 2) = 0.2;
    const OrbitCocycle c(space, {PolyMap::linear(space, space, a, 1), PolyMap::linear(space, space, a, 1)}, true);
    const auto ctx = testing::context(c, 4);
    const auto r = solve_normal_form(ctx);
    for (int k = 0; k < 2; ++k) {
        CHECK((r.H[static_cast<std::size_t>(k)] - PolyMap::identity(ctx.cocycle().space(), 4)).max_abs_coeff() == 0.0);
        CHECK(r.P[static_cast<std::size_t>(k)].linear_part() == ctx.cocycle().linear(k));
        CHECK(r.P[static_cast<std::size_t>(k)].max_degree() == 1);
    }
}

TEST_CASE("normal form invariants on random scenarios") {
    for (int seed = 1; seed <= 12; ++seed) {
        testing::RandomSpec spec;
        spec.points = 1 + seed % 3;
        spec.dim = 2 + seed % 3;
        spec.blocks = 2;
        const std::string name = seed % 2 ? "random_full" : "random_subres";
        const auto ctx = testing::context(testing::builtin(name, static_cast<std::uint64_t>(seed), 4, spec), 4);
        const auto r = solve_normal_form(ctx);
        const GradedSpace& space = ctx.cocycle().space();
        CAPTURE(seed);
        for (int k = 0; k < ctx.points(); ++k) {
            const auto& h = r.H[static_cast<std::size_t>(k)];
            const auto& p = r.P[static_cast<std::size_t>(k)];
            CHECK(h.constant().cwiseAbs().maxCoeff() == 0.0);
            CHECK(h.linear_part() == Eigen::MatrixXd::Identity(space.dim(), space.dim()));
            CHECK(project_subresonance(p, ctx.structure()).n_part.max_abs_coeff() <= 1e-12);
            CHECK(p.order() == std::max(1, ctx.degree_bound()));
            CHECK(r.conjugacy_defect[static_cast<std::size_t>(k)] <= 1e-12);
        }
        for (const auto& d : r.diagnostics) {
            CHECK(d.tail_bound < ctx.options().series_tol);
            CHECK(d.full_space == (d.degree > ctx.degree_bound()));
            if (d.full_space) {
                CHECK(enumerate_types(ctx.spectrum(), d.degree).empty());
            }
        }
        if (name == "random_subres") {
            for (const auto& h : r.H) {
                CHECK((h - PolyMap::identity(space, 4)).max_abs_coeff() <= 1e-12);
            }
        }
    }
}

TEST_CASE("degree-two coefficients are linear in the nonlinearity") {
    testing::RandomSpec spec;
    spec.points = 2;
    spec.dim = 3;
    const auto base = testing::builtin("random_full", 5, 3, spec);
    const auto ref = solve_normal_form(testing::context(base, 3));
    for (double eta : {0.5, 0.1, 1e-3}) {
        const auto r = solve_normal_form(testing::context(scaled_nonlinearity(base, eta), 3));
        for (std::size_t k = 0; k < r.H.size(); ++k) {
            const Eigen::MatrixXd got = r.H[k].homogeneous_block(2);
            const Eigen::MatrixXd want = eta * ref.H[k].homogeneous_block(2);
            CHECK((got - want).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, want.cwiseAbs().maxCoeff()));
        }
    }
}

TEST_CASE("window solve reproduces the periodic solution") {
    const auto ctx = testing::context(testing::koenigs(), 6);
    const auto base = solve_normal_form(ctx);
    const int W = 7;
    std::vector<PolyMap> maps(W, koenigs_map());
    const OrbitCocycle window(GradedSpace::single(1), maps, false);
    const SolverContext wctx(window, ctx.spectrum(), {}, testing::options(6), base.H[0]);
    const auto r = solve_normal_form(wctx);
    REQUIRE(static_cast<int>(r.H.size()) >= W);
    for (int k = 0; k < W; ++k) {
        CHECK((r.H[static_cast<std::size_t>(k)] - base.H[0]).max_abs_coeff() <= 1e-14);
    }
    CHECK_THROWS_AS(SolverContext(window, ctx.spectrum(), {}, testing::options(6)), ValidationError);
}

TEST_CASE("custom lift changes only the S-part") {
    const GradedSpace space({1, 1});
    PolyMap f(space, space, 2);
    f.set_coeff(0, {1, 0}, std::exp(-2.0));
    f.set_coeff(0, {0, 2}, 0.3);
    f.set_coeff(0, {1, 1}, 0.1);
    f.set_coeff(1, {0, 1}, 1.0 / kE);
    f.set_coeff(1, {2, 0}, 0.2);
    const auto p = testing::prepare(OrbitCocycle(space, {f}, true));
    const SolverContext ref(p.cocycle, p.mono.spectrum, p.frames, testing::options(4));
    const SolverContext alt(p.cocycle, p.mono.spectrum, p.frames,
                            testing::options(4, LiftPolicy::custom_transversal, 0.5));
    REQUIRE(ref.degree_bound() == 2);
    const auto a = solve_normal_form(ref);
    const auto b = solve_normal_form(alt);
    const Eigen::MatrixXd diff2 = (a.H[0] - b.H[0]).homogeneous_block(2);
    CHECK(diff2.cwiseProduct(ref.mask(2)).cwiseAbs().maxCoeff() <= 1e-14);
    CHECK(diff2.cwiseAbs().maxCoeff() > 1e-3);
    CHECK(a.H[0].homogeneous_block(2).cwiseProduct(Eigen::MatrixXd::Ones(2, 3) - ref.mask(2)).cwiseAbs().maxCoeff() == 0.0);
    for (const auto* r : {&a, &b}) {
        CHECK(r->conjugacy_defect[0] <= 1e-13);
        CHECK(project_subresonance(r->P[0], ref.structure()).n_part.max_abs_coeff() <= 1e-14);
    }
}

TEST_CASE("conjugacy defect helper") {
    const PolyMap f = koenigs_map();
    const PolyMap id = PolyMap::identity(GradedSpace::single(1), 3);
    const PolyMap lin = PolyMap::univariate({0.0, 0.5});
    CHECK(conjugacy_defect(id, f, lin, id, 3) == doctest::Approx(0.1));
    CHECK(conjugacy_defect(id, f, f, id, 3) == 0.0);
}
