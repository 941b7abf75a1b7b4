// Randomized algebraic properties of the polynomial layer and serializers.
#include <cmath>
#include <random>

#include "doctest.h"

#include "subres/polymap.hpp"
#include "subres/serialize.hpp"
#include "support.hpp"

using namespace subres;

namespace {

GradedSpace random_space(std::mt19937_64& rng, int max_dim) {
    std::uniform_int_distribution<int> dim_pick(1, max_dim);
    const int m = dim_pick(rng);
    std::vector<int> blocks;
    int left = m;
    while (left > 0) {
        std::uniform_int_distribution<int> take(1, left);
        blocks.push_back(take(rng));
        left -= blocks.back();
    }
    return GradedSpace(blocks);
}

PolyMap unit_linear_map(const GradedSpace& space, int order, std::mt19937_64& rng) {
    PolyMap p = testing::random_map(space, order, 2, order, 0.5, rng);
    return p + PolyMap::identity(space, order);
}

} // namespace

TEST_CASE("truncated inverse round trip") {
    std::mt19937_64 rng(101);
    for (int trial = 0; trial < 60; ++trial) {
        const GradedSpace space = random_space(rng, 4);
        const int M = 2 + trial % 4;
        const PolyMap p = unit_linear_map(space, M, rng);
        const PolyMap r = invert_truncated(p, M);
        const PolyMap id = PolyMap::identity(space, M);
        CHECK((compose_truncated(r, p, M) - id).max_abs_coeff() <= 1e-10);
        CHECK((compose_truncated(p, r, M) - id).max_abs_coeff() <= 1e-10);
    }
}

TEST_CASE("composition is associative under truncation") {
    std::mt19937_64 rng(103);
    for (int trial = 0; trial < 30; ++trial) {
        const GradedSpace space = random_space(rng, 3);
        const int M = 2 + trial % 3;
        const PolyMap a = testing::random_map(space, M, 1, M, 0.7, rng);
        const PolyMap b = testing::random_map(space, M, 1, M, 0.7, rng);
        const PolyMap c = testing::random_map(space, M, 1, M, 0.7, rng);
        const PolyMap left = compose_truncated(compose_truncated(a, b, M), c, M);
        const PolyMap right = compose_truncated(a, compose_truncated(b, c, M), M);
        CHECK((left - right).max_abs_coeff() <= 1e-12);
    }
}

TEST_CASE("sub-resonance maps form a group") {
    std::mt19937_64 rng(107);
    const std::vector<std::pair<std::vector<double>, std::vector<int>>> spectra{
        {{-2.0, -1.0}, {1, 1}}, {{-2.0, -1.0}, {1, 2}}, {{-3.0, -1.4, -1.0}, {1, 1, 1}}, {{-2.5, -1.2}, {2, 2}}};
    for (const auto& [chi, mult] : spectra) {
        const Spectrum spectrum(chi, mult, 0.01);
        const SubResStructure st(spectrum);
        const GradedSpace space(mult);
        const int d = st.degree_bound();
        for (int trial = 0; trial < 10; ++trial) {
            // Invertible flag-preserving linear part: unit diagonal plus admissible terms.
            auto sub = [&] {
                PolyMap p = project_subresonance(testing::random_map(space, d, 1, d, 0.5, rng), st).s_part;
                return p + PolyMap::identity(space, d);
            };
            const PolyMap a = sub();
            const PolyMap b = sub();
            CHECK(project_subresonance(compose_truncated(a, b, d), st).n_part.max_abs_coeff() <= 1e-12);
            CHECK(project_subresonance(invert_truncated(a, d), st).n_part.max_abs_coeff() <= 1e-12);
        }
    }
}

TEST_CASE("homogeneous norm is submultiplicative under linear substitution") {
    std::mt19937_64 rng(109);
    for (int trial = 0; trial < 12; ++trial) {
        const int m = 1 + trial % 3;
        const GradedSpace space = GradedSpace::single(m);
        const int n = 2 + trial % 2;
        const PolyMap r = testing::random_map(space, n, n, n, 1.0, rng).homogeneous_part(n);
        const Eigen::MatrixXd a = Eigen::MatrixXd::Random(m, m);
        const PolyMap lin = PolyMap::linear(space, space, a, n);
        const auto e = LyapunovFrame::euclidean(m);
        const double lhs = lyapunov_opnorm(compose_truncated(r, lin, n), e, e);
        const double rhs = lyapunov_opnorm(r, e, e) * std::pow(lyapunov_opnorm(lin.homogeneous_part(1), e, e), n);
        // Both sides are sampled; allow a small sampling slack.
        CHECK(lhs <= rhs * 1.02);
    }
}

TEST_CASE("truncated composition error has order M+1") {
    std::mt19937_64 rng(113);
    const std::vector<double> radii{1e-1, 1e-2, 1e-3};
    for (int trial = 0; trial < 12; ++trial) {
        const GradedSpace space = random_space(rng, 3);
        const int M = 2 + trial % 2;
        const PolyMap p = unit_linear_map(space, M + 1, rng);
        const PolyMap q = unit_linear_map(space, M + 1, rng);
        const PolyMap c = compose_truncated(p, q, M);
        std::vector<double> lx;
        std::vector<double> ly;
        for (double r : radii) {
            std::mt19937_64 dir(7);
            std::normal_distribution<double> n;
            double worst = 0.0;
            for (int s = 0; s < 64; ++s) {
                Eigen::VectorXd u(space.dim());
                for (Eigen::Index i = 0; i < u.size(); ++i) {
                    u(i) = n(dir);
                }
                const Eigen::VectorXd t = r * u.normalized();
                worst = std::max(worst, (c.evaluate(t) - p.evaluate(q.evaluate(t))).norm());
            }
            lx.push_back(std::log(r));
            ly.push_back(std::log(worst));
        }
        const double mx = (lx[0] + lx[1] + lx[2]) / 3;
        const double my = (ly[0] + ly[1] + ly[2]) / 3;
        double num = 0.0;
        double den = 0.0;
        for (int i = 0; i < 3; ++i) {
            num += (lx[static_cast<std::size_t>(i)] - mx) * (ly[static_cast<std::size_t>(i)] - my);
            den += (lx[static_cast<std::size_t>(i)] - mx) * (lx[static_cast<std::size_t>(i)] - mx);
        }
        CAPTURE(trial);
        CHECK(num / den >= M + 0.9);
    }
}

TEST_CASE("evaluation is linear in the coefficients") {
    std::mt19937_64 rng(127);
    for (int trial = 0; trial < 20; ++trial) {
        const GradedSpace space = random_space(rng, 4);
        const PolyMap a = testing::random_map(space, 3, 1, 3, 1.0, rng);
        const PolyMap b = testing::random_map(space, 3, 1, 3, 1.0, rng);
        const Eigen::VectorXd t = Eigen::VectorXd::Random(space.dim());
        const Eigen::VectorXd lhs = (a + 2.5 * b).evaluate(t);
        const Eigen::VectorXd rhs = a.evaluate(t) + 2.5 * b.evaluate(t);
        CHECK((lhs - rhs).norm() <= 1e-13);
    }
}

TEST_CASE("serialization round trips exactly") {
    std::mt19937_64 rng(131);
    for (int trial = 0; trial < 20; ++trial) {
        const GradedSpace space = random_space(rng, 4);
        const PolyMap p = unit_linear_map(space, 1 + trial % 4, rng);
        const Json j = to_json(p);
        const PolyMap back = polymap_from_json(Json::parse(dump(j)));
        CHECK(back.order() == p.order());
        CHECK(back.source() == p.source());
        CHECK((back - p).max_abs_coeff() == 0.0);
    }
    const auto c = testing::builtin("random_full", 4);
    const auto back = cocycle_from_json(Json::parse(dump(to_json(c))));
    CHECK(back.length() == c.length());
    CHECK(back.periodic());
    for (int k = 0; k < c.length(); ++k) {
        CHECK((back.map(k) - c.map(k)).max_abs_coeff() == 0.0);
    }
}
