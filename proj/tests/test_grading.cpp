#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"

#include "subres/errors.hpp"
#include "subres/grading.hpp"
#include "subres/monomial_basis.hpp"

using namespace subres;

namespace {

std::vector<HomogeneousType> types_of(std::initializer_list<double> chi, int n) {
    const std::vector<double> v(chi);
    return enumerate_types(v, n);
}

// Independent brute force: max of -chi_i + sum s_j chi_j over non-admissible
// types with |s| up to a generous bound (values fall linearly in |s|).
double brute_lambda(const std::vector<double>& chi, double tol = kDefaultResonanceTol) {
    const int l = static_cast<int>(chi.size());
    const int bound = static_cast<int>(std::ceil((std::abs(chi.front()) + 1.0) / std::abs(chi.back()))) + 2;
    double best = -INFINITY;
    for (int n = 1; n <= bound; ++n) {
        for (const auto& s : compositions(l, n)) {
            double sum = 0.0;
            for (int j = 0; j < l; ++j) {
                sum += s[static_cast<std::size_t>(j)] * chi[static_cast<std::size_t>(j)];
            }
            for (int i = 0; i < l; ++i) {
                if (!(chi[static_cast<std::size_t>(i)] <= sum + tol)) {
                    best = std::max(best, -chi[static_cast<std::size_t>(i)] + sum);
                }
            }
        }
    }
    return best;
}

} // namespace

TEST_CASE("degree bound examples") {
    CHECK(degree_bound(std::vector<double>{-2.0, -1.0}) == 2);
    CHECK(degree_bound(std::vector<double>{-1.0}) == 1);
    CHECK(degree_bound(std::vector<double>{-3.5, -1.2, -1.0}) == 3);
}

TEST_CASE("enumerate types examples") {
    const auto t1 = types_of({-2.0, -1.0}, 1);
    const std::vector<HomogeneousType> want1{{0, {0, 1}}, {0, {1, 0}}, {1, {0, 1}}};
    CHECK(t1 == want1);

    const auto t2 = types_of({-2.0, -1.0}, 2);
    const std::vector<HomogeneousType> want2{{0, {0, 2}}};
    CHECK(t2 == want2);

    CHECK(types_of({-1.0}, 2).empty());
}

TEST_CASE("spectral gap lambda examples") {
    CHECK(spectral_gap_lambda(std::vector<double>{-2.0, -1.0}) == doctest::Approx(-1.0).epsilon(1e-14));
    CHECK(spectral_gap_lambda(std::vector<double>{-1.0}) == doctest::Approx(-1.0).epsilon(1e-14));
    CHECK(spectral_gap_lambda(std::vector<double>{-1.0, -0.4}) == doctest::Approx(-0.2).epsilon(1e-12));
}

TEST_CASE("contraction factor examples") {
    const Spectrum s({-2.0, -1.0}, {1, 1}, 0.05);
    CHECK(contraction_factor(s, 2) == doctest::Approx(std::exp(-0.85)).epsilon(1e-14));
    CHECK(contraction_factor(s, 2) == doctest::Approx(0.427415).epsilon(1e-6));
    CHECK(contraction_factor(-1.0, 0.0, 2) == doctest::Approx(0.367879).epsilon(1e-6));

    SUBCASE("non-contraction is signalled") {
        const double lambda = spectral_gap_lambda(std::vector<double>{-1.0, -0.4});
        try {
            contraction_factor(lambda, 0.1, 2);
            FAIL("expected NonContraction");
        } catch (const NonContraction& e) {
            CHECK(e.value() == doctest::Approx(std::exp(0.1)).epsilon(1e-12));
            CHECK(e.degree() == 2);
        }
        CHECK_THROWS_AS(Spectrum({-1.0, -0.4}, {1, 1}, 0.1), ValidationError);
    }
}

TEST_CASE("spectrum validation") {
    CHECK_THROWS_AS(Spectrum({-1.0, -2.0}, {1, 1}, 0.01), ValidationError);
    CHECK_THROWS_AS(Spectrum({-1.0, 0.5}, {1, 1}, 0.01), ValidationError);
    CHECK_THROWS_AS(Spectrum({-2.0, -1.0}, {1}, 0.01), ValidationError);
    CHECK_THROWS_AS(Spectrum({-2.0, -1.0}, {1, 0}, 0.01), ValidationError);
    CHECK_THROWS_AS(Spectrum({-2.0, -1.0}, {1, 1}, -0.01), ValidationError);
    // A tolerance as wide as the gap between relation values is rejected.
    CHECK_THROWS_AS(Spectrum({-2.0, -1.0}, {1, 1}, 0.01, 1.5), ValidationError);

    const Spectrum s({-2.0, -1.0}, {2, 1}, 0.01);
    CHECK(s.dimension() == 3);
    CHECK(s.degree_bound() == 2);
    CHECK(s.lambda() == doctest::Approx(-1.0));
    CHECK(s.with_epsilon(0.2).epsilon() == 0.2);
    CHECK_THROWS_AS(s.with_epsilon(0.4), ValidationError);
}

TEST_CASE("exact resonance survives rounding") {
    // chi_1 = 2 chi_2 up to the last bit.
    const double chi2 = -0.7;
    const std::vector<double> chi{2.0 * chi2 * (1.0 + 1e-15), chi2};
    const auto t = enumerate_types(chi, 2);
    REQUIRE(t.size() == 1);
    CHECK(t[0] == HomogeneousType{0, {0, 2}});
}

TEST_CASE("sub-resonance structure") {
    const Spectrum s({-2.0, -1.0}, {1, 1}, 0.05);
    const SubResStructure st(s);
    CHECK(st.degree_bound() == 2);
    CHECK(st.lambda() == doctest::Approx(-1.0));
    CHECK(st.types(2).size() == 1);
    CHECK(st.types(3).empty());
    CHECK(st.types(0).empty());
    CHECK(st.admissible({0, {0, 2}}));
    CHECK_FALSE(st.admissible({1, {2, 0}}));
    CHECK_FALSE(st.admissible({1, {1, 0}}));
}

TEST_CASE("type properties on random spectra") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-3.0, -0.5);
    for (int trial = 0; trial < 40; ++trial) {
        std::vector<double> chi;
        const int l = 1 + trial % 3;
        for (int i = 0; i < l; ++i) {
            chi.push_back(u(rng));
        }
        std::sort(chi.begin(), chi.end());
        chi.erase(std::unique(chi.begin(), chi.end()), chi.end());
        const int d = degree_bound(chi);
        CAPTURE(trial);

        for (int n = 1; n <= d; ++n) {
            for (const auto& t : enumerate_types(chi, n)) {
                for (int j = 0; j < t.block; ++j) {
                    CHECK(t.s[static_cast<std::size_t>(j)] == 0);
                }
            }
        }
        for (int n = d + 1; n <= d + 3; ++n) {
            CHECK(enumerate_types(chi, n).empty());
        }
        CHECK(spectral_gap_lambda(chi) == doctest::Approx(brute_lambda(chi)).epsilon(1e-12));
        CHECK(spectral_gap_lambda(chi) < 0.0);

        // Positive rescaling leaves d and the admissible sets alone.
        std::vector<double> scaled;
        for (double c : chi) {
            scaled.push_back(2.7 * c);
        }
        CHECK(degree_bound(scaled) == d);
        for (int n = 1; n <= d; ++n) {
            CHECK(enumerate_types(scaled, n) == enumerate_types(chi, n));
        }
    }
}
