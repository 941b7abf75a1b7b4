#pragma once

#include <span>
#include <vector>

#include "subres/monomial_basis.hpp"

namespace subres {

/// Homogeneous type of a polynomial term: target block `block` (0-based)
/// and per-block degrees `s`.
struct HomogeneousType {
    int block = 0;
    MultiIndex s;

    int degree() const;
    friend bool operator==(const HomogeneousType&, const HomogeneousType&) = default;
    friend auto operator<=>(const HomogeneousType&, const HomogeneousType&) = default;
};

inline constexpr double kDefaultResonanceTol = 1e-9;

/// Lyapunov spectrum chi_1 < ... < chi_l < 0 with block multiplicities and
/// the regularization parameter epsilon.
///
/// Construction validates the spectrum, the contraction budget
/// lambda + (d+1) epsilon < 0, and that resonance_tol is below the smallest
/// gap between distinct values of chi_i - sum s_j chi_j up to degree d+1.
class Spectrum {
public:
    Spectrum(std::vector<double> exponents, std::vector<int> multiplicities, double epsilon,
             double resonance_tol = kDefaultResonanceTol);

    const std::vector<double>& exponents() const noexcept { return exponents_; }
    const std::vector<int>& multiplicities() const noexcept { return multiplicities_; }
    double epsilon() const noexcept { return epsilon_; }
    double resonance_tol() const noexcept { return resonance_tol_; }

    int blocks() const noexcept { return static_cast<int>(exponents_.size()); }
    int dimension() const noexcept;
    int degree_bound() const noexcept { return degree_bound_; }
    double lambda() const noexcept { return lambda_; }

    /// chi_block <= sum s_j chi_j + resonance_tol.
    bool admissible(const HomogeneousType& type) const;

    /// The same spectrum with another epsilon (re-validated).
    Spectrum with_epsilon(double epsilon) const;

private:
    std::vector<double> exponents_;
    std::vector<int> multiplicities_;
    double epsilon_;
    double resonance_tol_;
    int degree_bound_;
    double lambda_;
};

/// floor(chi_1 / chi_l).
int degree_bound(std::span<const double> exponents);
int degree_bound(const Spectrum& spectrum);

/// Admissible (sub-resonance) types of total degree n, sorted.
std::vector<HomogeneousType> enumerate_types(std::span<const double> exponents, int n,
                                             double resonance_tol = kDefaultResonanceTol);
std::vector<HomogeneousType> enumerate_types(const Spectrum& spectrum, int n);

/// Maximum of -chi_i + sum s_j chi_j over non-admissible types.
double spectral_gap_lambda(std::span<const double> exponents, double resonance_tol = kDefaultResonanceTol);
double spectral_gap_lambda(const Spectrum& spectrum);

/// e^{lambda + (n+1) eps}; throws NonContraction when the value is >= 1.
double contraction_factor(double lambda, double epsilon, int n);
double contraction_factor(const Spectrum& spectrum, int n);

/// Sub-resonance structure: admissible types per degree up to d, and lambda.
class SubResStructure {
public:
    explicit SubResStructure(const Spectrum& spectrum);

    int degree_bound() const noexcept { return degree_bound_; }
    double lambda() const noexcept { return lambda_; }
    const std::vector<double>& exponents() const noexcept { return exponents_; }
    const std::vector<int>& block_dims() const noexcept { return block_dims_; }

    /// Admissible types of degree n (empty for n > d or n < 1).
    const std::vector<HomogeneousType>& types(int n) const;
    bool admissible(const HomogeneousType& type) const;

private:
    std::vector<double> exponents_;
    std::vector<int> block_dims_;
    int degree_bound_;
    double lambda_;
    std::vector<std::vector<HomogeneousType>> types_;
};

} // namespace subres
