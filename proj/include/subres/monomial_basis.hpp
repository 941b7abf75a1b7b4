#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

namespace subres {

using MultiIndex = std::vector<int>;

/// Graded monomial basis in `dim` variables up to total degree `order`.
///
/// Monomials are laid out degree by degree; within a degree they follow
/// lexicographic order on the exponent vector, largest first, so the
/// degree-one monomials are t_0, t_1, ... in coordinate order. Index 0 is
/// the constant monomial.
class MonomialBasis {
public:
    /// Shared, cached basis. Safe to call concurrently.
    static std::shared_ptr<const MonomialBasis> get(int dim, int order);

    MonomialBasis(int dim, int order);

    int dim() const noexcept { return dim_; }
    int order() const noexcept { return order_; }
    std::size_t size() const noexcept { return degree_of_.size(); }

    /// First index of the monomials of total degree n.
    std::size_t offset(int n) const { return offsets_.at(static_cast<std::size_t>(n)); }
    /// Number of monomials of total degree exactly n.
    std::size_t count(int n) const {
        return offsets_.at(static_cast<std::size_t>(n) + 1) - offsets_.at(static_cast<std::size_t>(n));
    }

    int degree(std::size_t k) const { return degree_of_[k]; }
    std::span<const int> exponents(std::size_t k) const {
        return {exponents_.data() + k * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_)};
    }

    /// Index of a multi-index, or -1 if its degree exceeds the order.
    std::ptrdiff_t index_of(std::span<const int> alpha) const;

    /// Index of the product monomial, -1 when the degree exceeds the order.
    std::int32_t product(std::size_t a, std::size_t b) const {
        return product_[a * size() + b];
    }

    /// For k > 0: a monomial p and variable v with monomial k = p * t_v.
    std::size_t parent(std::size_t k) const { return parent_[k]; }
    int parent_var(std::size_t k) const { return parent_var_[k]; }

    /// Index of d/dt_v of monomial k (with multiplier exponent_v), -1 if zero.
    std::int32_t derivative(std::size_t k, int v) const {
        return derivative_[k * static_cast<std::size_t>(dim_) + static_cast<std::size_t>(v)];
    }

private:
    int dim_;
    int order_;
    std::vector<std::size_t> offsets_;
    std::vector<int> degree_of_;
    std::vector<int> exponents_;
    std::vector<std::int32_t> product_;
    std::vector<std::size_t> parent_;
    std::vector<int> parent_var_;
    std::vector<std::int32_t> derivative_;
};

/// All exponent vectors of `dim` variables with total degree n, in basis order.
std::vector<MultiIndex> compositions(int dim, int n);

} // namespace subres
