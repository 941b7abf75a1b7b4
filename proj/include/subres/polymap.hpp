#pragma once

#include <initializer_list>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "subres/grading.hpp"
#include "subres/lyapunov_frame.hpp"
#include "subres/monomial_basis.hpp"

namespace subres {

/// Coordinate space split into consecutive blocks; block 0 pairs with the
/// fastest exponent.
class GradedSpace {
public:
    GradedSpace() = default;
    explicit GradedSpace(std::vector<int> block_dims);
    /// A single block of dimension `dim`.
    static GradedSpace single(int dim) { return GradedSpace({dim}); }

    int dim() const noexcept { return dim_; }
    int blocks() const noexcept { return static_cast<int>(block_dims_.size()); }
    const std::vector<int>& block_dims() const noexcept { return block_dims_; }
    int block_of(int coord) const { return block_of_.at(static_cast<std::size_t>(coord)); }
    int block_offset(int block) const { return offsets_.at(static_cast<std::size_t>(block)); }

    friend bool operator==(const GradedSpace& a, const GradedSpace& b) { return a.block_dims_ == b.block_dims_; }

private:
    std::vector<int> block_dims_;
    std::vector<int> block_of_;
    std::vector<int> offsets_;
    int dim_ = 0;
};

/// Truncated polynomial map between graded spaces.
///
/// Coefficients are stored densely as a (target dim) x (basis size) matrix
/// over the graded monomial basis of the source; column 0 is the constant
/// term. Stored coefficients are treated as an exact polynomial.
class PolyMap {
public:
    PolyMap() = default;
    /// Zero map of the given order.
    PolyMap(GradedSpace source, GradedSpace target, int order);

    static PolyMap identity(const GradedSpace& space, int order);
    static PolyMap linear(const GradedSpace& source, const GradedSpace& target, const Eigen::MatrixXd& matrix,
                          int order);
    /// Scalar polynomial sum_k coeffs[k] t^k on a one-dimensional space.
    static PolyMap univariate(std::initializer_list<double> coeffs);

    const GradedSpace& source() const noexcept { return source_; }
    const GradedSpace& target() const noexcept { return target_; }
    int order() const noexcept { return order_; }
    const MonomialBasis& basis() const noexcept { return *basis_; }

    const Eigen::MatrixXd& coefficients() const noexcept { return coeffs_; }
    Eigen::MatrixXd& coefficients() noexcept { return coeffs_; }

    double coeff(int target_index, std::span<const int> alpha) const;
    void set_coeff(int target_index, std::span<const int> alpha, double value);
    double coeff(int target_index, std::initializer_list<int> alpha) const {
        return coeff(target_index, std::span<const int>(alpha.begin(), alpha.size()));
    }
    void set_coeff(int target_index, std::initializer_list<int> alpha, double value) {
        set_coeff(target_index, std::span<const int>(alpha.begin(), alpha.size()), value);
    }

    Eigen::VectorXd constant() const { return coeffs_.col(0); }
    Eigen::MatrixXd linear_part() const;
    bool has_invertible_linear_part() const;

    /// Degree-n coefficient block, (target dim) x count(n); zero beyond the order.
    Eigen::MatrixXd homogeneous_block(int n) const;
    void set_homogeneous_block(int n, const Eigen::MatrixXd& block);
    PolyMap homogeneous_part(int n) const;
    /// Terms of degree lo..hi only, same order.
    PolyMap degree_range(int lo, int hi) const;
    /// Reorder to a new truncation order (dropping or zero-padding terms).
    PolyMap with_order(int order) const;
    /// Highest degree with a nonzero coefficient (-1 for the zero map).
    int max_degree() const;

    HomogeneousType type_of(int target_index, std::size_t monomial) const;

    Eigen::VectorXd evaluate(const Eigen::VectorXd& t) const;
    Eigen::MatrixXd jacobian(const Eigen::VectorXd& t) const;

    /// Max |coefficient| over degrees lo..hi.
    double max_abs_coeff(int lo, int hi) const;
    double max_abs_coeff() const { return max_abs_coeff(0, order_); }

    PolyMap& operator+=(const PolyMap& other);
    PolyMap& operator-=(const PolyMap& other);
    PolyMap& operator*=(double factor);
    friend PolyMap operator+(PolyMap a, const PolyMap& b) { return a += b; }
    friend PolyMap operator-(PolyMap a, const PolyMap& b) { return a -= b; }
    friend PolyMap operator*(double f, PolyMap a) { return a *= f; }

private:
    void check_same_shape(const PolyMap& other) const;

    GradedSpace source_;
    GradedSpace target_;
    int order_ = 0;
    std::shared_ptr<const MonomialBasis> basis_;
    Eigen::MatrixXd coeffs_;
};

/// Taylor coefficients of P o Q through total degree M.
PolyMap compose_truncated(const PolyMap& outer, const PolyMap& inner, int order);

/// Degree-by-degree reversion: R with P o R = Id through degree M.
/// Throws SingularLinearPart when the linear part is not invertible.
PolyMap invert_truncated(const PolyMap& map, int order);

struct SubResSplit {
    PolyMap s_part;
    PolyMap n_part;
};

/// Term-by-term split into sub-resonance and non sub-resonance parts.
/// Constant terms carry no type and are kept in the S-part.
SubResSplit project_subresonance(const PolyMap& map, const SubResStructure& structure);

/// (target dim) x count(n) mask with 1 on non sub-resonance monomials.
Eigen::MatrixXd nonresonance_mask(const GradedSpace& source, const GradedSpace& target, int n,
                                  const SubResStructure& structure);

/// Matrix S with (R o L) = R S^T on degree-n coefficient blocks.
Eigen::MatrixXd substitution_matrix(const Eigen::MatrixXd& linear, int n);

struct OpnormOptions {
    int samples = 4096;
    int refinement_steps = 3;
    int refined_candidates = 8;
};

/// Sup of |P(u)|_dst over |u|_src = 1 for a homogeneous P. Exact (singular
/// values) for degree one; sphere sampling plus local ascent otherwise.
double lyapunov_opnorm(const PolyMap& map, const LyapunovFrame& src, const LyapunovFrame& dst,
                       const OpnormOptions& options = {});

} // namespace subres
