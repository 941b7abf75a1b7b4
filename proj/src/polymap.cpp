#include "subres/polymap.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "subres/errors.hpp"

namespace subres {

GradedSpace::GradedSpace(std::vector<int> block_dims) : block_dims_(std::move(block_dims)) {
    if (block_dims_.empty()) {
        throw ValidationError("graded space needs at least one block");
    }
    for (int b = 0; b < static_cast<int>(block_dims_.size()); ++b) {
        const int m = block_dims_[static_cast<std::size_t>(b)];
        if (m <= 0) {
            throw ValidationError("graded space block dimensions must be positive");
        }
        offsets_.push_back(dim_);
        for (int k = 0; k < m; ++k) {
            block_of_.push_back(b);
        }
        dim_ += m;
    }
    offsets_.push_back(dim_);
}

PolyMap::PolyMap(GradedSpace source, GradedSpace target, int order)
    : source_(std::move(source)), target_(std::move(target)), order_(order) {
    if (order_ < 0) {
        throw ValidationError("PolyMap order must be non-negative");
    }
    if (source_.dim() == 0 || target_.dim() == 0) {
        throw ValidationError("PolyMap spaces must be non-empty");
    }
    basis_ = MonomialBasis::get(source_.dim(), order_);
    coeffs_ = Eigen::MatrixXd::Zero(target_.dim(), static_cast<Eigen::Index>(basis_->size()));
}

PolyMap PolyMap::identity(const GradedSpace& space, int order) {
    return linear(space, space, Eigen::MatrixXd::Identity(space.dim(), space.dim()), order);
}

PolyMap PolyMap::linear(const GradedSpace& source, const GradedSpace& target, const Eigen::MatrixXd& matrix,
                        int order) {
    if (matrix.rows() != target.dim() || matrix.cols() != source.dim()) {
        throw DimensionMismatch("PolyMap::linear: matrix shape does not match spaces");
    }
    PolyMap out(source, target, std::max(order, 1));
    out.coeffs_.middleCols(1, source.dim()) = matrix;
    return out;
}

PolyMap PolyMap::univariate(std::initializer_list<double> coeffs) {
    const int order = std::max(1, static_cast<int>(coeffs.size()) - 1);
    PolyMap out(GradedSpace::single(1), GradedSpace::single(1), order);
    int k = 0;
    for (double c : coeffs) {
        out.coeffs_(0, k++) = c;
    }
    return out;
}

double PolyMap::coeff(int target_index, std::span<const int> alpha) const {
    const auto idx = basis_->index_of(alpha);
    if (alpha.size() != static_cast<std::size_t>(source_.dim())) {
        throw DimensionMismatch("multi-index length does not match source dimension");
    }
    if (idx < 0) {
        return 0.0;
    }
    return coeffs_(target_index, idx);
}

void PolyMap::set_coeff(int target_index, std::span<const int> alpha, double value) {
    if (alpha.size() != static_cast<std::size_t>(source_.dim())) {
        throw DimensionMismatch("multi-index length does not match source dimension");
    }
    const auto idx = basis_->index_of(alpha);
    if (idx < 0) {
        throw ValidationError("multi-index exceeds the truncation order");
    }
    coeffs_(target_index, idx) = value;
}

Eigen::MatrixXd PolyMap::linear_part() const {
    if (order_ < 1) {
        return Eigen::MatrixXd::Zero(target_.dim(), source_.dim());
    }
    return coeffs_.middleCols(1, source_.dim());
}

bool PolyMap::has_invertible_linear_part() const {
    if (source_.dim() != target_.dim()) {
        return false;
    }
    const Eigen::MatrixXd lin = linear_part();
    Eigen::FullPivLU<Eigen::MatrixXd> lu(lin);
    lu.setThreshold(1e-13);
    return lu.isInvertible();
}

Eigen::MatrixXd PolyMap::homogeneous_block(int n) const {
    const auto count = compositions(source_.dim(), n).size();
    if (n > order_) {
        return Eigen::MatrixXd::Zero(target_.dim(), static_cast<Eigen::Index>(count));
    }
    return coeffs_.middleCols(static_cast<Eigen::Index>(basis_->offset(n)), static_cast<Eigen::Index>(count));
}

void PolyMap::set_homogeneous_block(int n, const Eigen::MatrixXd& block) {
    if (n > order_ || n < 0) {
        throw ValidationError("set_homogeneous_block: degree outside the truncation order");
    }
    const auto count = static_cast<Eigen::Index>(basis_->count(n));
    if (block.rows() != target_.dim() || block.cols() != count) {
        throw DimensionMismatch("set_homogeneous_block: block shape mismatch");
    }
    coeffs_.middleCols(static_cast<Eigen::Index>(basis_->offset(n)), count) = block;
}

PolyMap PolyMap::homogeneous_part(int n) const {
    return degree_range(n, n);
}

PolyMap PolyMap::degree_range(int lo, int hi) const {
    PolyMap out(source_, target_, order_);
    lo = std::max(lo, 0);
    hi = std::min(hi, order_);
    if (lo <= hi) {
        const auto begin = static_cast<Eigen::Index>(basis_->offset(lo));
        const auto end = static_cast<Eigen::Index>(basis_->offset(hi + 1));
        out.coeffs_.middleCols(begin, end - begin) = coeffs_.middleCols(begin, end - begin);
    }
    return out;
}

PolyMap PolyMap::with_order(int order) const {
    PolyMap out(source_, target_, order);
    const auto shared = std::min(out.coeffs_.cols(), coeffs_.cols());
    out.coeffs_.leftCols(shared) = coeffs_.leftCols(shared);
    return out;
}

int PolyMap::max_degree() const {
    for (int n = order_; n >= 0; --n) {
        const auto begin = static_cast<Eigen::Index>(basis_->offset(n));
        const auto count = static_cast<Eigen::Index>(basis_->count(n));
        if (coeffs_.middleCols(begin, count).cwiseAbs().maxCoeff() > 0.0) {
            return n;
        }
    }
    return -1;
}

HomogeneousType PolyMap::type_of(int target_index, std::size_t monomial) const {
    HomogeneousType type;
    type.block = target_.block_of(target_index);
    type.s.assign(static_cast<std::size_t>(source_.blocks()), 0);
    const auto e = basis_->exponents(monomial);
    for (int v = 0; v < source_.dim(); ++v) {
        type.s[static_cast<std::size_t>(source_.block_of(v))] += e[static_cast<std::size_t>(v)];
    }
    return type;
}

namespace {

Eigen::VectorXd monomial_values(const MonomialBasis& basis, const Eigen::VectorXd& t) {
    Eigen::VectorXd values(static_cast<Eigen::Index>(basis.size()));
    values(0) = 1.0;
    for (std::size_t k = 1; k < basis.size(); ++k) {
        values(static_cast<Eigen::Index>(k)) =
            values(static_cast<Eigen::Index>(basis.parent(k))) * t(basis.parent_var(k));
    }
    return values;
}

} // namespace

Eigen::VectorXd PolyMap::evaluate(const Eigen::VectorXd& t) const {
    if (t.size() != source_.dim()) {
        throw DimensionMismatch("evaluate: point dimension does not match source");
    }
    return coeffs_ * monomial_values(*basis_, t);
}

Eigen::MatrixXd PolyMap::jacobian(const Eigen::VectorXd& t) const {
    if (t.size() != source_.dim()) {
        throw DimensionMismatch("jacobian: point dimension does not match source");
    }
    const Eigen::VectorXd values = monomial_values(*basis_, t);
    const int dim = source_.dim();
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(target_.dim(), dim);
    for (std::size_t k = 1; k < basis_->size(); ++k) {
        const auto e = basis_->exponents(k);
        for (int v = 0; v < dim; ++v) {
            const auto d = basis_->derivative(k, v);
            if (d < 0) {
                continue;
            }
            const double factor = e[static_cast<std::size_t>(v)] * values(d);
            jac.col(v) += factor * coeffs_.col(static_cast<Eigen::Index>(k));
        }
    }
    return jac;
}

double PolyMap::max_abs_coeff(int lo, int hi) const {
    lo = std::max(lo, 0);
    hi = std::min(hi, order_);
    if (lo > hi) {
        return 0.0;
    }
    const auto begin = static_cast<Eigen::Index>(basis_->offset(lo));
    const auto end = static_cast<Eigen::Index>(basis_->offset(hi + 1));
    if (end == begin) {
        return 0.0;
    }
    return coeffs_.middleCols(begin, end - begin).cwiseAbs().maxCoeff();
}

void PolyMap::check_same_shape(const PolyMap& other) const {
    if (!(source_ == other.source_) || !(target_ == other.target_)) {
        throw DimensionMismatch("PolyMap arithmetic: spaces differ");
    }
}

PolyMap& PolyMap::operator+=(const PolyMap& other) {
    check_same_shape(other);
    if (other.order_ > order_) {
        *this = with_order(other.order_);
    }
    coeffs_.leftCols(other.coeffs_.cols()) += other.coeffs_;
    return *this;
}

PolyMap& PolyMap::operator-=(const PolyMap& other) {
    check_same_shape(other);
    if (other.order_ > order_) {
        *this = with_order(other.order_);
    }
    coeffs_.leftCols(other.coeffs_.cols()) -= other.coeffs_;
    return *this;
}

PolyMap& PolyMap::operator*=(double factor) {
    coeffs_ *= factor;
    return *this;
}

namespace {

// Truncated product of two series over the same basis, skipping zeros of a.
void series_multiply(const MonomialBasis& basis, const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b,
                     std::vector<std::size_t>& b_support, Eigen::RowVectorXd& out) {
    out.setZero();
    b_support.clear();
    for (Eigen::Index j = 0; j < b.size(); ++j) {
        if (b(j) != 0.0) {
            b_support.push_back(static_cast<std::size_t>(j));
        }
    }
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        const double ai = a(i);
        if (ai == 0.0) {
            continue;
        }
        for (std::size_t j : b_support) {
            const auto idx = basis.product(static_cast<std::size_t>(i), j);
            if (idx >= 0) {
                out(idx) += ai * b(static_cast<Eigen::Index>(j));
            }
        }
    }
}

} // namespace

PolyMap compose_truncated(const PolyMap& outer, const PolyMap& inner, int order) {
    if (!(inner.target() == outer.source())) {
        throw DimensionMismatch("compose_truncated: inner target does not match outer source");
    }
    if (order < 0) {
        throw ValidationError("compose_truncated: negative order");
    }
    PolyMap result(inner.source(), outer.target(), order);
    const MonomialBasis& out_basis = result.basis();
    const auto out_size = static_cast<Eigen::Index>(out_basis.size());

    // Inner components as series over the output basis (bases are prefixes
    // of one another, so truncation is a column slice).
    const int inner_dim = inner.target().dim();
    std::vector<Eigen::RowVectorXd> components(static_cast<std::size_t>(inner_dim),
                                               Eigen::RowVectorXd::Zero(out_size));
    const auto shared = std::min(out_size, inner.coefficients().cols());
    for (int j = 0; j < inner_dim; ++j) {
        components[static_cast<std::size_t>(j)].leftCols(shared) = inner.coefficients().row(j).leftCols(shared);
    }

    const bool centered = inner.constant().cwiseAbs().maxCoeff() == 0.0;
    const MonomialBasis& outer_basis = outer.basis();
    const int top_degree = centered ? std::min(outer.order(), order) : outer.order();
    const auto outer_count = static_cast<Eigen::Index>(outer_basis.offset(top_degree + 1));

    Eigen::MatrixXd values = Eigen::MatrixXd::Zero(outer_count, out_size);
    values(0, 0) = 1.0;
    std::vector<std::size_t> support;
    Eigen::RowVectorXd scratch(out_size);
    for (Eigen::Index k = 1; k < outer_count; ++k) {
        const auto uk = static_cast<std::size_t>(k);
        const auto parent = static_cast<Eigen::Index>(outer_basis.parent(uk));
        series_multiply(out_basis, values.row(parent), components[static_cast<std::size_t>(outer_basis.parent_var(uk))],
                        support, scratch);
        values.row(k) = scratch;
    }
    result.coefficients() = outer.coefficients().leftCols(outer_count) * values;
    return result;
}

PolyMap invert_truncated(const PolyMap& map, int order) {
    if (!(map.source() == map.target())) {
        throw DimensionMismatch("invert_truncated: source and target differ");
    }
    if (map.constant().cwiseAbs().maxCoeff() != 0.0) {
        throw ValidationError("invert_truncated: map must fix the origin");
    }
    if (!map.has_invertible_linear_part()) {
        throw SingularLinearPart("invert_truncated: singular linear part");
    }
    const Eigen::MatrixXd lin_inv = map.linear_part().fullPivLu().inverse();
    const GradedSpace& space = map.source();
    PolyMap result = PolyMap::linear(space, space, lin_inv, std::max(order, 1));
    if (order < 1) {
        return result.with_order(order);
    }
    for (int n = 2; n <= order; ++n) {
        const PolyMap defect = compose_truncated(map, result, n);
        const Eigen::MatrixXd err = defect.homogeneous_block(n);
        result.set_homogeneous_block(n, result.homogeneous_block(n) - lin_inv * err);
    }
    return result;
}

Eigen::MatrixXd nonresonance_mask(const GradedSpace& source, const GradedSpace& target, int n,
                                  const SubResStructure& structure) {
    if (source.block_dims() != structure.block_dims() || target.block_dims() != structure.block_dims()) {
        throw DimensionMismatch("grading does not match the sub-resonance structure");
    }
    const auto comps = compositions(source.dim(), n);
    Eigen::MatrixXd mask = Eigen::MatrixXd::Zero(target.dim(), static_cast<Eigen::Index>(comps.size()));
    for (std::size_t k = 0; k < comps.size(); ++k) {
        HomogeneousType type;
        type.s.assign(static_cast<std::size_t>(source.blocks()), 0);
        for (int v = 0; v < source.dim(); ++v) {
            type.s[static_cast<std::size_t>(source.block_of(v))] += comps[k][static_cast<std::size_t>(v)];
        }
        for (int i = 0; i < target.dim(); ++i) {
            type.block = target.block_of(i);
            if (!structure.admissible(type)) {
                mask(i, static_cast<Eigen::Index>(k)) = 1.0;
            }
        }
    }
    return mask;
}

SubResSplit project_subresonance(const PolyMap& map, const SubResStructure& structure) {
    SubResSplit split{map, PolyMap(map.source(), map.target(), map.order())};
    for (int n = 1; n <= map.order(); ++n) {
        const Eigen::MatrixXd mask = nonresonance_mask(map.source(), map.target(), n, structure);
        const Eigen::MatrixXd block = map.homogeneous_block(n);
        const Eigen::MatrixXd n_block = block.cwiseProduct(mask);
        split.n_part.set_homogeneous_block(n, n_block);
        split.s_part.set_homogeneous_block(n, block - n_block);
    }
    return split;
}

Eigen::MatrixXd substitution_matrix(const Eigen::MatrixXd& linear, int n) {
    if (linear.rows() != linear.cols()) {
        throw DimensionMismatch("substitution_matrix: linear map must be square");
    }
    const auto dim = static_cast<int>(linear.rows());
    const auto basis = MonomialBasis::get(dim, n);
    const auto size = static_cast<Eigen::Index>(basis->size());
    std::vector<Eigen::RowVectorXd> rows(static_cast<std::size_t>(dim), Eigen::RowVectorXd::Zero(size));
    for (int i = 0; i < dim; ++i) {
        rows[static_cast<std::size_t>(i)].segment(1, dim) = linear.row(i);
    }
    Eigen::MatrixXd values = Eigen::MatrixXd::Zero(size, size);
    values(0, 0) = 1.0;
    std::vector<std::size_t> support;
    Eigen::RowVectorXd scratch(size);
    for (Eigen::Index k = 1; k < size; ++k) {
        const auto uk = static_cast<std::size_t>(k);
        series_multiply(*basis, values.row(static_cast<Eigen::Index>(basis->parent(uk))),
                        rows[static_cast<std::size_t>(basis->parent_var(uk))], support, scratch);
        values.row(k) = scratch;
    }
    const auto begin = static_cast<Eigen::Index>(basis->offset(n));
    const auto count = static_cast<Eigen::Index>(basis->count(n));
    // values(k, j): coefficient of monomial j in (L t)^{alpha_k}.
    return values.block(begin, begin, count, count).transpose();
}

namespace {

std::vector<Eigen::VectorXd> sphere_samples(int dim, int samples) {
    std::vector<Eigen::VectorXd> points;
    if (dim == 1) {
        points.push_back(Eigen::VectorXd::Constant(1, 1.0));
        points.push_back(Eigen::VectorXd::Constant(1, -1.0));
        return points;
    }
    if (dim == 2) {
        for (int k = 0; k < samples; ++k) {
            const double angle = 2.0 * std::numbers::pi * k / samples;
            Eigen::VectorXd p(2);
            p << std::cos(angle), std::sin(angle);
            points.push_back(p);
        }
        return points;
    }
    std::mt19937_64 rng(0x5eed5eedULL);
    std::normal_distribution<double> normal;
    for (int k = 0; k < samples; ++k) {
        Eigen::VectorXd p(dim);
        for (int j = 0; j < dim; ++j) {
            p(j) = normal(rng);
        }
        const double r = p.norm();
        if (r > 0.0) {
            points.push_back(p / r);
        }
    }
    return points;
}

} // namespace

double lyapunov_opnorm(const PolyMap& map, const LyapunovFrame& src, const LyapunovFrame& dst,
                       const OpnormOptions& options) {
    if (src.dim() != map.source().dim() || dst.dim() != map.target().dim()) {
        throw DimensionMismatch("lyapunov_opnorm: frames do not match the map");
    }
    const int n = map.max_degree();
    if (n <= 0) {
        if (n == 0) {
            throw ValidationError("lyapunov_opnorm: map must be homogeneous of positive degree");
        }
        return 0.0;
    }
    if (map.degree_range(0, n - 1).max_abs_coeff() != 0.0) {
        throw ValidationError("lyapunov_opnorm: map must be homogeneous");
    }
    for (const auto* frame : {&src, &dst}) {
        Eigen::LLT<Eigen::MatrixXd> llt(frame->gram);
        if (llt.info() != Eigen::Success) {
            throw ValidationError("degenerate frame: gram matrix is not positive definite");
        }
    }
    if (n == 1) {
        return lyapunov_linear_norm(map.linear_part(), src, dst);
    }

    const int dim = src.dim();
    const Eigen::MatrixXd src_inv =
        src.factor.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(dim, dim));
    auto value = [&](const Eigen::VectorXd& w) { return (dst.factor * map.evaluate(src_inv * w)).norm(); };

    auto points = sphere_samples(dim, options.samples);
    std::vector<std::pair<double, std::size_t>> ranked;
    ranked.reserve(points.size());
    for (std::size_t k = 0; k < points.size(); ++k) {
        ranked.emplace_back(value(points[k]), k);
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        return a.first > b.first || (a.first == b.first && a.second < b.second);
    });
    double best = ranked.empty() ? 0.0 : ranked.front().first;
    if (dim == 1) {
        return best;
    }

    const auto candidates = std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(options.refined_candidates));
    for (std::size_t c = 0; c < candidates; ++c) {
        Eigen::VectorXd w = points[ranked[c].second];
        double current = ranked[c].first;
        for (int step = 0; step < options.refinement_steps; ++step) {
            const Eigen::VectorXd u = src_inv * w;
            const Eigen::VectorXd y = dst.factor * map.evaluate(u);
            Eigen::VectorXd grad = src_inv.transpose() * (map.jacobian(u).transpose() * (dst.factor.transpose() * y));
            grad -= grad.dot(w) * w;
            const double gnorm = grad.norm();
            if (gnorm == 0.0) {
                break;
            }
            const Eigen::VectorXd dir = grad / gnorm;
            bool improved = false;
            for (double eta = 0.1; eta > 1e-6; eta *= 0.3) {
                Eigen::VectorXd trial = (w + eta * dir).normalized();
                const double v = value(trial);
                if (v > current) {
                    w = trial;
                    current = v;
                    improved = true;
                    break;
                }
            }
            if (!improved) {
                break;
            }
        }
        best = std::max(best, current);
    }
    return best;
}

} // namespace subres
