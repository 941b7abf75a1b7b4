#include "subres/monomial_basis.hpp"

#include <map>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <utility>

namespace subres {

namespace {

void fill_compositions(int dim, int remaining, int pos, MultiIndex& current, std::vector<MultiIndex>& out) {
    if (pos == dim - 1) {
        current[static_cast<std::size_t>(pos)] = remaining;
        out.push_back(current);
        return;
    }
    for (int e = remaining; e >= 0; --e) {
        current[static_cast<std::size_t>(pos)] = e;
        fill_compositions(dim, remaining - e, pos + 1, current, out);
    }
}

// Product lookup tables above this many entries are not materialized.
constexpr std::size_t kMaxProductTable = std::size_t{1} << 23;

} // namespace

std::vector<MultiIndex> compositions(int dim, int n) {
    std::vector<MultiIndex> out;
    if (dim <= 0 || n < 0) {
        return out;
    }
    MultiIndex current(static_cast<std::size_t>(dim), 0);
    fill_compositions(dim, n, 0, current, out);
    return out;
}

std::shared_ptr<const MonomialBasis> MonomialBasis::get(int dim, int order) {
    static std::mutex mutex;
    static std::map<std::pair<int, int>, std::shared_ptr<const MonomialBasis>> cache;
    std::lock_guard lock(mutex);
    auto& slot = cache[{dim, order}];
    if (!slot) {
        slot = std::make_shared<const MonomialBasis>(dim, order);
    }
    return slot;
}

MonomialBasis::MonomialBasis(int dim, int order) : dim_(dim), order_(order) {
    if (dim <= 0 || order < 0) {
        throw std::invalid_argument("MonomialBasis: dimension must be positive and order non-negative");
    }
    const auto d = static_cast<std::size_t>(dim);
    offsets_.push_back(0);
    for (int n = 0; n <= order; ++n) {
        for (const auto& alpha : compositions(dim, n)) {
            exponents_.insert(exponents_.end(), alpha.begin(), alpha.end());
            degree_of_.push_back(n);
        }
        offsets_.push_back(degree_of_.size());
    }
    const std::size_t n_mono = degree_of_.size();

    parent_.assign(n_mono, 0);
    parent_var_.assign(n_mono, -1);
    derivative_.assign(n_mono * d, -1);
    MultiIndex tmp(d);
    for (std::size_t k = 1; k < n_mono; ++k) {
        auto e = exponents(k);
        std::copy(e.begin(), e.end(), tmp.begin());
        bool parent_set = false;
        for (std::size_t v = 0; v < d; ++v) {
            if (tmp[v] == 0) {
                continue;
            }
            --tmp[v];
            const auto idx = index_of(tmp);
            ++tmp[v];
            derivative_[k * d + v] = static_cast<std::int32_t>(idx);
            if (!parent_set) {
                parent_[k] = static_cast<std::size_t>(idx);
                parent_var_[k] = static_cast<int>(v);
                parent_set = true;
            }
        }
    }

    if (n_mono * n_mono <= kMaxProductTable) {
        product_.assign(n_mono * n_mono, -1);
        MultiIndex sum(d);
        for (std::size_t a = 0; a < n_mono; ++a) {
            for (std::size_t b = 0; b < n_mono; ++b) {
                if (degree_of_[a] + degree_of_[b] > order_) {
                    continue;
                }
                auto ea = exponents(a);
                auto eb = exponents(b);
                for (std::size_t v = 0; v < d; ++v) {
                    sum[v] = ea[v] + eb[v];
                }
                product_[a * n_mono + b] = static_cast<std::int32_t>(index_of(sum));
            }
        }
    } else {
        throw std::length_error("MonomialBasis: basis too large for dense product table");
    }
}

std::ptrdiff_t MonomialBasis::index_of(std::span<const int> alpha) const {
    if (alpha.size() != static_cast<std::size_t>(dim_)) {
        return -1;
    }
    int n = 0;
    for (int a : alpha) {
        if (a < 0) {
            return -1;
        }
        n += a;
    }
    if (n > order_) {
        return -1;
    }
    // Rank within degree n: count compositions preceding alpha in
    // descending-lexicographic order.
    auto count_comp = [](int vars, int total) -> std::size_t {
        // C(total + vars - 1, vars - 1)
        if (vars <= 0) {
            return total == 0 ? 1 : 0;
        }
        std::size_t r = 1;
        for (int i = 1; i < vars; ++i) {
            r = r * static_cast<std::size_t>(total + i) / static_cast<std::size_t>(i);
        }
        return r;
    };
    std::size_t rank = 0;
    int remaining = n;
    for (int pos = 0; pos < dim_ - 1; ++pos) {
        const int a = alpha[static_cast<std::size_t>(pos)];
        for (int e = remaining; e > a; --e) {
            rank += count_comp(dim_ - pos - 1, remaining - e);
        }
        remaining -= a;
    }
    return static_cast<std::ptrdiff_t>(offsets_[static_cast<std::size_t>(n)] + rank);
}

} // namespace subres
