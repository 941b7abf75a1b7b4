#include "subres/grading.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "subres/errors.hpp"

namespace subres {

namespace {

double weighted_sum(std::span<const double> exponents, const MultiIndex& s) {
    double acc = 0.0;
    for (std::size_t j = 0; j < s.size(); ++j) {
        acc += static_cast<double>(s[j]) * exponents[j];
    }
    return acc;
}

bool admissible_raw(std::span<const double> exponents, int block, const MultiIndex& s, double tol) {
    return exponents[static_cast<std::size_t>(block)] <= weighted_sum(exponents, s) + tol;
}

void check_exponents(std::span<const double> exponents) {
    if (exponents.empty()) {
        throw ValidationError("spectrum: at least one exponent is required");
    }
    for (std::size_t i = 0; i < exponents.size(); ++i) {
        if (!std::isfinite(exponents[i]) || exponents[i] >= 0.0) {
            throw ValidationError("spectrum: exponents must be finite and strictly negative");
        }
        if (i > 0 && !(exponents[i - 1] < exponents[i])) {
            throw ValidationError("spectrum: exponents must be strictly increasing");
        }
    }
}

int degree_bound_tol(std::span<const double> exponents, double tol) {
    // Largest n with chi_1 <= n chi_l + tol; equals floor(chi_1/chi_l) away
    // from borderline resonances.
    const double ratio = (exponents.front() - tol) / exponents.back();
    return std::max(1, static_cast<int>(std::floor(ratio)));
}

} // namespace

int HomogeneousType::degree() const {
    return std::accumulate(s.begin(), s.end(), 0);
}

int degree_bound(std::span<const double> exponents) {
    check_exponents(exponents);
    return degree_bound_tol(exponents, kDefaultResonanceTol);
}

int degree_bound(const Spectrum& spectrum) {
    return spectrum.degree_bound();
}

std::vector<HomogeneousType> enumerate_types(std::span<const double> exponents, int n, double resonance_tol) {
    check_exponents(exponents);
    std::vector<HomogeneousType> out;
    if (n < 1 || n > degree_bound_tol(exponents, resonance_tol)) {
        return out;
    }
    const int blocks = static_cast<int>(exponents.size());
    const auto comps = compositions(blocks, n);
    for (int i = 0; i < blocks; ++i) {
        for (const auto& s : comps) {
            if (admissible_raw(exponents, i, s, resonance_tol)) {
                out.push_back({i, s});
            }
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<HomogeneousType> enumerate_types(const Spectrum& spectrum, int n) {
    return enumerate_types(spectrum.exponents(), n, spectrum.resonance_tol());
}

double spectral_gap_lambda(std::span<const double> exponents, double resonance_tol) {
    check_exponents(exponents);
    const int blocks = static_cast<int>(exponents.size());
    const double fastest = exponents.front();
    const double slowest = exponents.back();
    double best = -std::numeric_limits<double>::infinity();
    for (int n = 1;; ++n) {
        // Values at degree n are bounded by -chi_1 + n chi_l, which decreases in n.
        if (std::isfinite(best) && -fastest + n * slowest < best) {
            break;
        }
        for (const auto& s : compositions(blocks, n)) {
            const double sum = weighted_sum(exponents, s);
            for (int i = 0; i < blocks; ++i) {
                if (!admissible_raw(exponents, i, s, resonance_tol)) {
                    best = std::max(best, -exponents[static_cast<std::size_t>(i)] + sum);
                }
            }
        }
    }
    return best;
}

double spectral_gap_lambda(const Spectrum& spectrum) {
    return spectrum.lambda();
}

double contraction_factor(double lambda, double epsilon, int n) {
    if (n < 2) {
        throw ValidationError("contraction_factor: degree must be at least 2");
    }
    const double value = std::exp(lambda + (n + 1) * epsilon);
    if (!(value < 1.0)) {
        throw NonContraction(value, n);
    }
    return value;
}

double contraction_factor(const Spectrum& spectrum, int n) {
    return contraction_factor(spectrum.lambda(), spectrum.epsilon(), n);
}

Spectrum::Spectrum(std::vector<double> exponents, std::vector<int> multiplicities, double epsilon,
                   double resonance_tol)
    : exponents_(std::move(exponents)), multiplicities_(std::move(multiplicities)), epsilon_(epsilon),
      resonance_tol_(resonance_tol) {
    check_exponents(exponents_);
    if (multiplicities_.size() != exponents_.size()) {
        throw ValidationError("spectrum: one multiplicity per exponent is required");
    }
    for (int m : multiplicities_) {
        if (m <= 0) {
            throw ValidationError("spectrum: multiplicities must be positive");
        }
    }
    if (!std::isfinite(epsilon_) || epsilon_ <= 0.0) {
        throw ValidationError("spectrum: epsilon must be positive");
    }
    if (!std::isfinite(resonance_tol_) || resonance_tol_ < 0.0) {
        throw ValidationError("spectrum: resonance_tol must be non-negative");
    }

    degree_bound_ = degree_bound_tol(exponents_, resonance_tol_);
    lambda_ = spectral_gap_lambda(exponents_, resonance_tol_);

    if (!(lambda_ + (degree_bound_ + 1) * epsilon_ < 0.0)) {
        std::ostringstream msg;
        msg << "spectrum: contraction budget violated, lambda + (d+1)*epsilon = " << lambda_ << " + "
            << degree_bound_ + 1 << "*" << epsilon_ << " >= 0";
        throw ValidationError(msg.str());
    }

    // resonance_tol must separate the distinct values of chi_i - sum s_j chi_j.
    std::vector<double> values;
    const int blocks = this->blocks();
    for (int n = 1; n <= degree_bound_ + 1; ++n) {
        for (const auto& s : compositions(blocks, n)) {
            const double sum = weighted_sum(exponents_, s);
            for (int i = 0; i < blocks; ++i) {
                values.push_back(exponents_[static_cast<std::size_t>(i)] - sum);
            }
        }
    }
    std::sort(values.begin(), values.end());
    const double scale = std::abs(exponents_.front()) * (degree_bound_ + 1);
    const double same = 64.0 * std::numeric_limits<double>::epsilon() * scale;
    double min_gap = std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k < values.size(); ++k) {
        const double gap = values[k] - values[k - 1];
        if (gap > same) {
            min_gap = std::min(min_gap, gap);
        }
    }
    if (!(resonance_tol_ < min_gap)) {
        std::ostringstream msg;
        msg << "spectrum: resonance_tol " << resonance_tol_ << " is not below the minimal resonance gap "
            << min_gap;
        throw ValidationError(msg.str());
    }
}

int Spectrum::dimension() const noexcept {
    return std::accumulate(multiplicities_.begin(), multiplicities_.end(), 0);
}

bool Spectrum::admissible(const HomogeneousType& type) const {
    if (type.block < 0 || type.block >= blocks() || type.s.size() != exponents_.size()) {
        return false;
    }
    return admissible_raw(exponents_, type.block, type.s, resonance_tol_);
}

Spectrum Spectrum::with_epsilon(double epsilon) const {
    return Spectrum(exponents_, multiplicities_, epsilon, resonance_tol_);
}

SubResStructure::SubResStructure(const Spectrum& spectrum)
    : exponents_(spectrum.exponents()), block_dims_(spectrum.multiplicities()),
      degree_bound_(spectrum.degree_bound()), lambda_(spectrum.lambda()) {
    types_.resize(static_cast<std::size_t>(degree_bound_) + 1);
    for (int n = 1; n <= degree_bound_; ++n) {
        types_[static_cast<std::size_t>(n)] = enumerate_types(spectrum, n);
    }
}

const std::vector<HomogeneousType>& SubResStructure::types(int n) const {
    static const std::vector<HomogeneousType> empty;
    if (n < 1 || n > degree_bound_) {
        return empty;
    }
    return types_[static_cast<std::size_t>(n)];
}

bool SubResStructure::admissible(const HomogeneousType& type) const {
    const auto& set = types(type.degree());
    return std::binary_search(set.begin(), set.end(), type);
}

} // namespace subres
