#include "subres/cocycle.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "subres/errors.hpp"

namespace subres {

OrbitCocycle::OrbitCocycle(GradedSpace space, std::vector<PolyMap> maps, bool periodic)
    : space_(std::move(space)), maps_(std::move(maps)), periodic_(periodic) {
    if (maps_.empty()) {
        throw ValidationError("cocycle needs at least one fiber map");
    }
    for (std::size_t k = 0; k < maps_.size(); ++k) {
        const PolyMap& f = maps_[k];
        if (!(f.source() == space_) || !(f.target() == space_)) {
            throw DimensionMismatch("fiber map " + std::to_string(k) + " does not act on the cocycle space");
        }
        if (f.constant().cwiseAbs().maxCoeff() != 0.0) {
            throw ValidationError("fiber map " + std::to_string(k) + " does not preserve the zero section");
        }
        if (!f.has_invertible_linear_part()) {
            throw SingularLinearPart("fiber map " + std::to_string(k) + " has a singular linear part");
        }
        linear_.push_back(f.linear_part());
        linear_inv_.push_back(linear_.back().fullPivLu().inverse());
    }
}

int OrbitCocycle::wrap(int k) const {
    const int n = length();
    if (periodic_) {
        return ((k % n) + n) % n;
    }
    if (k < 0 || k >= n) {
        throw ValidationError("point index " + std::to_string(k) + " outside the orbit window");
    }
    return k;
}

int OrbitCocycle::max_order() const {
    int order = 1;
    for (const auto& f : maps_) {
        order = std::max(order, f.order());
    }
    return order;
}

Eigen::MatrixXd OrbitCocycle::linear_power(int start, int n) const {
    Eigen::MatrixXd acc = Eigen::MatrixXd::Identity(dim(), dim());
    if (n >= 0) {
        for (int j = 0; j < n; ++j) {
            acc = linear(start + j) * acc;
        }
    } else {
        for (int j = 1; j <= -n; ++j) {
            acc = linear_inverse(start - j) * acc;
        }
    }
    return acc;
}

Eigen::MatrixXd OrbitCocycle::monodromy(int start) const {
    if (!periodic_) {
        throw ValidationError("monodromy requires a periodic cocycle");
    }
    return linear_power(start, length());
}

namespace {

// Orthonormalize columns keeping their span and order; positive R diagonal.
Eigen::MatrixXd orthonormalize(const Eigen::MatrixXd& cols) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(cols);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(cols.rows(), cols.cols());
    const Eigen::MatrixXd r = qr.matrixQR().topRows(cols.cols()).triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < cols.cols(); ++j) {
        if (r(j, j) < 0.0) {
            q.col(j) = -q.col(j);
        }
    }
    return q;
}

// Canonical orthonormal basis of span(u): pivot on the dominant coordinates
// so that coordinate-aligned subspaces give coordinate vectors.
Eigen::MatrixXd canonical_basis(const Eigen::MatrixXd& u) {
    const Eigen::Index k = u.cols();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(u.transpose());
    const auto& perm = qr.colsPermutation().indices();
    Eigen::MatrixXd pivot_rows(k, k);
    for (Eigen::Index j = 0; j < k; ++j) {
        pivot_rows.row(j) = u.row(perm(j));
    }
    std::vector<Eigen::Index> order(static_cast<std::size_t>(k));
    for (Eigen::Index j = 0; j < k; ++j) {
        order[static_cast<std::size_t>(j)] = perm(j);
    }
    Eigen::MatrixXd echelon = u * pivot_rows.inverse();
    // Sort columns by their pivot coordinate so the basis follows coordinate order.
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(k));
    for (Eigen::Index j = 0; j < k; ++j) {
        idx[static_cast<std::size_t>(j)] = j;
    }
    std::sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
        return order[static_cast<std::size_t>(a)] < order[static_cast<std::size_t>(b)];
    });
    Eigen::MatrixXd sorted(u.rows(), k);
    for (Eigen::Index j = 0; j < k; ++j) {
        sorted.col(j) = echelon.col(idx[static_cast<std::size_t>(j)]);
    }
    return orthonormalize(sorted);
}

struct EigenCluster {
    double log_modulus = 0.0;
    std::vector<std::complex<double>> members;
};

} // namespace

MonodromySpectrum monodromy_spectrum(const OrbitCocycle& cocycle, double epsilon, double resonance_tol,
                                     double cluster_tol) {
    if (!cocycle.periodic()) {
        throw ValidationError("monodromy_spectrum requires a periodic cocycle");
    }
    const int K = cocycle.length();
    const int m = cocycle.dim();
    const Eigen::MatrixXd mono = cocycle.monodromy(0);
    Eigen::EigenSolver<Eigen::MatrixXd> solver(mono, false);
    if (solver.info() != Eigen::Success) {
        throw NonContractingMonodromy("eigenvalue computation failed");
    }
    std::vector<std::pair<double, std::complex<double>>> eig;
    for (Eigen::Index j = 0; j < m; ++j) {
        const std::complex<double> mu = solver.eigenvalues()(j);
        const double modulus = std::abs(mu);
        if (!(modulus < 1.0)) {
            std::ostringstream msg;
            msg << "non-contracting monodromy: eigenvalue modulus " << modulus << " >= 1";
            throw NonContractingMonodromy(msg.str());
        }
        eig.emplace_back(std::log(modulus) / K, mu);
    }
    std::sort(eig.begin(), eig.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

    std::vector<EigenCluster> clusters;
    for (const auto& [value, mu] : eig) {
        if (!clusters.empty()) {
            auto& last = clusters.back();
            const double ref = last.log_modulus;
            const double gap = value - ref;
            const double scale = std::max(1.0, std::abs(ref));
            if (gap <= cluster_tol * scale) {
                last.members.push_back(mu);
                continue;
            }
            if (gap <= 1e3 * cluster_tol * scale) {
                std::ostringstream msg;
                msg << "defective clustering: log-modulus gap " << gap << " is within the ambiguity band";
                throw DefectiveClustering(msg.str());
            }
        }
        clusters.push_back({value, {mu}});
    }
    std::vector<double> exponents;
    std::vector<int> dims;
    std::vector<double> log_moduli;
    for (auto& c : clusters) {
        double acc = 0.0;
        for (const auto& mu : c.members) {
            acc += std::log(std::abs(mu)) / K;
            log_moduli.push_back(std::log(std::abs(mu)) / K);
        }
        c.log_modulus = acc / static_cast<double>(c.members.size());
        exponents.push_back(c.log_modulus);
        dims.push_back(static_cast<int>(c.members.size()));
    }

    Spectrum spectrum(exponents, dims, epsilon, resonance_tol);

    // Generalized eigenspace of cluster c: range of prod over the other
    // eigenvalues of (M - mu), with conjugate pairs as real quadratics.
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(m, m);
    Eigen::MatrixXd basis0(m, m);
    int col = 0;
    for (std::size_t c = 0; c < clusters.size(); ++c) {
        Eigen::MatrixXd proj = eye;
        for (std::size_t o = 0; o < clusters.size(); ++o) {
            if (o == c) {
                continue;
            }
            for (const auto& mu : clusters[o].members) {
                const double im_tol = 1e-12 * std::abs(mu);
                if (mu.imag() < -im_tol) {
                    continue;
                }
                Eigen::MatrixXd factor;
                if (mu.imag() > im_tol) {
                    factor = mono * mono - 2.0 * mu.real() * mono + std::norm(mu) * eye;
                } else {
                    factor = mono - mu.real() * eye;
                }
                proj = factor * proj;
                const double norm = proj.norm();
                if (norm > 0.0) {
                    proj /= norm;
                }
            }
        }
        const int k = dims[c];
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(proj, Eigen::ComputeFullU);
        basis0.middleCols(col, k) = canonical_basis(svd.matrixU().leftCols(k));
        col += k;
    }

    Splitting splitting;
    splitting.block_dims = dims;
    splitting.bases.resize(static_cast<std::size_t>(K));
    splitting.bases[0] = basis0;
    for (int k = 1; k < K; ++k) {
        const Eigen::MatrixXd pushed = cocycle.linear(k - 1) * splitting.bases[static_cast<std::size_t>(k - 1)];
        Eigen::MatrixXd next(m, m);
        int offset = 0;
        for (int d : dims) {
            next.middleCols(offset, d) = orthonormalize(pushed.middleCols(offset, d));
            offset += d;
        }
        splitting.bases[static_cast<std::size_t>(k)] = next;
    }
    return {std::move(spectrum), std::move(splitting), std::move(log_moduli)};
}

std::vector<double> finite_time_exponents(const OrbitCocycle& cocycle, int horizon) {
    if (horizon <= 0) {
        throw ValidationError("finite_time_exponents: horizon must be positive");
    }
    if (!cocycle.periodic() && horizon > cocycle.length()) {
        throw ValidationError("finite_time_exponents: horizon exceeds the orbit window");
    }
    const int m = cocycle.dim();
    Eigen::MatrixXd q = Eigen::MatrixXd::Identity(m, m);
    Eigen::VectorXd sums = Eigen::VectorXd::Zero(m);
    for (int step = 0; step < horizon; ++step) {
        const Eigen::MatrixXd z = cocycle.linear(step) * q;
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(z);
        Eigen::MatrixXd qn = qr.householderQ() * Eigen::MatrixXd::Identity(m, m);
        const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
        for (int j = 0; j < m; ++j) {
            sums(j) += std::log(std::abs(r(j, j)));
            if (r(j, j) < 0.0) {
                qn.col(j) = -qn.col(j);
            }
        }
        q = qn;
    }
    std::vector<double> out(sums.data(), sums.data() + m);
    for (auto& v : out) {
        v /= horizon;
    }
    std::sort(out.begin(), out.end());
    return out;
}

bool is_block_aligned(const Splitting& splitting, const GradedSpace& space, double tol) {
    if (splitting.block_dims != space.block_dims()) {
        return false;
    }
    for (const auto& basis : splitting.bases) {
        for (Eigen::Index c = 0; c < basis.cols(); ++c) {
            const int block = space.block_of(static_cast<int>(c));
            for (Eigen::Index r = 0; r < basis.rows(); ++r) {
                if (space.block_of(static_cast<int>(r)) != block && std::abs(basis(r, c)) > tol) {
                    return false;
                }
            }
        }
    }
    return true;
}

OrbitCocycle adapt_to_splitting(const OrbitCocycle& cocycle, const Splitting& splitting) {
    if (!cocycle.periodic() || static_cast<int>(splitting.bases.size()) != cocycle.length()) {
        throw ValidationError("adapt_to_splitting: needs a periodic cocycle and one basis per point");
    }
    const GradedSpace adapted(splitting.block_dims);
    if (adapted.dim() != cocycle.dim()) {
        throw DimensionMismatch("adapt_to_splitting: splitting dimension mismatch");
    }
    const GradedSpace flat = cocycle.space();
    std::vector<PolyMap> maps;
    for (int k = 0; k < cocycle.length(); ++k) {
        const Eigen::MatrixXd& b_here = splitting.bases[static_cast<std::size_t>(k)];
        const Eigen::MatrixXd b_next_inv =
            splitting.bases[static_cast<std::size_t>(cocycle.wrap(k + 1))].fullPivLu().inverse();
        const int order = cocycle.map(k).order();
        const PolyMap into = PolyMap::linear(adapted, flat, b_here, order);
        const PolyMap out = PolyMap::linear(flat, adapted, b_next_inv, order);
        maps.push_back(compose_truncated(out, compose_truncated(cocycle.map(k), into, order), order));
    }
    return OrbitCocycle(adapted, std::move(maps), true);
}

namespace {

struct BlockTail {
    int forward_terms = 0;
    int backward_terms = 0;
    double bound = 0.0;
};

double spectral_norm(const Eigen::MatrixXd& a) {
    if (a.size() == 0) {
        return 0.0;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
    return svd.singularValues()(0);
}

// Certify the one-sided series sum_n |C^(n)|^2 e^{-eps n} for normalized
// single-step block maps `steps` (one per point of the period). Returns the
// number of terms needed and the tail bound.
std::pair<int, double> certify_side(const std::vector<Eigen::MatrixXd>& steps, double epsilon,
                                    int period, double tail_tol, int dim_factor) {
    constexpr int kMaxTerms = 2'000'000;
    const Eigen::Index bdim = steps.front().rows();
    auto normalized_power = [&](int count) {
        Eigen::MatrixXd acc = Eigen::MatrixXd::Identity(bdim, bdim);
        for (int j = 0; j < count; ++j) {
            acc = steps[static_cast<std::size_t>(j % period)] * acc;
        }
        return acc;
    };
    const Eigen::MatrixXd one_period = normalized_power(period);
    Eigen::MatrixXd block_power = one_period;
    for (int p = 1; static_cast<long>(p) * period <= kMaxTerms; p *= 2) {
        if (p > 1) {
            block_power = block_power * block_power;
        }
        const double span = static_cast<double>(p) * period;
        const double rho = std::pow(spectral_norm(block_power), 2) * std::exp(-epsilon * span);
        if (!(rho < 1.0)) {
            continue;
        }
        // c = max over r < p*period of |C^(r)|^2 e^{-eps r}.
        double c = 0.0;
        Eigen::MatrixXd acc = Eigen::MatrixXd::Identity(bdim, bdim);
        for (int r = 0; r < p * period; ++r) {
            c = std::max(c, std::pow(spectral_norm(acc), 2) * std::exp(-epsilon * r));
            acc = steps[static_cast<std::size_t>(r % period)] * acc;
        }
        const double lead = dim_factor * span * c / (1.0 - rho);
        int q = 1;
        if (lead > tail_tol) {
            q = static_cast<int>(std::ceil(std::log(tail_tol / lead) / std::log(rho)));
            q = std::max(q, 1);
        }
        const long terms = static_cast<long>(q) * p * period;
        if (terms > kMaxTerms) {
            break;
        }
        return {static_cast<int>(terms), lead * std::pow(rho, q)};
    }
    throw TailCertificationFailure("Lyapunov series tail could not be certified; epsilon too small for the "
                                   "block spectral spread");
}

} // namespace

std::vector<LyapunovFrame> lyapunov_frames(const OrbitCocycle& cocycle, const Spectrum& spectrum,
                                           const Splitting& splitting, double tail_tol) {
    if (!cocycle.periodic()) {
        throw ValidationError("lyapunov_frames requires a periodic cocycle");
    }
    const int K = cocycle.length();
    const int m = cocycle.dim();
    if (splitting.block_dims != spectrum.multiplicities() || static_cast<int>(splitting.bases.size()) != K) {
        throw DimensionMismatch("lyapunov_frames: splitting does not match spectrum or orbit");
    }
    const double eps = spectrum.epsilon();
    const int blocks = spectrum.blocks();
    std::vector<int> offsets{0};
    for (int d : splitting.block_dims) {
        offsets.push_back(offsets.back() + d);
    }

    // Restricted block maps C_{k,i} = V_{k+1,i}^T A_k V_{k,i}, normalized by e^{-chi_i}.
    std::vector<std::vector<Eigen::MatrixXd>> fwd(static_cast<std::size_t>(blocks));
    std::vector<std::vector<Eigen::MatrixXd>> bwd(static_cast<std::size_t>(blocks));
    for (int i = 0; i < blocks; ++i) {
        const double chi = spectrum.exponents()[static_cast<std::size_t>(i)];
        const int off = offsets[static_cast<std::size_t>(i)];
        const int d = splitting.block_dims[static_cast<std::size_t>(i)];
        for (int k = 0; k < K; ++k) {
            const Eigen::MatrixXd vk = splitting.bases[static_cast<std::size_t>(k)].middleCols(off, d);
            const Eigen::MatrixXd vn =
                splitting.bases[static_cast<std::size_t>(cocycle.wrap(k + 1))].middleCols(off, d);
            const Eigen::MatrixXd c = vn.transpose() * cocycle.linear(k) * vk;
            fwd[static_cast<std::size_t>(i)].push_back(c * std::exp(-chi));
            bwd[static_cast<std::size_t>(i)].push_back(c.inverse() * std::exp(chi));
        }
    }

    std::vector<LyapunovFrame> frames;
    for (int x = 0; x < K; ++x) {
        Eigen::MatrixXd block_gram = Eigen::MatrixXd::Zero(m, m);
        int horizon_f = 0;
        int horizon_b = 0;
        double tail = 0.0;
        for (int i = 0; i < blocks; ++i) {
            const auto ui = static_cast<std::size_t>(i);
            const int off = offsets[ui];
            const int d = splitting.block_dims[ui];
            // Steps along the forward orbit from x, and backward steps from x.
            std::vector<Eigen::MatrixXd> f_steps;
            std::vector<Eigen::MatrixXd> b_steps;
            for (int j = 0; j < K; ++j) {
                f_steps.push_back(fwd[ui][static_cast<std::size_t>(cocycle.wrap(x + j))]);
                b_steps.push_back(bwd[ui][static_cast<std::size_t>(cocycle.wrap(x - 1 - j))]);
            }
            const auto [nf, tf] = certify_side(f_steps, eps, K, 0.5 * tail_tol, m);
            const auto [nb, tb] = certify_side(b_steps, eps, K, 0.5 * tail_tol, m);
            horizon_f = std::max(horizon_f, nf);
            horizon_b = std::max(horizon_b, nb);
            tail = std::max(tail, tf + tb);

            Eigen::MatrixXd gamma = Eigen::MatrixXd::Identity(d, d);
            Eigen::MatrixXd acc = Eigen::MatrixXd::Identity(d, d);
            for (int n = 1; n < nf; ++n) {
                acc = f_steps[static_cast<std::size_t>((n - 1) % K)] * acc;
                gamma += std::exp(-eps * n) * acc.transpose() * acc;
            }
            acc.setIdentity();
            for (int n = 1; n < nb; ++n) {
                acc = b_steps[static_cast<std::size_t>((n - 1) % K)] * acc;
                gamma += std::exp(-eps * n) * acc.transpose() * acc;
            }
            block_gram.block(off, off, d, d) = static_cast<double>(m) * gamma;
        }
        const Eigen::MatrixXd& basis = splitting.bases[static_cast<std::size_t>(x)];
        const Eigen::MatrixXd basis_inv = basis.fullPivLu().inverse();
        const Eigen::MatrixXd gram = basis_inv.transpose() * block_gram * basis_inv;
        LyapunovFrame frame = LyapunovFrame::from_gram(gram);
        frame.basis = basis;
        frame.block_offsets = offsets;
        frame.horizon_forward = horizon_f;
        frame.horizon_backward = horizon_b;
        frame.tail_bound = tail;
        frames.push_back(std::move(frame));
    }
    return frames;
}

double sandwich_check(const OrbitCocycle& cocycle, const std::vector<LyapunovFrame>& frames,
                      const Spectrum& spectrum, int trials, int horizon, std::uint64_t seed) {
    const int K = cocycle.length();
    if (static_cast<int>(frames.size()) != K) {
        throw DimensionMismatch("sandwich_check: one frame per orbit point is required");
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    const double eps = spectrum.epsilon();
    double worst = 0.0;
    for (int trial = 0; trial < trials; ++trial) {
        const int x = trial % K;
        const LyapunovFrame& fx = frames[static_cast<std::size_t>(x)];
        for (int i = 0; i < spectrum.blocks(); ++i) {
            const int off = fx.block_offsets[static_cast<std::size_t>(i)];
            const int d = fx.block_offsets[static_cast<std::size_t>(i) + 1] - off;
            Eigen::VectorXd a(d);
            for (int j = 0; j < d; ++j) {
                a(j) = normal(rng);
            }
            const Eigen::VectorXd u = fx.basis.middleCols(off, d) * a;
            const double base = fx.norm(u);
            const double chi = spectrum.exponents()[static_cast<std::size_t>(i)];
            for (int n = -horizon; n <= horizon; ++n) {
                const Eigen::VectorXd v = cocycle.linear_power(x, n) * u;
                const double moved = frames[static_cast<std::size_t>(cocycle.wrap(x + n))].norm(v);
                const double lo = std::exp(n * chi - eps * std::abs(n)) * base;
                const double hi = std::exp(n * chi + eps * std::abs(n)) * base;
                worst = std::max(worst, lo / moved - 1.0);
                worst = std::max(worst, moved / hi - 1.0);
            }
        }
    }
    return std::max(worst, 0.0);
}

TemperedReport k_epsilon_growth_check(const std::vector<LyapunovFrame>& frames, double epsilon, int horizon) {
    TemperedReport report;
    const int K = static_cast<int>(frames.size());
    for (int x = 0; x < K; ++x) {
        const double kx = frames[static_cast<std::size_t>(x)].k_epsilon;
        for (int n = 1; n <= horizon; ++n) {
            const double ky = frames[static_cast<std::size_t>((x + n) % K)].k_epsilon;
            const double slack = std::exp(epsilon * n);
            report.max_violation = std::max(report.max_violation, ky / (kx * slack) - 1.0);
            report.max_violation = std::max(report.max_violation, kx / (ky * slack) - 1.0);
        }
    }
    report.pass = report.max_violation <= 1e-12;
    report.max_violation = std::max(report.max_violation, 0.0);
    return report;
}

} // namespace subres
