#include "subres/lyapunov_frame.hpp"

#include <cmath>

#include "subres/errors.hpp"

namespace subres {

LyapunovFrame LyapunovFrame::euclidean(int dim) {
    LyapunovFrame frame;
    frame.basis = Eigen::MatrixXd::Identity(dim, dim);
    frame.block_offsets = {0, dim};
    frame.gram = Eigen::MatrixXd::Identity(dim, dim);
    frame.factor = Eigen::MatrixXd::Identity(dim, dim);
    return frame;
}

LyapunovFrame LyapunovFrame::from_gram(const Eigen::MatrixXd& gram) {
    if (gram.rows() != gram.cols() || gram.rows() == 0) {
        throw DimensionMismatch("gram matrix must be square and non-empty");
    }
    const Eigen::MatrixXd sym = 0.5 * (gram + gram.transpose());
    Eigen::LLT<Eigen::MatrixXd> llt(sym);
    if (llt.info() != Eigen::Success) {
        throw ValidationError("degenerate frame: gram matrix is not positive definite");
    }
    LyapunovFrame frame;
    const auto dim = static_cast<int>(gram.rows());
    frame.basis = Eigen::MatrixXd::Identity(dim, dim);
    frame.block_offsets = {0, dim};
    frame.gram = sym;
    frame.factor = llt.matrixU();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym, Eigen::EigenvaluesOnly);
    frame.k_epsilon = std::sqrt(eig.eigenvalues().maxCoeff());
    return frame;
}

double lyapunov_linear_norm(const Eigen::MatrixXd& map, const LyapunovFrame& src, const LyapunovFrame& dst) {
    if (map.cols() != src.dim() || map.rows() != dst.dim()) {
        throw DimensionMismatch("lyapunov_linear_norm: map does not match frames");
    }
    // |C_dst A C_src^{-1}| in the spectral norm.
    const Eigen::MatrixXd src_inv = src.factor.triangularView<Eigen::Upper>().solve(
        Eigen::MatrixXd::Identity(src.dim(), src.dim()));
    const Eigen::MatrixXd conj = dst.factor * map * src_inv;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(conj);
    return svd.singularValues()(0);
}

} // namespace subres
