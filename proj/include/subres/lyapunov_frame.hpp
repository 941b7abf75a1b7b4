#pragma once

#include <vector>

#include <Eigen/Dense>

namespace subres {

/// Epsilon-Lyapunov metric at one orbit point.
///
/// `basis` holds the Oseledets blocks as grouped columns (block i occupies
/// columns block_offsets[i] .. block_offsets[i+1]-1). `gram` is the Lyapunov
/// inner product in standard coordinates, `factor` an upper-triangular C
/// with gram = C^T C, so that |u|_x = |C u|.
struct LyapunovFrame {
    Eigen::MatrixXd basis;
    std::vector<int> block_offsets;
    Eigen::MatrixXd gram;
    Eigen::MatrixXd factor;
    double k_epsilon = 1.0;
    int horizon_forward = 0;
    int horizon_backward = 0;
    double tail_bound = 0.0;

    /// Euclidean frame of dimension m (gram = identity, K = 1).
    static LyapunovFrame euclidean(int dim);
    /// Frame from an arbitrary symmetric positive definite Gram matrix.
    /// Throws ValidationError when the matrix is not positive definite.
    static LyapunovFrame from_gram(const Eigen::MatrixXd& gram);

    int dim() const noexcept { return static_cast<int>(gram.rows()); }
    double norm(const Eigen::VectorXd& u) const { return (factor * u).norm(); }
};

/// Operator norm of a linear map between two Lyapunov metrics.
double lyapunov_linear_norm(const Eigen::MatrixXd& map, const LyapunovFrame& src, const LyapunovFrame& dst);

} // namespace subres
