#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "sdebridge/errors.hpp"

namespace sdebridge {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112353;

/// One Gaussian proposal step: N(mean, cov). cov is kept symmetric; tiny
/// negative curvature is clamped at factorisation time.
struct GaussianStep {
    VectorXd mean;
    MatrixXd cov;
};

inline MatrixXd symmetrized(const MatrixXd& m) { return 0.5 * (m + m.transpose()); }

/// Lower-triangular factor L with L L' = v. Pivots in [-tol*scale, 0] are
/// clamped to zero (positive semidefinite input); a pivot below that throws.
inline MatrixXd cholesky_lower(const MatrixXd& v, double pivot_tol = 1e-10) {
    const Eigen::Index n = v.rows();
    MatrixXd L = MatrixXd::Zero(n, n);
    double scale = 1.0;
    for (Eigen::Index j = 0; j < n; ++j) scale = std::max(scale, std::abs(v(j, j)));
    for (Eigen::Index j = 0; j < n; ++j) {
        double pivot = v(j, j);
        for (Eigen::Index k = 0; k < j; ++k) pivot -= L(j, k) * L(j, k);
        if (pivot < -pivot_tol * scale)
            throw NotPositiveDefinite("cholesky_lower: pivot " + std::to_string(pivot) +
                                      " at index " + std::to_string(j));
        if (pivot <= 0.0) continue;  // clamped direction carries no mass
        L(j, j) = std::sqrt(pivot);
        for (Eigen::Index i = j + 1; i < n; ++i) {
            double s = v(i, j);
            for (Eigen::Index k = 0; k < j; ++k) s -= L(i, k) * L(j, k);
            L(i, j) = s / L(j, j);
        }
    }
    return L;
}

namespace detail {

/// Solve L L' x = b in place given the lower factor L (strictly positive diagonal).
inline void chol_solve_in_place(const MatrixXd& L, VectorXd& b) {
    const Eigen::Index n = L.rows();
    for (Eigen::Index i = 0; i < n; ++i) {
        double s = b[i];
        for (Eigen::Index k = 0; k < i; ++k) s -= L(i, k) * b[k];
        b[i] = s / L(i, i);
    }
    for (Eigen::Index i = n - 1; i >= 0; --i) {
        double s = b[i];
        for (Eigen::Index k = i + 1; k < n; ++k) s -= L(k, i) * b[k];
        b[i] = s / L(i, i);
    }
}

inline void chol_solve_in_place(const MatrixXd& L, MatrixXd& b) {
    for (Eigen::Index c = 0; c < b.cols(); ++c) {
        VectorXd col = b.col(c);
        chol_solve_in_place(L, col);
        b.col(c) = col;
    }
}

inline bool strictly_positive_diagonal(const MatrixXd& L) {
    for (Eigen::Index j = 0; j < L.rows(); ++j)
        if (!(L(j, j) > 0.0)) return false;
    return true;
}

}  // namespace detail

/// log N(x; mean, cov) including the normalising constant. cov must be
/// strictly positive definite.
inline double gaussian_logpdf(const VectorXd& x, const VectorXd& mean, const MatrixXd& cov) {
    const MatrixXd L = cholesky_lower(cov);
    if (!detail::strictly_positive_diagonal(L))
        throw NotPositiveDefinite("gaussian_logpdf: covariance is singular");
    VectorXd y = x - mean;
    const Eigen::Index n = L.rows();
    double log_det = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double s = y[i];
        for (Eigen::Index k = 0; k < i; ++k) s -= L(i, k) * y[k];
        y[i] = s / L(i, i);
        log_det += std::log(L(i, i));
    }
    return -0.5 * (static_cast<double>(n) * kLog2Pi + y.squaredNorm()) - log_det;
}

/// Condition a jointly Gaussian vector on its trailing block. The joint is
/// over (block1, block2) with block sizes (mean.size() - observed.size(),
/// observed.size()); returns the conditional law of block1 given
/// block2 = observed. This is the reference route against which the
/// hand-derived bridge conditioning formulas are checked.
inline GaussianStep gaussian_condition(const VectorXd& joint_mean, const MatrixXd& joint_cov,
                                       const VectorXd& observed) {
    const Eigen::Index b = observed.size();
    const Eigen::Index a = joint_mean.size() - b;
    if (a <= 0 || joint_cov.rows() != a + b || joint_cov.cols() != a + b)
        throw Error("gaussian_condition: inconsistent block sizes");

    const MatrixXd c11 = joint_cov.topLeftCorner(a, a);
    const MatrixXd c12 = joint_cov.topRightCorner(a, b);
    const MatrixXd s22 = symmetrized(joint_cov.bottomRightCorner(b, b));

    MatrixXd L;
    try {
        L = cholesky_lower(s22);
    } catch (const NotPositiveDefinite&) {
        throw SingularObservationBlock("gaussian_condition: observed block not positive definite");
    }
    if (!detail::strictly_positive_diagonal(L))
        throw SingularObservationBlock("gaussian_condition: observed block is singular");

    VectorXd w = observed - joint_mean.tail(b);
    detail::chol_solve_in_place(L, w);
    MatrixXd M = c12.transpose();  // b x a
    detail::chol_solve_in_place(L, M);

    GaussianStep out;
    out.mean = joint_mean.head(a) + c12 * w;
    out.cov = symmetrized(c11 - c12 * M);
    return out;
}

}  // namespace sdebridge
