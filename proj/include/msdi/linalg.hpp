#pragma once

#include <cmath>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "msdi/core.hpp"

namespace msdi::linalg {

inline double spectral_radius(const Matrix& m) {
    if (m.size() == 0) return 0.0;
    if (m.size() == 1) return std::abs(m(0, 0));
    Eigen::EigenSolver<Matrix> es(m, /*computeEigenvectors=*/false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Companion matrix with first row theta and ones on the subdiagonal.
inline Matrix companion(const Vector& theta) {
    const auto p = theta.size();
    Matrix c = Matrix::Zero(p, p);
    c.row(0) = theta.transpose();
    for (Eigen::Index i = 1; i < p; ++i) c(i, i - 1) = 1.0;
    return c;
}

/// Solves F = L F L' + B by fixed-point iteration.  Stops when the max-norm
/// of the increment drops below tol; throws if the cap is reached.
inline Matrix stationary_covariance(const Matrix& transition, const Matrix& noise_cov, double tol = 1e-12,
                                    std::size_t max_iter = 100000) {
    Matrix f = noise_cov;
    for (std::size_t it = 0; it < max_iter; ++it) {
        Matrix next = transition * f * transition.transpose() + noise_cov;
        const double delta = (next - f).cwiseAbs().maxCoeff();
        f = std::move(next);
        if (delta < tol) return f;
    }
    throw numeric_error("stationary covariance iteration did not converge");
}

/// Symmetric square root for a positive semidefinite covariance; negative
/// eigenvalues from rounding are clamped to zero.
inline Matrix psd_sqrt(const Matrix& cov) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
    const Vector ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

inline Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

} // namespace msdi::linalg
