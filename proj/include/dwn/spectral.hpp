#pragma once

/**
 * @file spectral.hpp
 * @brief Fourier-coefficient norm of LUT tables and its gradient.
 */

#include <cstdint>

#include <Eigen/Dense>

#include "dwn/errors.hpp"

namespace dwn {

/// Coefficient matrix: entry (i, j) = (1/2^n) * prod_{a in subset i} (2*j_a - 1)
/// = (1/2^n) * (-1)^popcount(i & ~j), with i a subset bitmask and j a point
/// bitmask. Row 0 (empty subset) is the mean row.
struct SpectralMatrix {
    std::uint32_t n = 0;
    Eigen::MatrixXd C; // 2^n x 2^n
};

SpectralMatrix build_spectral_matrix(std::uint32_t n);

/// Process-wide immutable cache. The matrix has 4^n entries, so fan-ins above
/// 12 are refused rather than letting the allocation blow past physical memory.
const SpectralMatrix& spectral_matrix(std::uint32_t n);

/// Frobenius norm of L*C; L is u x 2^n (one row per LUT table).
double specnorm(const Eigen::MatrixXd& L, const SpectralMatrix& C);

/// d(specnorm)/dL = L*C*C^T / specnorm(L); zero matrix at L*C = 0 (subgradient).
Eigen::MatrixXd specnorm_grad(const Eigen::MatrixXd& L, const SpectralMatrix& C);

/// Engine-layout helper: tables stored 2^n x u. Adds lambda * d(specnorm)/dU
/// into dU and returns the norm itself (for loss reporting).
double add_spectral_gradient(const Eigen::MatrixXd& U, const SpectralMatrix& C, double lambda,
                             Eigen::MatrixXd& dU);

} // namespace dwn
