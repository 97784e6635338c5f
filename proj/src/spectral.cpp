#include "dwn/spectral.hpp"

#include <bit>
#include <map>
#include <mutex>

namespace dwn {

namespace {

constexpr std::uint32_t kMaxSpectralFanIn = 12;

void check_shapes(const Eigen::MatrixXd& L, const SpectralMatrix& C) {
    if (L.cols() != C.C.rows())
        throw InputShapeError("specnorm: table matrix has " + std::to_string(L.cols()) +
                              " columns, coefficient matrix expects " + std::to_string(C.C.rows()));
}

} // namespace

SpectralMatrix build_spectral_matrix(std::uint32_t n) {
    if (n < 1 || n > kMaxSpectralFanIn)
        throw ConfigError("build_spectral_matrix: fan-in must be 1.." +
                          std::to_string(kMaxSpectralFanIn) + ", got " + std::to_string(n));
    const std::uint32_t e = 1u << n;
    SpectralMatrix S;
    S.n = n;
    S.C.resize(e, e);
    const double scale = 1.0 / double(e);
    for (std::uint32_t i = 0; i < e; ++i)
        for (std::uint32_t j = 0; j < e; ++j)
            S.C(i, j) = (std::popcount(i & ~j) & 1) ? -scale : scale;
    return S;
}

const SpectralMatrix& spectral_matrix(std::uint32_t n) {
    static std::mutex mu;
    static std::map<std::uint32_t, SpectralMatrix> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto [it, inserted] = cache.try_emplace(n);
    if (inserted) it->second = build_spectral_matrix(n);
    return it->second;
}

double specnorm(const Eigen::MatrixXd& L, const SpectralMatrix& C) {
    check_shapes(L, C);
    return (L * C.C).norm();
}

Eigen::MatrixXd specnorm_grad(const Eigen::MatrixXd& L, const SpectralMatrix& C) {
    check_shapes(L, C);
    Eigen::MatrixXd coeffs = L * C.C;
    const double norm = coeffs.norm();
    if (norm == 0.0) return Eigen::MatrixXd::Zero(L.rows(), L.cols());
    return coeffs * C.C.transpose() / norm;
}

double add_spectral_gradient(const Eigen::MatrixXd& U, const SpectralMatrix& C, double lambda,
                             Eigen::MatrixXd& dU) {
    if (U.rows() != C.C.rows())
        throw InputShapeError("add_spectral_gradient: table entry count " + std::to_string(U.rows()) +
                              " does not match coefficient matrix size " + std::to_string(C.C.rows()));
    Eigen::MatrixXd coeffs = C.C.transpose() * U; // (L*C)^T for L = U^T
    const double norm = coeffs.norm();
    if (norm > 0.0 && lambda != 0.0) dU.noalias() += (lambda / norm) * (C.C * coeffs);
    return norm;
}

} // namespace dwn
