#include "dwn/gradcheck.hpp"

#include <bit>
#include <cmath>

#include <Eigen/Dense>

#include "dwn/lut_layer.hpp"
#include "dwn/mapping.hpp"
#include "dwn/rng.hpp"
#include "dwn/spectral.hpp"

namespace dwn {

namespace {

double rel_err(double got, double want) {
    return std::abs(got - want) / std::max(1.0, std::abs(want));
}

BitVector random_bits(Rng& rng, std::size_t count) {
    BitVector x(count);
    for (std::size_t i = 0; i < count; ++i) x.set(i, rng.below(2) == 1);
    return x;
}

std::vector<double> random_values(Rng& rng, std::size_t count) {
    std::vector<double> g(count);
    for (auto& v : g) v = 2.0 * rng.uniform() - 1.0;
    return g;
}

LutLayer random_layer(Rng& rng, std::uint32_t n, std::uint32_t u) {
    LutLayer layer(n, u);
    layer.init_uniform(rng);
    return layer;
}

/// EFD of one (lut, pin) by the definition: sum over all table rows k of
/// (-1)^(1-k_j) * U[k] / (H(k,a,j) + 1), H = popcount((k ^ a) & ~mask_j).
double efd_pin_oracle(const Eigen::MatrixXd& U, std::uint32_t n, std::uint32_t lut,
                      std::uint32_t addr, std::uint32_t pin) {
    const std::uint32_t mask = 1u << (n - 1 - pin);
    double d = 0.0;
    for (std::uint32_t k = 0; k < (1u << n); ++k) {
        const double sign = (k & mask) ? 1.0 : -1.0;
        const int h = std::popcount((k ^ addr) & ~mask & ((1u << n) - 1));
        d += sign * U(k, lut) / (h + 1);
    }
    return d;
}

double fd_pin_oracle(const Eigen::MatrixXd& U, std::uint32_t n, std::uint32_t lut,
                     std::uint32_t addr, std::uint32_t pin) {
    const std::uint32_t mask = 1u << (n - 1 - pin);
    return U(addr | mask, lut) - U(addr & ~mask, lut);
}

using PinOracle = double (*)(const Eigen::MatrixXd&, std::uint32_t, std::uint32_t, std::uint32_t,
                             std::uint32_t);

/// Worst error of a backward pass against a per-pin oracle, over dx and dU.
double backward_vs_oracle(Rng& rng, std::uint32_t n, std::uint32_t u, std::size_t input_bits,
                          bool efd, PinOracle oracle) {
    LutLayer layer = random_layer(rng, n, u);
    FixedMapping map = random_mapping(std::uint32_t(input_bits), u * n, rng.next_u64());
    const BitVector x = random_bits(rng, input_bits);
    const LutForward fwd = lut_forward(layer, x, map.sel);
    const std::vector<double> G = random_values(rng, u);
    const GradBuffer grad = efd ? lut_backward_efd(layer, map.sel, input_bits, fwd, G)
                                : lut_backward_fd(layer, map.sel, input_bits, fwd, G);

    std::vector<double> dx(input_bits, 0.0);
    for (std::uint32_t i = 0; i < u; ++i)
        for (std::uint32_t j = 0; j < n; ++j)
            dx[map.sel[i * n + j]] += G[i] * oracle(layer.table(), n, i, fwd.addr[i], j);

    double err = 0.0;
    for (std::size_t s = 0; s < input_bits; ++s) err = std::max(err, rel_err(grad.dx[s], dx[s]));
    for (std::uint32_t i = 0; i < u; ++i)
        for (std::uint32_t k = 0; k < layer.entries(); ++k)
            err = std::max(err, rel_err(grad.dU(k, i), k == fwd.addr[i] ? G[i] : 0.0));
    return err;
}

GradCheck check(const std::string& name, double error, double tolerance) {
    return {name, error, tolerance, error <= tolerance};
}

} // namespace

std::vector<GradCheck> run_gradchecks(std::uint64_t seed) {
    std::vector<GradCheck> out;
    Rng rng(seed);

    {
        double err = 0.0;
        for (std::uint32_t n : {1u, 2u, 3u, 4u, 6u})
            for (int rep = 0; rep < 8; ++rep)
                err = std::max(err, backward_vs_oracle(rng, n, 5, 3 * n, false, fd_pin_oracle));
        out.push_back(check("fd backward vs flip-read oracle", err, 1e-12));
    }
    {
        double err = 0.0;
        for (std::uint32_t n : {1u, 2u, 3u, 4u, 6u})
            for (int rep = 0; rep < 8; ++rep)
                err = std::max(err, backward_vs_oracle(rng, n, 5, 3 * n, true, efd_pin_oracle));
        out.push_back(check("efd backward vs double-sum oracle", err, 1e-12));
    }
    {
        double err = 0.0;
        for (int rep = 0; rep < 16; ++rep) {
            LutLayer layer = random_layer(rng, 1, 4);
            FixedMapping map = random_mapping(6, 4, rng.next_u64());
            const BitVector x = random_bits(rng, 6);
            const LutForward fwd = lut_forward(layer, x, map.sel);
            const std::vector<double> G = random_values(rng, 4);
            const GradBuffer a = lut_backward_efd(layer, map.sel, 6, fwd, G);
            const GradBuffer b = lut_backward_fd(layer, map.sel, 6, fwd, G);
            for (std::size_t s = 0; s < 6; ++s) err = std::max(err, std::abs(a.dx[s] - b.dx[s]));
        }
        out.push_back(check("efd equals fd at fan-in 1", err, 0.0));
    }
    {
        double err = 0.0;
        for (std::uint32_t n : {2u, 3u, 5u}) {
            LutLayer layer(n, 3);
            layer.table().setConstant(2.0 * rng.uniform() - 1.0);
            FixedMapping map = random_mapping(2 * n, 3 * n, rng.next_u64());
            const BitVector x = random_bits(rng, 2 * n);
            const LutForward fwd = lut_forward(layer, x, map.sel);
            const std::vector<double> G = random_values(rng, 3);
            const GradBuffer grad = lut_backward_efd(layer, map.sel, 2 * n, fwd, G);
            for (double v : grad.dx) err = std::max(err, std::abs(v));
        }
        out.push_back(check("efd zero on constant tables", err, 1e-12));
    }
    {
        double err = 0.0;
        for (int rep = 0; rep < 8; ++rep) {
            const std::uint32_t P = 7, Q = 5;
            LearnableMapping lm(P, Q);
            lm.init_normal(rng);
            const BitVector x = random_bits(rng, P);
            const std::vector<double> G = random_values(rng, Q);
            const LmGrad grad = lm_backward(lm.weights(), x, G);

            Eigen::MatrixXd SM(P, Q);
            lm.softmax_sources(SM);
            for (std::uint32_t p = 0; p < P; ++p) {
                double dxp = 0.0;
                for (std::uint32_t q = 0; q < Q; ++q) {
                    const double want = (x.get(p) ? 1.0 : -1.0) * G[q];
                    err = std::max(err, rel_err(grad.dW(p, q), want));
                    dxp += SM(p, q) * G[q];
                }
                err = std::max(err, rel_err(grad.dx[p], dxp));
            }
        }
        out.push_back(check("mapping dW and dx vs naive loops", err, 1e-12));
    }
    {
        double err = 0.0;
        const auto& C = spectral_matrix(3);
        for (int rep = 0; rep < 4; ++rep) {
            Eigen::MatrixXd L(5, 8);
            for (Eigen::Index r = 0; r < L.rows(); ++r)
                for (Eigen::Index c = 0; c < L.cols(); ++c) L(r, c) = 2.0 * rng.uniform() - 1.0;
            const Eigen::MatrixXd grad = specnorm_grad(L, C);
            const double h = 1e-5;
            for (Eigen::Index r = 0; r < L.rows(); ++r)
                for (Eigen::Index c = 0; c < L.cols(); ++c) {
                    Eigen::MatrixXd Lp = L, Lm = L;
                    Lp(r, c) += h;
                    Lm(r, c) -= h;
                    const double numeric = (specnorm(Lp, C) - specnorm(Lm, C)) / (2.0 * h);
                    err = std::max(err, rel_err(grad(r, c), numeric));
                }
        }
        out.push_back(check("spectral gradient vs central differences", err, 1e-5));
    }
    {
        double err = 0.0;
        for (std::uint32_t n : {1u, 2u, 3u, 4u}) {
            const auto& C = spectral_matrix(n);
            const std::uint32_t e = 1u << n;
            Eigen::MatrixXd L(3, e);
            for (Eigen::Index r = 0; r < L.rows(); ++r)
                for (Eigen::Index c = 0; c < L.cols(); ++c) L(r, c) = 2.0 * rng.uniform() - 1.0;
            double sum = 0.0;
            for (Eigen::Index r = 0; r < L.rows(); ++r)
                for (std::uint32_t i = 0; i < e; ++i) {
                    double coeff = 0.0;
                    for (std::uint32_t j = 0; j < e; ++j)
                        coeff += L(r, j) * (std::popcount(i & ~j & (e - 1)) % 2 ? -1.0 : 1.0);
                    sum += (coeff / e) * (coeff / e);
                }
            err = std::max(err, std::abs(specnorm(L, C) - std::sqrt(sum)) /
                                    std::max(1e-30, std::sqrt(sum)));
        }
        out.push_back(check("specnorm vs fourier double sum", err, 1e-10));
    }
    return out;
}

} // namespace dwn
