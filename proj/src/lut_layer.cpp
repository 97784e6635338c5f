#include "dwn/lut_layer.hpp"

#include <bit>
#include <map>
#include <mutex>

namespace dwn {

std::uint32_t delta(const BitVector& a) {
    const std::size_t n = a.size();
    if (n == 0 || n > kMaxFanIn)
        throw InputShapeError("delta: address must have 1.." + std::to_string(kMaxFanIn) + " bits, got " +
                              std::to_string(n));
    std::uint32_t v = 0;
    for (std::size_t j = 0; j < n; ++j)
        v |= std::uint32_t(a.get(j)) << (n - 1 - j);
    return v + 1;
}

LutLayer::LutLayer(std::uint32_t n, std::uint32_t u) : n_(n), u_(u) {
    if (n_ < 1 || n_ > kMaxFanIn)
        throw ConfigError("LutLayer: fan-in must be 1.." + std::to_string(kMaxFanIn) + ", got " +
                          std::to_string(n_));
    if (u_ < 1) throw ConfigError("LutLayer: LUT count must be >= 1");
    U_.setZero(entries(), u_);
}

void LutLayer::init_uniform(Rng& rng) {
    for (std::uint32_t i = 0; i < u_; ++i)
        for (std::uint32_t k = 0; k < entries(); ++k) U_(k, i) = rng.uniform(-1.0, 1.0);
}

namespace {

void check_sel(const LutLayer& layer, std::span<const std::uint32_t> sel, std::size_t input_bits) {
    if (sel.size() != std::size_t(layer.size()) * layer.fan_in())
        throw InputShapeError("lut layer: mapping supplies " + std::to_string(sel.size()) +
                              " pins, expected " + std::to_string(std::size_t(layer.size()) * layer.fan_in()));
    for (std::size_t p = 0; p < sel.size(); ++p)
        if (sel[p] >= input_bits)
            throw MappingRangeError("lut layer: pin " + std::to_string(p) + " reads bit " +
                                    std::to_string(sel[p]) + " but input has " +
                                    std::to_string(input_bits) + " bits");
}

void check_backward(const LutLayer& layer, const LutForward& fwd, std::span<const double> G) {
    if (fwd.addr.size() != layer.size())
        throw StaleBackwardError("lut layer: backward without a matching forward pass");
    if (G.size() != layer.size())
        throw InputShapeError("lut layer: upstream gradient length " + std::to_string(G.size()) +
                              ", expected " + std::to_string(layer.size()));
}

} // namespace

LutForward lut_forward(const LutLayer& layer, const BitVector& x, std::span<const std::uint32_t> sel) {
    check_sel(layer, sel, x.size());
    const std::uint32_t n = layer.fan_in();
    const std::uint32_t u = layer.size();
    LutForward out;
    out.values.resize(u);
    out.bits = BitVector(u);
    out.addr.resize(u);
    for (std::uint32_t i = 0; i < u; ++i) {
        std::uint32_t a = 0;
        for (std::uint32_t j = 0; j < n; ++j)
            a |= std::uint32_t(x.get(sel[std::size_t(i) * n + j])) << (n - 1 - j);
        out.addr[i] = a;
        out.values[i] = layer.table()(a, i);
        if (out.values[i] > 0.0) out.bits.set(i, true);
    }
    return out;
}

GradBuffer lut_backward_fd(const LutLayer& layer, std::span<const std::uint32_t> sel,
                           std::size_t input_bits, const LutForward& fwd, std::span<const double> G) {
    check_sel(layer, sel, input_bits);
    check_backward(layer, fwd, G);
    const std::uint32_t n = layer.fan_in();
    GradBuffer out;
    out.dU.setZero(layer.entries(), layer.size());
    out.dx.assign(input_bits, 0.0);
    for (std::uint32_t i = 0; i < layer.size(); ++i) {
        const std::uint32_t a = fwd.addr[i];
        out.dU(a, i) += G[i];
        for (std::uint32_t j = 0; j < n; ++j) {
            const std::uint32_t mask = 1u << (n - 1 - j);
            const double dA = layer.table()(a | mask, i) - layer.table()(a & ~mask, i);
            out.dx[sel[std::size_t(i) * n + j]] += G[i] * dA;
        }
    }
    return out;
}

GradBuffer lut_backward_efd(const LutLayer& layer, std::span<const std::uint32_t> sel,
                            std::size_t input_bits, const LutForward& fwd, std::span<const double> G) {
    check_sel(layer, sel, input_bits);
    check_backward(layer, fwd, G);
    const std::uint32_t n = layer.fan_in();
    const std::uint32_t e = layer.entries();
    GradBuffer out;
    out.dU.setZero(e, layer.size());
    out.dx.assign(input_bits, 0.0);
    for (std::uint32_t i = 0; i < layer.size(); ++i) {
        const std::uint32_t a = fwd.addr[i];
        out.dU(a, i) += G[i];
        for (std::uint32_t j = 0; j < n; ++j) {
            const std::uint32_t mask = 1u << (n - 1 - j);
            double dA = 0.0;
            for (std::uint32_t k = 0; k < e; ++k) {
                const double sign = (k & mask) ? 1.0 : -1.0;
                const int h = std::popcount((k ^ a) & ~mask);
                dA += sign * layer.table()(k, i) / double(h + 1);
            }
            out.dx[sel[std::size_t(i) * n + j]] += G[i] * dA;
        }
    }
    return out;
}

BitVector binarize(const LutLayer& layer) {
    BitVector out(std::size_t(layer.size()) * layer.entries());
    for (std::uint32_t i = 0; i < layer.size(); ++i)
        for (std::uint32_t k = 0; k < layer.entries(); ++k)
            if (layer.table()(k, i) > 0.0) out.set(std::size_t(i) * layer.entries() + k, true);
    return out;
}

Eigen::MatrixXd build_efd_weights(std::uint32_t n) {
    if (n < 1 || n > kMaxFanIn) throw ConfigError("build_efd_weights: fan-in out of range");
    const std::uint32_t e = 1u << n;
    Eigen::MatrixXd W(e, std::size_t(e) * n);
    for (std::uint32_t a = 0; a < e; ++a)
        for (std::uint32_t j = 0; j < n; ++j) {
            const std::uint32_t mask = 1u << (n - 1 - j);
            const std::size_t col = std::size_t(a) * n + j;
            for (std::uint32_t k = 0; k < e; ++k) {
                const double sign = (k & mask) ? 1.0 : -1.0;
                const int h = std::popcount((k ^ a) & ~mask);
                W(k, col) = sign / double(h + 1);
            }
        }
    return W;
}

Eigen::MatrixXd build_fd_weights(std::uint32_t n) {
    if (n < 1 || n > kMaxFanIn) throw ConfigError("build_fd_weights: fan-in out of range");
    const std::uint32_t e = 1u << n;
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(e, std::size_t(e) * n);
    for (std::uint32_t a = 0; a < e; ++a)
        for (std::uint32_t j = 0; j < n; ++j) {
            const std::uint32_t mask = 1u << (n - 1 - j);
            const std::size_t col = std::size_t(a) * n + j;
            W(a | mask, col) += 1.0;
            W(a & ~mask, col) -= 1.0;
        }
    return W;
}

namespace {

constexpr std::uint32_t kMaxCachedWeightFanIn = 10;

const Eigen::MatrixXd& cached_weights(std::uint32_t n, bool efd) {
    if (n < 1 || n > kMaxCachedWeightFanIn)
        throw ConfigError("gradient weight cache supports fan-in 1.." +
                          std::to_string(kMaxCachedWeightFanIn) + ", got " + std::to_string(n));
    static std::mutex mu;
    static std::map<std::pair<std::uint32_t, bool>, Eigen::MatrixXd> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto [it, inserted] = cache.try_emplace({n, efd});
    if (inserted) it->second = efd ? build_efd_weights(n) : build_fd_weights(n);
    return it->second;
}

} // namespace

const Eigen::MatrixXd& efd_weights(std::uint32_t n) { return cached_weights(n, true); }
const Eigen::MatrixXd& fd_weights(std::uint32_t n) { return cached_weights(n, false); }

} // namespace dwn
