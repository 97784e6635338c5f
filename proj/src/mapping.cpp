#include "dwn/mapping.hpp"

#include <cmath>

namespace dwn {

FixedMapping random_mapping(std::uint32_t P, std::uint32_t Q, std::uint64_t seed) {
    if (P < 1) throw ConfigError("random_mapping: input bit count must be >= 1");
    FixedMapping m;
    m.input_bits = P;
    m.seed = seed;
    m.sel.reserve(Q);
    Rng rng(seed);
    while (m.sel.size() < Q) {
        std::vector<std::uint32_t> block = rng.permutation(P);
        const std::size_t take = std::min<std::size_t>(Q - m.sel.size(), block.size());
        m.sel.insert(m.sel.end(), block.begin(), block.begin() + take);
    }
    return m;
}

LearnableMapping::LearnableMapping(std::uint32_t P, std::uint32_t Q) : P_(P), Q_(Q) {
    if (P_ < 1) throw ConfigError("LearnableMapping: input bit count must be >= 1");
    if (Q_ < 1) throw ConfigError("LearnableMapping: pin count must be >= 1");
    W_.setZero(P_, Q_);
}

void LearnableMapping::init_normal(Rng& rng, double stddev) {
    for (std::uint32_t q = 0; q < Q_; ++q)
        for (std::uint32_t p = 0; p < P_; ++p) W_(p, q) = rng.normal(0.0, stddev);
}

namespace {

std::uint32_t argmax_lowest(const Eigen::MatrixXd& W, std::uint32_t q) {
    std::uint32_t best = 0;
    double best_w = W(0, q);
    for (std::uint32_t p = 1; p < std::uint32_t(W.rows()); ++p)
        if (W(p, q) > best_w) {
            best_w = W(p, q);
            best = p;
        }
    return best;
}

} // namespace

void LearnableMapping::resolve(std::vector<std::uint32_t>& sel) const {
    sel.resize(Q_);
    for (std::uint32_t q = 0; q < Q_; ++q) sel[q] = argmax_lowest(W_, q);
}

std::vector<std::uint32_t> LearnableMapping::resolve() const {
    std::vector<std::uint32_t> sel;
    resolve(sel);
    return sel;
}

FixedMapping LearnableMapping::freeze() const {
    FixedMapping m;
    m.input_bits = P_;
    m.sel = resolve();
    return m;
}

void LearnableMapping::softmax_sources(Eigen::MatrixXd& SM) const {
    SM.resize(P_, Q_);
    for (std::uint32_t q = 0; q < Q_; ++q) {
        const double mx = W_.col(q).maxCoeff();
        double sum = 0.0;
        for (std::uint32_t p = 0; p < P_; ++p) {
            const double e = std::exp(W_(p, q) - mx);
            SM(p, q) = e;
            sum += e;
        }
        SM.col(q) /= sum;
    }
}

BitVector lm_forward(const Eigen::MatrixXd& W, const BitVector& x) {
    if (x.size() != std::size_t(W.rows()))
        throw InputShapeError("lm_forward: input has " + std::to_string(x.size()) +
                              " bits but W has " + std::to_string(W.rows()) + " rows");
    BitVector out(std::size_t(W.cols()));
    for (std::uint32_t q = 0; q < std::uint32_t(W.cols()); ++q)
        out.set(q, x.get(argmax_lowest(W, q)));
    return out;
}

LmGrad lm_backward(const Eigen::MatrixXd& W, const BitVector& x, std::span<const double> G) {
    if (x.size() != std::size_t(W.rows()))
        throw StaleBackwardError("lm_backward: input does not match W's source axis");
    if (G.size() != std::size_t(W.cols()))
        throw InputShapeError("lm_backward: gradient has " + std::to_string(G.size()) +
                              " entries but W has " + std::to_string(W.cols()) + " columns");
    const auto P = std::uint32_t(W.rows());
    const auto Q = std::uint32_t(W.cols());
    LmGrad out;
    out.dW.resize(P, Q);
    for (std::uint32_t q = 0; q < Q; ++q)
        for (std::uint32_t p = 0; p < P; ++p)
            out.dW(p, q) = (x.get(p) ? 1.0 : -1.0) * G[q];

    Eigen::MatrixXd SM(P, Q);
    for (std::uint32_t q = 0; q < Q; ++q) {
        const double mx = W.col(q).maxCoeff();
        double sum = 0.0;
        for (std::uint32_t p = 0; p < P; ++p) {
            const double e = std::exp(W(p, q) - mx);
            SM(p, q) = e;
            sum += e;
        }
        SM.col(q) /= sum;
    }
    out.dx.assign(P, 0.0);
    for (std::uint32_t q = 0; q < Q; ++q)
        for (std::uint32_t p = 0; p < P; ++p) out.dx[p] += SM(p, q) * G[q];
    return out;
}

} // namespace dwn
