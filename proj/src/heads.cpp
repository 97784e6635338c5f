#include "dwn/heads.hpp"

#include <cmath>

namespace dwn {

PopcountHead::PopcountHead(std::uint32_t width, std::uint32_t class_count, double tau)
    : width_(width), classes_(class_count), tau_(tau) {
    if (classes_ < 2) throw ConfigError("PopcountHead: need at least 2 classes");
    if (width_ < classes_)
        throw ConfigError("PopcountHead: " + std::to_string(classes_) + " classes need at least " +
                          std::to_string(classes_) + " final-layer outputs, got " + std::to_string(width_));
    if (!(tau_ > 0.0)) throw ConfigError("PopcountHead: temperature must be > 0");
}

std::uint32_t PopcountHead::block_start(std::uint32_t c) const {
    const std::uint32_t q = width_ / classes_;
    const std::uint32_t r = width_ % classes_;
    return c * q + std::min(c, r);
}

std::uint32_t PopcountHead::block_len(std::uint32_t c) const {
    const std::uint32_t q = width_ / classes_;
    const std::uint32_t r = width_ % classes_;
    return q + (c < r ? 1u : 0u);
}

Eigen::VectorXd PopcountHead::logits(std::span<const double> values) const {
    if (values.size() != width_)
        throw InputShapeError("PopcountHead: expected " + std::to_string(width_) + " values, got " +
                              std::to_string(values.size()));
    Eigen::VectorXd out(classes_);
    for (std::uint32_t c = 0; c < classes_; ++c) {
        double sum = 0.0;
        const std::uint32_t s = block_start(c), l = block_len(c);
        for (std::uint32_t i = 0; i < l; ++i) sum += values[s + i];
        out[c] = sum / tau_;
    }
    return out;
}

Eigen::VectorXd PopcountHead::logits(const BitVector& bits) const {
    if (bits.size() != width_)
        throw InputShapeError("PopcountHead: expected " + std::to_string(width_) + " bits, got " +
                              std::to_string(bits.size()));
    Eigen::VectorXd out(classes_);
    for (std::uint32_t c = 0; c < classes_; ++c) {
        std::uint32_t count = 0;
        const std::uint32_t s = block_start(c), l = block_len(c);
        for (std::uint32_t i = 0; i < l; ++i) count += bits.get(s + i);
        out[c] = double(count) / tau_;
    }
    return out;
}

void PopcountHead::backward(const Eigen::VectorXd& dlogits, std::span<double> dvalues) const {
    if (std::uint32_t(dlogits.size()) != classes_ || dvalues.size() != width_)
        throw InputShapeError("PopcountHead: gradient shapes do not match head");
    for (std::uint32_t c = 0; c < classes_; ++c) {
        const double g = dlogits[c] / tau_;
        const std::uint32_t s = block_start(c), l = block_len(c);
        for (std::uint32_t i = 0; i < l; ++i) dvalues[s + i] += g;
    }
}

void validate_pyramid_widths(std::span<const std::uint32_t> widths) {
    if (widths.empty()) throw ConfigError("pyramid: no widths given");
    for (std::size_t i = 0; i < widths.size(); ++i) {
        if (widths[i] == 0)
            throw ConfigError("pyramid: width at position " + std::to_string(i) + " is zero");
        if (i > 0 && widths[i] >= widths[i - 1])
            throw ConfigError("pyramid: widths must decrease strictly, violated at position " +
                              std::to_string(i));
    }
    if (widths.back() != 1)
        throw ConfigError("pyramid: final width must be 1, got " + std::to_string(widths.back()));
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
    const double mx = logits.maxCoeff();
    Eigen::VectorXd e = (logits.array() - mx).exp();
    return e / e.sum();
}

double cross_entropy(const Eigen::VectorXd& logits, std::uint32_t label) {
    if (label >= std::uint32_t(logits.size()))
        throw InputShapeError("cross_entropy: label out of range");
    const double mx = logits.maxCoeff();
    const double lse = std::log((logits.array() - mx).exp().sum()) + mx;
    return lse - logits[label];
}

Eigen::VectorXd cross_entropy_grad(const Eigen::VectorXd& logits, std::uint32_t label) {
    if (label >= std::uint32_t(logits.size()))
        throw InputShapeError("cross_entropy_grad: label out of range");
    Eigen::VectorXd g = softmax(logits);
    g[label] -= 1.0;
    return g;
}

} // namespace dwn
