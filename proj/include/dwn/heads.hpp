#pragma once

/**
 * @file heads.hpp
 * @brief Output heads: per-class popcount with temperature, pyramid width rules.
 */

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dwn/bitvector.hpp"
#include "dwn/errors.hpp"

namespace dwn {

/// Contiguous equal partition of the final layer into class blocks
/// (block sizes differ by at most one; the first blocks take the remainder).
class PopcountHead {
  public:
    PopcountHead() = default;
    PopcountHead(std::uint32_t width, std::uint32_t class_count, double tau);

    std::uint32_t width() const { return width_; }
    std::uint32_t class_count() const { return classes_; }
    double tau() const { return tau_; }

    std::uint32_t block_start(std::uint32_t c) const;
    std::uint32_t block_len(std::uint32_t c) const;

    /// logit_c = (sum of block c) / tau, over real pre-binarization values.
    Eigen::VectorXd logits(std::span<const double> values) const;
    /// Same over hard bits (evaluation path).
    Eigen::VectorXd logits(const BitVector& bits) const;

    /// d(value) for every member of block c is d(logit_c) / tau.
    void backward(const Eigen::VectorXd& dlogits, std::span<double> dvalues) const;

  private:
    std::uint32_t width_ = 0;
    std::uint32_t classes_ = 0;
    double tau_ = 1.0;
};

/// Pyramid widths must decrease strictly and end at 1.
/// Throws ConfigError naming the offending position.
void validate_pyramid_widths(std::span<const std::uint32_t> widths);

/// Numerically stable softmax.
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

/// -log(softmax(logits)[label]).
double cross_entropy(const Eigen::VectorXd& logits, std::uint32_t label);

/// softmax(logits) - onehot(label); gradient of cross_entropy in the logits.
Eigen::VectorXd cross_entropy_grad(const Eigen::VectorXd& logits, std::uint32_t label);

} // namespace dwn
