#pragma once

/**
 * @file mapping.hpp
 * @brief Input routing into LUT pins: fixed pseudo-random and learnable.
 */

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dwn/bitvector.hpp"
#include "dwn/errors.hpp"
#include "dwn/rng.hpp"

namespace dwn {

/// One source bit position per LUT input pin.
struct FixedMapping {
    std::uint32_t input_bits = 0; // P
    std::vector<std::uint32_t> sel;
    std::uint64_t seed = 0;
};

/// Pins are filled in blocks of P: each block is a fresh seeded permutation
/// of all source positions (the last block truncated), so coverage stays even
/// and Q <= P yields distinct sources.
FixedMapping random_mapping(std::uint32_t P, std::uint32_t Q, std::uint64_t seed);

/// Trainable routing: pin q reads the source with the largest weight in
/// column q of W (P x Q). Ties break to the lowest source index.
class LearnableMapping {
  public:
    LearnableMapping() = default;
    LearnableMapping(std::uint32_t P, std::uint32_t Q);

    std::uint32_t input_bits() const { return P_; }
    std::uint32_t pins() const { return Q_; }

    Eigen::MatrixXd& weights() { return W_; }
    const Eigen::MatrixXd& weights() const { return W_; }

    /// i.i.d. normal(0, stddev).
    void init_normal(Rng& rng, double stddev = 0.1);

    /// Current argmax selection per pin.
    void resolve(std::vector<std::uint32_t>& sel) const;
    std::vector<std::uint32_t> resolve() const;

    /// Discard W, keep only the selections.
    FixedMapping freeze() const;

    /// Column-wise softmax over the source axis, written into SM (P x Q).
    void softmax_sources(Eigen::MatrixXd& SM) const;

  private:
    std::uint32_t P_ = 0, Q_ = 0;
    Eigen::MatrixXd W_;
};

/// Selected bits per pin for a single sample.
BitVector lm_forward(const Eigen::MatrixXd& W, const BitVector& x);

struct LmGrad {
    Eigen::MatrixXd dW;     // P x Q
    std::vector<double> dx; // length P
};

/// dW(p,q) = (2x_p - 1) * G_q; dx = softmax-over-sources(W) * G.
LmGrad lm_backward(const Eigen::MatrixXd& W, const BitVector& x, std::span<const double> G);

} // namespace dwn
