#pragma once

/**
 * @file lut_layer.hpp
 * @brief LUT layer: addressing-function forward pass and FD/EFD backward passes.
 *
 * A layer holds u lookup tables of n binary inputs each. Table entries are
 * real during training; the address of LUT i is assembled MSB-first from its
 * n mapped input bits (pin 0 is the highest-order address bit), and the read
 * value's sign is the bit passed downstream.
 */

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dwn/bitvector.hpp"
#include "dwn/errors.hpp"
#include "dwn/rng.hpp"

namespace dwn {

inline constexpr std::uint32_t kMaxFanIn = 16;

/// 1-based table index: 1 + integer value of the address, MSB-first.
std::uint32_t delta(const BitVector& a);

class LutLayer {
  public:
    LutLayer(std::uint32_t n, std::uint32_t u);

    std::uint32_t fan_in() const { return n_; }
    std::uint32_t size() const { return u_; }
    std::uint32_t entries() const { return 1u << n_; }

    /// entries() x size(); column i holds LUT i's table in delta order.
    Eigen::MatrixXd& table() { return U_; }
    const Eigen::MatrixXd& table() const { return U_; }

    /// i.i.d. uniform on [-1, 1].
    void init_uniform(Rng& rng);

  private:
    std::uint32_t n_ = 0;
    std::uint32_t u_ = 0;
    Eigen::MatrixXd U_;
};

/// Forward pass of one sample. `sel` holds u*n source bit positions
/// (pin j of LUT i at sel[i*n+j]); addresses are cached for backward.
struct LutForward {
    std::vector<double> values;      // length u
    BitVector bits;                  // length u, bit i = values[i] > 0
    std::vector<std::uint32_t> addr; // length u, 0-based table row (delta - 1)
};

LutForward lut_forward(const LutLayer& layer, const BitVector& x, std::span<const std::uint32_t> sel);

struct GradBuffer {
    Eigen::MatrixXd dU;     // entries x u
    std::vector<double> dx; // length of the layer input
};

/// Plain finite difference: dx via single bit-flip reads of the table.
GradBuffer lut_backward_fd(const LutLayer& layer, std::span<const std::uint32_t> sel,
                           std::size_t input_bits, const LutForward& fwd, std::span<const double> G);

/// Extended finite difference: dx sums all 2^n table entries weighted by the
/// signed reciprocal of (Hamming distance excluding the differentiated bit) + 1.
GradBuffer lut_backward_efd(const LutLayer& layer, std::span<const std::uint32_t> sel,
                            std::size_t input_bits, const LutForward& fwd, std::span<const double> G);

/// Signs of table entries as packed bits (entry > 0), lut-major delta order.
BitVector binarize(const LutLayer& layer);

/// Weight matrix for batched address gradients: entries() rows, n*entries()
/// columns; column a*n+j holds the EFD weights of address a, pin j, so that
/// (weights^T * table) gives d(value)/d(pin) for every (address, pin) pair.
Eigen::MatrixXd build_efd_weights(std::uint32_t n);
/// Same layout for the plain finite difference (+1/-1 at the two flip reads).
Eigen::MatrixXd build_fd_weights(std::uint32_t n);

/// Process-wide caches. ConfigError above n=10 (the tensor grows as 4^n);
/// larger fan-ins use the per-sample backward paths instead.
const Eigen::MatrixXd& efd_weights(std::uint32_t n);
const Eigen::MatrixXd& fd_weights(std::uint32_t n);

} // namespace dwn
