#pragma once

/**
 * @file thermometer.hpp
 * @brief Real-to-binary encoding with per-feature ordered thresholds.
 */

#include <cstdint>
#include <span>
#include <vector>

#include "dwn/bitvector.hpp"

namespace dwn {

/// Immutable after fit; encode() may run from many threads at once.
class ThermometerCodec {
  public:
    ThermometerCodec() = default;
    ThermometerCodec(std::uint32_t feature_count, std::uint32_t bits_per_feature,
                     std::vector<double> thresholds, std::vector<std::uint32_t> degenerate = {});

    std::uint32_t feature_count() const { return features_; }
    std::uint32_t bits_per_feature() const { return z_; }
    std::size_t encoded_bits() const { return std::size_t(features_) * z_; }

    /// Thresholds for feature f, length z, strictly increasing.
    std::span<const double> thresholds(std::uint32_t f) const;
    const std::vector<double>& all_thresholds() const { return thresholds_; }

    /// Features whose training column was constant (fallback thresholds in use).
    const std::vector<std::uint32_t>& degenerate_features() const { return degenerate_; }

    /// Bit f*z+k = 1 iff x[f] > t_k (strict).
    void encode(std::span<const double> x, BitVector& out) const;
    BitVector encode(std::span<const double> x) const;

  private:
    std::uint32_t features_ = 0;
    std::uint32_t z_ = 0;
    std::vector<double> thresholds_; // feature-major, features_ * z_
    std::vector<std::uint32_t> degenerate_;
};

/// Empirical quantiles at levels k/(z+1), k = 1..z, with linear interpolation
/// between order statistics. Equal thresholds are nudged apart to restore
/// strict ordering; constant columns fall back to an even spread around the
/// value and are reported via degenerate_features().
ThermometerCodec fit_distributive(const std::vector<std::vector<double>>& columns, std::uint32_t z);

/// Quantile of one column at level q in [0,1] (linear interpolation).
double empirical_quantile(std::vector<double> sorted_column, double q);

/// Affine map of each feature onto [0,255] with round-half-up and clamping.
/// A feature with hi == lo maps to 128 and is appended to `degenerate` if given.
std::vector<std::uint8_t> quantize8(std::span<const double> x, std::span<const double> lo,
                                    std::span<const double> hi,
                                    std::vector<std::uint32_t>* degenerate = nullptr);

} // namespace dwn
