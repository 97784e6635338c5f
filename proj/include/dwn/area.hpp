#pragma once

/**
 * @file area.hpp
 * @brief NAND2-equivalent circuit area: popcount adder trees and frozen models.
 */

#include <cstdint>
#include <string>
#include <vector>

#include "dwn/model.hpp"

namespace dwn {

struct PopcountArea {
    double full_adders = 0.0;
    double half_adders = 0.0;
    double nand2 = 0.0;       // 7*FA + 3.5*HA
    double closed_form = 0.0; // algebraic cross-check of the same estimate
};

/// Adder-tree cost of an N-input popcount. For N >= 3: FA = N - log2(N/3) - 2,
/// HA = N/3 - 1 (real-valued), at 7 and 3.5 NAND2 each. N < 3 uses a direct
/// table (0 or 1 bit needs no adder; 2 bits need one half adder).
PopcountArea popcount_area(std::uint32_t n_inputs);

struct LayerArea {
    std::uint32_t fan_in = 0;
    std::uint32_t lut_count = 0;
    double nand2 = 0.0; // exact only when fan_in == 2
    bool exact = false;
};

struct AreaReport {
    double logic_nand = 0.0;
    double popcount_nand = 0.0;
    double total_nand = 0.0;
    bool logic_exact = true; // false when any layer has fan-in != 2
    std::vector<LayerArea> layers;
    std::vector<std::string> warnings;
};

/// Logic term: per-LUT minimal NAND2 cost of its truth table (fan-in-2 layers
/// only; wider LUTs are reported by count with a warning and excluded from the
/// logic total). Popcount heads add one adder tree per class block; pyramid
/// heads add nothing.
AreaReport model_area(const FrozenModel& model);

} // namespace dwn
