#pragma once

/**
 * @file netlist.hpp
 * @brief NAND-only gate netlists compiled from frozen fan-in-2 models.
 *
 * Signal references are dense indices: 0 is constant false, 1 is constant
 * true, 2+k is primary input bit k, and gate g's output follows at
 * 2 + input_bits + g. Gates only reference earlier signals, so the list is
 * topologically ordered by construction.
 */

#include <cstdint>
#include <string>
#include <vector>

#include "dwn/bitvector.hpp"
#include "dwn/model.hpp"

namespace dwn {

inline constexpr std::uint32_t kNetConst0 = 0;
inline constexpr std::uint32_t kNetConst1 = 1;

inline std::uint32_t net_input_ref(std::uint32_t bit) { return 2 + bit; }

struct NandGate {
    std::uint32_t a = 0, b = 0;
};

struct Netlist {
    std::uint32_t input_bits = 0;
    std::vector<NandGate> gates;
    std::vector<std::uint32_t> outputs;
    std::vector<std::string> output_names;

    std::uint32_t ref_count() const {
        return 2 + input_bits + std::uint32_t(gates.size());
    }
};

/// Compile a frozen model to NAND gates. Each LUT-2 becomes its minimal
/// NAND circuit; stages shared by several class chains are emitted once.
/// Requires fan-in 2 throughout and a pyramid head (a popcount head would
/// need adder macros).
Netlist export_netlist(const FrozenModel& model);

/// Evaluate every gate and return the output bits in declaration order.
BitVector simulate(const Netlist& net, const BitVector& input);

/// Class decision matching FrozenModel::predict on pyramid heads: a single
/// output is the class index itself, several outputs pick the first set bit
/// (class 0 when none is set).
std::uint32_t netlist_class(const Netlist& net, const BitVector& input);

/// Line-oriented text form (inputs, gate list, named outputs).
std::string netlist_text(const Netlist& net);

} // namespace dwn
