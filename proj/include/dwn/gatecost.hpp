#pragma once

/**
 * @file gatecost.hpp
 * @brief Minimal NAND2 realizations of the 16 two-input Boolean functions.
 *
 * Truth tables are 4-bit values with bit index (a<<1)|b, so input A is
 * 0b1100 (0xC) and input B is 0b1010 (0xA). Constants and single-input
 * passthroughs cost 0 (tie-off or wire); everything else carries the gate
 * list of a minimal NAND-only circuit found by exhaustive search.
 */

#include <array>
#include <cstdint>
#include <vector>

namespace dwn {

inline constexpr std::uint8_t kTruthA = 0xC;
inline constexpr std::uint8_t kTruthB = 0xA;

inline std::uint8_t nand_tt(std::uint8_t g, std::uint8_t h) { return std::uint8_t(~(g & h) & 0xF); }

enum class GateRealization : std::uint8_t { Const0, Const1, WireA, WireB, Gates };

/// One NAND step: operands and result as 4-bit truth tables.
struct NandStep {
    std::uint8_t lhs, rhs, out;
};

struct GateCircuit {
    GateRealization kind = GateRealization::Gates;
    std::vector<NandStep> steps; // topological; last step's out = the function
};

struct GateCostTable {
    std::array<int, 16> cost;
    std::array<GateCircuit, 16> circuit;
};

/// Breadth-first search over sets of realizable functions, one NAND per step.
/// Pure search result: cost = minimal gate count starting from {A, B}.
std::array<int, 16> nand_search_min_gates();

/// Search result with the wire/tie-off overrides applied and circuits attached.
const GateCostTable& gate_cost_table();

/// Evaluate a truth table on concrete inputs.
inline bool tt_eval(std::uint8_t tt, bool a, bool b) {
    return (tt >> ((int(a) << 1) | int(b))) & 1;
}

} // namespace dwn
