#pragma once

/**
 * @file gradcheck.hpp
 * @brief Self-contained gradient and norm checks against brute-force oracles.
 */

#include <cstdint>
#include <string>
#include <vector>

namespace dwn {

struct GradCheck {
    std::string name;
    double error = 0.0;     // worst relative error seen (absolute near zero)
    double tolerance = 0.0;
    bool pass = false;
};

/// Runs every check on seeded toy shapes. Analytic identities are compared
/// at 1e-12; the numeric spectral check at 1e-5.
std::vector<GradCheck> run_gradchecks(std::uint64_t seed);

} // namespace dwn
