#pragma once

/**
 * @file packed_model.hpp
 * @brief Bit-packed model file format and its scratchpad interpreter.
 *
 * Layout (all fields little-endian, offsets in bytes):
 *
 *   0   magic "DWNM"
 *   4   u16 version (currently 1)
 *   6   u8  head kind (0 popcount, 1 pyramid)
 *   7   u8  flags (bit 0 thermometer codec present, bit 1 quantization bounds)
 *   8   u32 class_count
 *   12  f64 tau
 *   20  u32 input_bits
 *   24  u32 chain_count
 *   28  u32 shared_prefix (leading stages every chain shares)
 *   32  u32 feature_count (0 without codec)
 *   36  u32 z thresholds per feature (0 without codec)
 *   40  [flags&1] f64 thresholds[feature_count*z], feature-major
 *       [flags&2] f64 qlo[feature_count], f64 qhi[feature_count]
 *
 * Then per chain: u32 stage_count, then per stage
 *
 *   u32 input_bits
 *   u8  n (LUT fan-in)
 *   u8  index width code (0: 8-bit, 1: 10-bit, 2: 12-bit, 3: 16-bit)
 *   u16 reserved, must be zero
 *   u32 u (LUT count)
 *   map_lo  u8[u*n], low 8 bits of each pin's source index
 *   map_hi  10-bit: 2 bits per pin, 4 pins per byte, LSB-first
 *           12-bit: 4 bits per pin, low nibble first
 *           16-bit: u8[u*n] high bytes
 *           8-bit: absent
 *   luts    ceil(u*2^n / 8) bytes, entries LSB-first in lut-major delta order
 *
 * The index width is the smallest of {8, 10, 12, 16} that addresses the
 * stage's input length; a stage with more than 65536 inputs does not fit
 * (PackingOverflow). A LUT-6 therefore occupies exactly 8 content bytes, and
 * six 10-bit pin indices amortize to 7.5 bytes per LUT across a layer.
 */

#include <cstdint>
#include <span>
#include <vector>

#include "dwn/bitvector.hpp"
#include "dwn/model.hpp"

namespace dwn {

inline constexpr std::uint16_t kPackedVersion = 1;
inline constexpr std::size_t kPackedHeaderBytes = 40;

/// Smallest supported index width (bits) addressing `input_bits` sources.
std::uint8_t packed_index_width(std::uint32_t input_bits);

/// Serialize a frozen model. Codec and quantization bounds travel with it.
std::vector<std::uint8_t> pack(const FrozenModel& model);

/// Parse a packed file back into a frozen model. Malformed input raises
/// FormatError carrying the offending byte offset.
FrozenModel unpack(std::span<const std::uint8_t> bytes);

/// One stage's location inside a packed buffer. Borrows the buffer.
struct PackedStageView {
    std::uint32_t input_bits = 0;
    std::uint32_t u = 0;
    std::uint8_t n = 0;
    std::uint8_t index_width = 0; // 8, 10, 12, 16
    const std::uint8_t* map_lo = nullptr;
    const std::uint8_t* map_hi = nullptr;
    const std::uint8_t* luts = nullptr;
    std::size_t map_bytes = 0;
    std::size_t lut_bytes = 0;

    std::uint32_t pin_index(std::uint32_t pin) const;
    bool lut_bit(std::uint32_t lut, std::uint32_t row) const {
        std::size_t pos = (std::size_t(lut) << n) | row;
        return (luts[pos >> 3] >> (pos & 7)) & 1;
    }
};

/// Parsed, validated directory of a packed buffer. Map and LUT payloads stay
/// in the caller's bytes; the view is only valid while they are.
struct PackedView {
    HeadKind head = HeadKind::Popcount;
    std::uint32_t class_count = 0;
    double tau = 1.0;
    std::uint32_t input_bits = 0;
    std::uint32_t shared_prefix = 0;
    std::uint32_t feature_count = 0;
    std::uint32_t z = 0;
    std::vector<double> thresholds; // feature-major, empty without codec
    std::vector<double> qlo, qhi;   // empty without quantization
    std::vector<std::vector<PackedStageView>> chains;
    std::size_t total_bytes = 0;
};

PackedView parse_packed(std::span<const std::uint8_t> bytes);

/// Bits one scratchpad must hold to run the model (max of input and widths).
std::uint32_t scratchpad_bits(const PackedView& view);

/// Run inference straight from the packed bytes with two alternating
/// scratchpads: stage s reads pad s%2 and writes pad (s+1)%2, and each chain
/// restarts from the encoded input.
std::uint32_t interpret(const PackedView& view, const BitVector& input);
std::uint32_t interpret(std::span<const std::uint8_t> bytes, const BitVector& input);

struct PackedStageStats {
    std::uint32_t input_bits = 0;
    std::uint32_t u = 0;
    std::uint8_t n = 0;
    std::uint8_t index_width = 0;
    std::size_t map_bytes = 0;
    std::size_t lut_bytes = 0;
};

struct PackedStats {
    std::size_t total_bytes = 0;
    std::size_t header_bytes = 0; // everything before the first chain
    std::uint32_t scratchpad_bits = 0;
    std::vector<std::vector<PackedStageStats>> chains;
};

PackedStats packed_stats(std::span<const std::uint8_t> bytes);

} // namespace dwn
