#pragma once

/**
 * @file bitvector.hpp
 * @brief Fixed-length bit vector packed into 64-bit words.
 */

#include <bit>
#include <cstdint>
#include <vector>

#include "dwn/errors.hpp"

namespace dwn {

/// Bits beyond size() are kept zero so popcount and equality can work word-wise.
class BitVector {
  public:
    BitVector() = default;

    explicit BitVector(std::size_t n) : size_(n), words_((n + 63) / 64, 0) {}

    std::size_t size() const { return size_; }

    bool get(std::size_t i) const {
        check_index(i);
        return (words_[i >> 6] >> (i & 63)) & 1u;
    }

    void set(std::size_t i, bool v) {
        check_index(i);
        const std::uint64_t mask = std::uint64_t(1) << (i & 63);
        if (v)
            words_[i >> 6] |= mask;
        else
            words_[i >> 6] &= ~mask;
    }

    void clear() {
        for (auto& w : words_) w = 0;
    }

    std::size_t popcount() const {
        std::size_t c = 0;
        for (auto w : words_) c += std::size_t(std::popcount(w));
        return c;
    }

    const std::vector<std::uint64_t>& words() const { return words_; }

    bool operator==(const BitVector& o) const {
        return size_ == o.size_ && words_ == o.words_;
    }

  private:
    void check_index(std::size_t i) const {
        if (i >= size_)
            throw InputShapeError("BitVector: index " + std::to_string(i) + " out of range for size " +
                                  std::to_string(size_));
    }

    std::size_t size_ = 0;
    std::vector<std::uint64_t> words_;
};

} // namespace dwn
