#include "dwn/thermometer.hpp"

#include <algorithm>
#include <cmath>

#include "dwn/errors.hpp"

namespace dwn {

namespace {

double nudge_scale(double v) { return 1e-6 * std::max(1.0, std::fabs(v)); }

} // namespace

ThermometerCodec::ThermometerCodec(std::uint32_t feature_count, std::uint32_t bits_per_feature,
                                   std::vector<double> thresholds,
                                   std::vector<std::uint32_t> degenerate)
    : features_(feature_count),
      z_(bits_per_feature),
      thresholds_(std::move(thresholds)),
      degenerate_(std::move(degenerate)) {
    if (z_ == 0) throw ConfigError("ThermometerCodec: bits per feature must be >= 1");
    if (thresholds_.size() != std::size_t(features_) * z_)
        throw InputShapeError("ThermometerCodec: expected " + std::to_string(std::size_t(features_) * z_) +
                              " thresholds, got " + std::to_string(thresholds_.size()));
    for (std::uint32_t f = 0; f < features_; ++f)
        for (std::uint32_t k = 1; k < z_; ++k)
            if (!(thresholds_[std::size_t(f) * z_ + k] > thresholds_[std::size_t(f) * z_ + k - 1]))
                throw ConfigError("ThermometerCodec: thresholds of feature " + std::to_string(f) +
                                  " are not strictly increasing");
}

std::span<const double> ThermometerCodec::thresholds(std::uint32_t f) const {
    if (f >= features_)
        throw InputShapeError("ThermometerCodec: feature " + std::to_string(f) + " out of range");
    return {thresholds_.data() + std::size_t(f) * z_, z_};
}

void ThermometerCodec::encode(std::span<const double> x, BitVector& out) const {
    if (x.size() != features_)
        throw InputShapeError("encode: expected " + std::to_string(features_) + " features, got " +
                              std::to_string(x.size()));
    if (out.size() != encoded_bits()) out = BitVector(encoded_bits());
    else out.clear();
    std::size_t bit = 0;
    for (std::uint32_t f = 0; f < features_; ++f) {
        const double* t = thresholds_.data() + std::size_t(f) * z_;
        for (std::uint32_t k = 0; k < z_; ++k, ++bit)
            if (x[f] > t[k]) out.set(bit, true);
    }
}

BitVector ThermometerCodec::encode(std::span<const double> x) const {
    BitVector out(encoded_bits());
    encode(x, out);
    return out;
}

double empirical_quantile(std::vector<double> sorted_column, double q) {
    if (sorted_column.empty()) throw InputShapeError("empirical_quantile: empty column");
    const std::size_t m = sorted_column.size();
    if (m == 1) return sorted_column[0];
    double p = q * double(m - 1);
    if (p <= 0.0) return sorted_column.front();
    if (p >= double(m - 1)) return sorted_column.back();
    std::size_t lo = std::size_t(p);
    double frac = p - double(lo);
    return sorted_column[lo] + frac * (sorted_column[lo + 1] - sorted_column[lo]);
}

ThermometerCodec fit_distributive(const std::vector<std::vector<double>>& columns, std::uint32_t z) {
    if (z == 0) throw ConfigError("fit_distributive: z must be >= 1");
    if (columns.empty()) throw InputShapeError("fit_distributive: no feature columns");

    const std::uint32_t features = std::uint32_t(columns.size());
    std::vector<double> thresholds(std::size_t(features) * z);
    std::vector<std::uint32_t> degenerate;

    for (std::uint32_t f = 0; f < features; ++f) {
        if (columns[f].empty())
            throw InputShapeError("fit_distributive: feature column " + std::to_string(f) + " is empty");
        std::vector<double> sorted = columns[f];
        std::sort(sorted.begin(), sorted.end());
        double* t = thresholds.data() + std::size_t(f) * z;

        if (sorted.front() == sorted.back()) {
            // Constant column: spread thresholds evenly across a small band.
            degenerate.push_back(f);
            const double c = sorted.front();
            const double eps = nudge_scale(c);
            const double lo = c - eps, hi = c + eps;
            if (z == 1) {
                t[0] = c;
            } else {
                for (std::uint32_t k = 0; k < z; ++k)
                    t[k] = lo + (hi - lo) * double(k) / double(z - 1);
            }
            continue;
        }

        for (std::uint32_t k = 0; k < z; ++k)
            t[k] = empirical_quantile(sorted, double(k + 1) / double(z + 1));
        // Duplicate quantiles happen on heavily tied columns; push each
        // repeat just above its predecessor.
        for (std::uint32_t k = 1; k < z; ++k)
            if (t[k] <= t[k - 1]) t[k] = t[k - 1] + nudge_scale(t[k - 1]);
    }
    return ThermometerCodec(features, z, std::move(thresholds), std::move(degenerate));
}

std::vector<std::uint8_t> quantize8(std::span<const double> x, std::span<const double> lo,
                                    std::span<const double> hi,
                                    std::vector<std::uint32_t>* degenerate) {
    if (x.size() != lo.size() || x.size() != hi.size())
        throw InputShapeError("quantize8: x, lo, hi must have equal length");
    std::vector<std::uint8_t> out(x.size());
    for (std::size_t f = 0; f < x.size(); ++f) {
        if (hi[f] < lo[f])
            throw ConfigError("quantize8: hi < lo for feature " + std::to_string(f));
        if (hi[f] == lo[f]) {
            out[f] = 128;
            if (degenerate) degenerate->push_back(std::uint32_t(f));
            continue;
        }
        double scaled = 255.0 * (x[f] - lo[f]) / (hi[f] - lo[f]);
        double rounded = std::floor(scaled + 0.5); // round half up
        out[f] = std::uint8_t(std::clamp(rounded, 0.0, 255.0));
    }
    return out;
}

} // namespace dwn
