#include "dwn/packed_model.hpp"

#include <cmath>
#include <cstring>

#include "dwn/errors.hpp"
#include "dwn/heads.hpp"

namespace dwn {

std::uint8_t packed_index_width(std::uint32_t input_bits) {
    if (input_bits <= 256) return 8;
    if (input_bits <= 1024) return 10;
    if (input_bits <= 4096) return 12;
    if (input_bits <= 65536) return 16;
    throw PackingOverflow("packed: a stage with " + std::to_string(input_bits) +
                          " inputs exceeds the 16-bit index limit");
}

namespace {

std::uint8_t width_code(std::uint8_t width) {
    switch (width) {
    case 8: return 0;
    case 10: return 1;
    case 12: return 2;
    default: return 3;
    }
}

std::uint8_t width_from_code(std::uint8_t code) {
    static constexpr std::uint8_t w[4] = {8, 10, 12, 16};
    return w[code];
}

std::size_t map_hi_bytes(std::uint8_t width, std::size_t pins) {
    switch (width) {
    case 8: return 0;
    case 10: return (2 * pins + 7) / 8;
    case 12: return (pins + 1) / 2;
    default: return pins;
    }
}

class Writer {
  public:
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u16(std::uint16_t v) {
        u8(std::uint8_t(v));
        u8(std::uint8_t(v >> 8));
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) u8(std::uint8_t(v >> (8 * i)));
    }
    void f64(double v) {
        std::uint64_t b;
        std::memcpy(&b, &v, sizeof b);
        for (int i = 0; i < 8; ++i) u8(std::uint8_t(b >> (8 * i)));
    }
    std::vector<std::uint8_t> take() { return std::move(out_); }

  private:
    std::vector<std::uint8_t> out_;
};

void write_stage(Writer& w, const FrozenStage& st) {
    const std::uint8_t width = packed_index_width(st.input_bits);
    w.u32(st.input_bits);
    w.u8(st.n);
    w.u8(width_code(width));
    w.u16(0);
    w.u32(st.u);

    const std::size_t pins = st.sel.size();
    for (std::size_t p = 0; p < pins; ++p) w.u8(std::uint8_t(st.sel[p]));
    if (width == 10) {
        for (std::size_t base = 0; base < pins; base += 4) {
            std::uint8_t b = 0;
            for (std::size_t k = 0; k < 4 && base + k < pins; ++k)
                b |= std::uint8_t((st.sel[base + k] >> 8) & 3) << (2 * k);
            w.u8(b);
        }
    } else if (width == 12) {
        for (std::size_t base = 0; base < pins; base += 2) {
            std::uint8_t b = std::uint8_t((st.sel[base] >> 8) & 0xF);
            if (base + 1 < pins) b |= std::uint8_t((st.sel[base + 1] >> 8) & 0xF) << 4;
            w.u8(b);
        }
    } else if (width == 16) {
        for (std::size_t p = 0; p < pins; ++p) w.u8(std::uint8_t(st.sel[p] >> 8));
    }

    const std::size_t bits = std::size_t(st.u) << st.n;
    for (std::size_t base = 0; base < bits; base += 8) {
        std::uint8_t b = 0;
        for (std::size_t k = 0; k < 8 && base + k < bits; ++k)
            b |= std::uint8_t(st.table.get(base + k)) << k;
        w.u8(b);
    }
}

} // namespace

std::vector<std::uint8_t> pack(const FrozenModel& model) {
    if (model.chains.empty()) throw NotFrozenError("packed: model has no frozen stages");
    model.validate();
    const bool quant = !model.quant_lo.empty();
    if (quant && !model.has_codec)
        throw ConfigError("packed: quantization bounds without a codec");
    if (quant && (model.quant_lo.size() != model.codec.feature_count() ||
                  model.quant_hi.size() != model.codec.feature_count()))
        throw ConfigError("packed: quantization bounds do not match the feature count");

    Writer w;
    w.u8('D');
    w.u8('W');
    w.u8('N');
    w.u8('M');
    w.u16(kPackedVersion);
    w.u8(std::uint8_t(model.head));
    w.u8(std::uint8_t(model.has_codec ? 1 : 0) | std::uint8_t(quant ? 2 : 0));
    w.u32(model.class_count);
    w.f64(model.tau);
    w.u32(model.input_bits);
    w.u32(std::uint32_t(model.chains.size()));
    w.u32(model.shared_prefix);
    w.u32(model.has_codec ? model.codec.feature_count() : 0);
    w.u32(model.has_codec ? model.codec.bits_per_feature() : 0);
    if (model.has_codec)
        for (double t : model.codec.all_thresholds()) w.f64(t);
    if (quant) {
        for (double v : model.quant_lo) w.f64(v);
        for (double v : model.quant_hi) w.f64(v);
    }
    for (const auto& chain : model.chains) {
        w.u32(std::uint32_t(chain.size()));
        for (const auto& st : chain) write_stage(w, st);
    }
    return w.take();
}

namespace {

class Cursor {
  public:
    explicit Cursor(std::span<const std::uint8_t> bytes) : b_(bytes) {}

    std::size_t pos() const { return pos_; }

    void need(std::size_t count, const char* what) const {
        if (b_.size() - pos_ < count)
            throw FormatError(std::string("packed: truncated ") + what, pos_);
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return b_[pos_++];
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        std::uint16_t v = std::uint16_t(b_[pos_]) | std::uint16_t(b_[pos_ + 1]) << 8;
        pos_ += 2;
        return v;
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(b_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    double f64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(b_[pos_ + i]) << (8 * i);
        pos_ += 8;
        double d;
        std::memcpy(&d, &v, sizeof d);
        return d;
    }
    const std::uint8_t* raw(std::size_t count, const char* what) {
        need(count, what);
        const std::uint8_t* p = b_.data() + pos_;
        pos_ += count;
        return p;
    }
    bool at_end() const { return pos_ == b_.size(); }

  private:
    std::span<const std::uint8_t> b_;
    std::size_t pos_ = 0;
};

PackedStageView parse_stage(Cursor& c, std::uint32_t expected_inputs) {
    PackedStageView st;
    const std::size_t field_at = c.pos();
    st.input_bits = c.u32("stage input length");
    if (st.input_bits != expected_inputs)
        throw FormatError("packed: stage expects " + std::to_string(st.input_bits) +
                              " inputs where " + std::to_string(expected_inputs) + " are produced",
                          field_at);
    if (st.input_bits > 65536)
        throw FormatError("packed: input length exceeds the 16-bit index limit", field_at);
    st.n = c.u8("stage fan-in");
    if (st.n < 1 || st.n > kMaxFanIn)
        throw FormatError("packed: fan-in " + std::to_string(st.n) + " out of range", c.pos() - 1);
    const std::size_t code_at = c.pos();
    const std::uint8_t code = c.u8("index width code");
    if (code > 3) throw FormatError("packed: unknown index width code", code_at);
    st.index_width = width_from_code(code);
    if (st.index_width != packed_index_width(st.input_bits))
        throw FormatError("packed: index width not minimal for the input length", code_at);
    const std::size_t pad_at = c.pos();
    if (c.u16("reserved field") != 0)
        throw FormatError("packed: reserved field must be zero", pad_at);
    const std::size_t u_at = c.pos();
    st.u = c.u32("LUT count");
    if (st.u == 0) throw FormatError("packed: empty stage", u_at);

    const std::size_t pins = std::size_t(st.u) * st.n;
    const std::size_t map_lo_at = c.pos();
    st.map_lo = c.raw(pins, "pin index low bytes");
    st.map_hi = c.raw(map_hi_bytes(st.index_width, pins), "pin index high bits");
    st.map_bytes = pins + map_hi_bytes(st.index_width, pins);
    for (std::size_t p = 0; p < pins; ++p)
        if (st.pin_index(std::uint32_t(p)) >= st.input_bits)
            throw FormatError("packed: pin index out of range", map_lo_at + p);

    const std::size_t bits = std::size_t(st.u) << st.n;
    st.lut_bytes = (bits + 7) / 8;
    const std::size_t luts_at = c.pos();
    st.luts = c.raw(st.lut_bytes, "LUT contents");
    if (bits % 8 != 0 && (st.luts[st.lut_bytes - 1] >> (bits % 8)) != 0)
        throw FormatError("packed: stray bits after the last LUT entry",
                          luts_at + st.lut_bytes - 1);
    return st;
}

} // namespace

std::uint32_t PackedStageView::pin_index(std::uint32_t pin) const {
    const std::uint32_t lo = map_lo[pin];
    switch (index_width) {
    case 8: return lo;
    case 10: return std::uint32_t((map_hi[pin >> 2] >> ((pin & 3) * 2)) & 3) << 8 | lo;
    case 12: return std::uint32_t((map_hi[pin >> 1] >> ((pin & 1) * 4)) & 0xF) << 8 | lo;
    default: return std::uint32_t(map_hi[pin]) << 8 | lo;
    }
}

PackedView parse_packed(std::span<const std::uint8_t> bytes) {
    Cursor c(bytes);
    PackedView v;
    v.total_bytes = bytes.size();

    const std::uint8_t* magic = c.raw(4, "magic");
    if (std::memcmp(magic, "DWNM", 4) != 0) throw FormatError("packed: bad magic", 0);
    const std::uint16_t version = c.u16("version");
    if (version != kPackedVersion)
        throw FormatError("packed: unsupported version " + std::to_string(version), 4);
    const std::uint8_t head = c.u8("head kind");
    if (head > 1) throw FormatError("packed: unknown head kind", 6);
    v.head = HeadKind(head);
    const std::uint8_t flags = c.u8("flags");
    if (flags & ~3u) throw FormatError("packed: unknown flag bits", 7);
    if ((flags & 2) && !(flags & 1))
        throw FormatError("packed: quantization bounds without a codec", 7);
    v.class_count = c.u32("class count");
    if (v.class_count < 2) throw FormatError("packed: class count below 2", 8);
    v.tau = c.f64("tau");
    if (!std::isfinite(v.tau) || v.tau <= 0.0) throw FormatError("packed: tau not positive", 12);
    v.input_bits = c.u32("input width");
    if (v.input_bits == 0) throw FormatError("packed: zero input width", 20);
    if (v.input_bits > 65536)
        throw FormatError("packed: input width exceeds the 16-bit index limit", 20);
    const std::uint32_t chain_count = c.u32("chain count");
    const std::uint32_t expected_chains =
        v.head == HeadKind::Popcount ? 1 : (v.class_count == 2 ? 1 : v.class_count);
    if (chain_count != expected_chains)
        throw FormatError("packed: expected " + std::to_string(expected_chains) +
                              " chains for this head, found " + std::to_string(chain_count),
                          24);
    v.shared_prefix = c.u32("shared prefix");
    if (chain_count == 1 && v.shared_prefix != 0)
        throw FormatError("packed: shared prefix on a single chain", 28);
    v.feature_count = c.u32("feature count");
    v.z = c.u32("thresholds per feature");
    if (flags & 1) {
        if (v.feature_count == 0 || v.z == 0)
            throw FormatError("packed: codec flagged but feature count or z is zero", 32);
        v.thresholds.resize(std::size_t(v.feature_count) * v.z);
        for (auto& t : v.thresholds) t = c.f64("thresholds");
    } else if (v.feature_count != 0 || v.z != 0) {
        throw FormatError("packed: feature metadata without a codec", 32);
    }
    if (flags & 2) {
        v.qlo.resize(v.feature_count);
        v.qhi.resize(v.feature_count);
        for (auto& x : v.qlo) x = c.f64("quantization lows");
        for (auto& x : v.qhi) x = c.f64("quantization highs");
    }

    std::vector<std::vector<std::size_t>> stage_starts;
    for (std::uint32_t ci = 0; ci < chain_count; ++ci) {
        const std::size_t count_at = c.pos();
        const std::uint32_t stage_count = c.u32("stage count");
        if (stage_count == 0) throw FormatError("packed: chain with no stages", count_at);
        if (v.shared_prefix >= stage_count && chain_count > 1)
            throw FormatError("packed: shared prefix covers a whole chain", 28);
        std::vector<PackedStageView> chain;
        std::vector<std::size_t> starts;
        std::uint32_t expect = v.input_bits;
        for (std::uint32_t s = 0; s < stage_count; ++s) {
            starts.push_back(c.pos());
            chain.push_back(parse_stage(c, expect));
            expect = chain.back().u;
        }
        stage_starts.push_back(std::move(starts));
        if (v.head == HeadKind::Pyramid && chain.back().u != 1)
            throw FormatError("packed: pyramid chain must end at width 1", count_at);
        if (v.head == HeadKind::Popcount && chain.back().u < v.class_count)
            throw FormatError("packed: final width below the class count", count_at);
        v.chains.push_back(std::move(chain));
    }
    if (!c.at_end()) throw FormatError("packed: trailing bytes", c.pos());

    for (std::size_t ci = 1; ci < v.chains.size(); ++ci)
        for (std::uint32_t s = 0; s < v.shared_prefix; ++s) {
            const auto& a = v.chains[0][s];
            const auto& b = v.chains[ci][s];
            const bool same = a.input_bits == b.input_bits && a.n == b.n && a.u == b.u &&
                              std::memcmp(a.map_lo, b.map_lo, a.map_bytes) == 0 &&
                              std::memcmp(a.luts, b.luts, a.lut_bytes) == 0;
            if (!same)
                throw FormatError("packed: shared prefix differs between chains",
                                  stage_starts[ci][s]);
        }
    return v;
}

std::uint32_t scratchpad_bits(const PackedView& view) {
    std::uint32_t bits = view.input_bits;
    for (const auto& chain : view.chains)
        for (const auto& st : chain) bits = std::max(bits, st.u);
    return bits;
}

std::uint32_t interpret(const PackedView& view, const BitVector& input) {
    if (input.size() != view.input_bits)
        throw InputShapeError("packed: expected " + std::to_string(view.input_bits) +
                              " input bits, got " + std::to_string(input.size()));
    const std::uint32_t pad_bits = scratchpad_bits(view);
    BitVector pad[2] = {BitVector(pad_bits), BitVector(pad_bits)};

    std::vector<bool> finals;
    std::uint32_t final_width = 0;
    std::size_t final_pad = 0;
    for (const auto& chain : view.chains) {
        pad[0].clear();
        for (std::uint32_t k = 0; k < view.input_bits; ++k) pad[0].set(k, input.get(k));
        for (std::size_t s = 0; s < chain.size(); ++s) {
            const auto& st = chain[s];
            const BitVector& in = pad[s % 2];
            BitVector& out = pad[(s + 1) % 2];
            for (std::uint32_t lut = 0; lut < st.u; ++lut) {
                std::uint32_t addr = 0;
                for (std::uint32_t j = 0; j < st.n; ++j)
                    addr = addr << 1 | std::uint32_t(in.get(st.pin_index(lut * st.n + j)));
                out.set(lut, st.lut_bit(lut, addr));
            }
        }
        final_pad = chain.size() % 2;
        final_width = chain.back().u;
        finals.push_back(pad[final_pad].get(0));
    }

    if (view.head == HeadKind::Pyramid) {
        if (view.chains.size() == 1) return finals[0] ? 1 : 0;
        for (std::size_t cls = 0; cls < finals.size(); ++cls)
            if (finals[cls]) return std::uint32_t(cls);
        return 0;
    }
    PopcountHead head(final_width, view.class_count, view.tau);
    const BitVector& last = pad[final_pad];
    std::uint32_t best = 0, best_count = 0;
    for (std::uint32_t cls = 0; cls < view.class_count; ++cls) {
        std::uint32_t count = 0;
        const std::uint32_t start = head.block_start(cls);
        for (std::uint32_t k = 0; k < head.block_len(cls); ++k) count += last.get(start + k);
        if (count > best_count) {
            best = cls;
            best_count = count;
        }
    }
    return best;
}

std::uint32_t interpret(std::span<const std::uint8_t> bytes, const BitVector& input) {
    return interpret(parse_packed(bytes), input);
}

FrozenModel unpack(std::span<const std::uint8_t> bytes) {
    const PackedView v = parse_packed(bytes);
    FrozenModel fm;
    fm.input_bits = v.input_bits;
    fm.head = v.head;
    fm.tau = v.tau;
    fm.class_count = v.class_count;
    fm.shared_prefix = v.shared_prefix;
    if (!v.thresholds.empty()) {
        try {
            fm.codec = ThermometerCodec(v.feature_count, v.z, v.thresholds);
        } catch (const Error& e) {
            throw FormatError(std::string("packed: bad thresholds: ") + e.what(),
                              kPackedHeaderBytes);
        }
        fm.has_codec = true;
    }
    fm.quant_lo = v.qlo;
    fm.quant_hi = v.qhi;
    for (const auto& chain : v.chains) {
        std::vector<FrozenStage> out;
        for (const auto& st : chain) {
            FrozenStage fs;
            fs.input_bits = st.input_bits;
            fs.n = st.n;
            fs.u = st.u;
            fs.sel.resize(std::size_t(st.u) * st.n);
            for (std::size_t p = 0; p < fs.sel.size(); ++p)
                fs.sel[p] = st.pin_index(std::uint32_t(p));
            const std::size_t bits = std::size_t(st.u) << st.n;
            fs.table = BitVector(bits);
            for (std::size_t b = 0; b < bits; ++b)
                fs.table.set(b, (st.luts[b >> 3] >> (b & 7)) & 1);
            out.push_back(std::move(fs));
        }
        fm.chains.push_back(std::move(out));
    }
    fm.validate();
    return fm;
}

PackedStats packed_stats(std::span<const std::uint8_t> bytes) {
    const PackedView v = parse_packed(bytes);
    PackedStats stats;
    stats.total_bytes = v.total_bytes;
    stats.header_bytes = kPackedHeaderBytes + 8 * v.thresholds.size() +
                         8 * (v.qlo.size() + v.qhi.size());
    stats.scratchpad_bits = scratchpad_bits(v);
    for (const auto& chain : v.chains) {
        std::vector<PackedStageStats> out;
        for (const auto& st : chain)
            out.push_back({st.input_bits, st.u, st.n, st.index_width, st.map_bytes, st.lut_bytes});
        stats.chains.push_back(std::move(out));
    }
    return stats;
}

} // namespace dwn
