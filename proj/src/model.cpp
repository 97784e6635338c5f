#include "dwn/model.hpp"

#include <algorithm>

namespace dwn {

std::vector<std::uint32_t> ModelConfig::body_widths() const {
    if (head == HeadKind::Popcount) return layers;
    return pyramid.empty() ? std::vector<std::uint32_t>{} : layers;
}

std::vector<std::uint32_t> ModelConfig::chain_widths() const {
    if (head == HeadKind::Popcount) return {};
    return pyramid.empty() ? layers : pyramid;
}

std::size_t ModelConfig::total_stage_count() const {
    return body_widths().size() + chain_widths().size();
}

std::uint32_t ModelConfig::fan_in_at(std::size_t stage_index) const {
    if (lut_inputs.size() == 1) return lut_inputs[0];
    return lut_inputs.at(stage_index);
}

MappingKind ModelConfig::mapping_at(std::size_t stage_index) const {
    if (mapping.empty()) return stage_index == 0 ? MappingKind::Learnable : MappingKind::Random;
    if (mapping.size() == 1) return mapping[0];
    return mapping.at(stage_index);
}

bool ModelConfig::spectral_at(std::size_t stage_index) const {
    if (spectral.empty()) return false;
    if (spectral.size() == 1) return spectral[0] != 0;
    return spectral.at(stage_index) != 0;
}

void ModelConfig::validate() const {
    if (z < 1) throw ConfigError("config: z must be >= 1");
    if (!(tau > 0.0)) throw ConfigError("config: tau must be > 0");
    if (batch_size < 1) throw ConfigError("config: batch size must be >= 1");
    if (lambda < 0.0) throw ConfigError("config: lambda must be >= 0");

    for (std::size_t i = 0; i < layers.size(); ++i)
        if (layers[i] == 0) throw ConfigError("config: layer " + std::to_string(i) + " has width 0");

    if (head == HeadKind::Popcount) {
        if (layers.empty()) throw ConfigError("config: popcount head needs at least one layer");
        if (!pyramid.empty())
            throw ConfigError("config: pyramid widths given but head is popcount");
    } else {
        const auto chain = chain_widths();
        validate_pyramid_widths(chain);
    }

    const std::size_t stages = total_stage_count();
    if (lut_inputs.empty()) throw ConfigError("config: no LUT fan-in given");
    if (lut_inputs.size() != 1 && lut_inputs.size() != stages)
        throw ConfigError("config: n list has " + std::to_string(lut_inputs.size()) +
                          " entries, expected 1 or " + std::to_string(stages));
    for (std::size_t i = 0; i < lut_inputs.size(); ++i)
        if (lut_inputs[i] < 1 || lut_inputs[i] > kMaxFanIn)
            throw ConfigError("config: n at position " + std::to_string(i) + " must be 1.." +
                              std::to_string(kMaxFanIn));
    if (!mapping.empty() && mapping.size() != 1 && mapping.size() != stages)
        throw ConfigError("config: mapping list has " + std::to_string(mapping.size()) +
                          " entries, expected 1 or " + std::to_string(stages));
    if (!spectral.empty() && spectral.size() != 1 && spectral.size() != stages)
        throw ConfigError("config: spectral list has " + std::to_string(spectral.size()) +
                          " entries, expected 1 or " + std::to_string(stages));

    if (epochs > 0) {
        if (lr.empty()) throw ConfigError("config: no learning-rate schedule given");
        std::uint64_t total = 0;
        for (const auto& [rate, count] : lr) {
            if (!(rate > 0.0)) throw ConfigError("config: learning rate must be > 0");
            total += count;
        }
        if (total != epochs)
            throw ConfigError("config: schedule stages cover " + std::to_string(total) +
                              " epochs but epochs = " + std::to_string(epochs));
    }
}

void Stage::current_selection(std::vector<std::uint32_t>& sel) const {
    if (kind == MappingKind::Learnable) {
        lm.resolve(sel);
    } else {
        sel.assign(fixed.sel.begin(), fixed.sel.end());
    }
}

namespace {

Stage make_stage(const ModelConfig& config, std::size_t stage_index, std::uint32_t input_bits,
                 std::uint32_t width, Rng& rng) {
    Stage st(input_bits, config.fan_in_at(stage_index), width);
    st.kind = config.mapping_at(stage_index);
    st.spectral = config.spectral_at(stage_index);
    if (st.kind == MappingKind::Learnable) {
        st.lm = LearnableMapping(input_bits, st.pins());
        st.lm.init_normal(rng);
    } else {
        st.fixed = random_mapping(input_bits, st.pins(), rng.next_u64());
    }
    st.layer.init_uniform(rng);
    return st;
}

void run_stage_hard(const FrozenStage& st, const BitVector& in, BitVector& out) {
    if (in.size() != st.input_bits)
        throw InputShapeError("frozen stage: input has " + std::to_string(in.size()) +
                              " bits, expected " + std::to_string(st.input_bits));
    out = BitVector(st.u);
    for (std::uint32_t i = 0; i < st.u; ++i) {
        std::uint32_t a = 0;
        for (std::uint32_t j = 0; j < st.n; ++j)
            a |= std::uint32_t(in.get(st.sel[std::size_t(i) * st.n + j])) << (st.n - 1 - j);
        if (st.table_bit(i, a)) out.set(i, true);
    }
}

std::uint32_t argmax_lowest_u32(std::span<const std::uint32_t> v) {
    std::uint32_t best = 0;
    for (std::uint32_t c = 1; c < std::uint32_t(v.size()); ++c)
        if (v[c] > v[best]) best = c;
    return best;
}

} // namespace

TrainingModel::TrainingModel(const ModelConfig& config, std::uint32_t input_bits,
                             std::uint32_t class_count, Rng& init_rng)
    : config_(config), input_bits_(input_bits), class_count_(class_count) {
    config_.validate();
    if (input_bits_ < 1) throw ConfigError("model: encoded input width must be >= 1");
    if (class_count_ < 2) throw ConfigError("model: need at least 2 classes");

    const auto body_w = config_.body_widths();
    const auto chain_w = config_.chain_widths();

    std::uint32_t p = input_bits_;
    for (std::size_t s = 0; s < body_w.size(); ++s) {
        body_.push_back(make_stage(config_, s, p, body_w[s], init_rng));
        p = body_w[s];
    }

    if (config_.head == HeadKind::Popcount) {
        pop_head_ = PopcountHead(body_.back().width(), class_count_, config_.tau);
    } else {
        const std::uint32_t chain_count = class_count_ == 2 ? 1 : class_count_;
        const std::uint32_t chain_input = body_.empty() ? input_bits_ : body_.back().width();
        for (std::uint32_t c = 0; c < chain_count; ++c) {
            std::vector<Stage> chain;
            std::uint32_t cp = chain_input;
            for (std::size_t t = 0; t < chain_w.size(); ++t) {
                chain.push_back(make_stage(config_, body_w.size() + t, cp, chain_w[t], init_rng));
                cp = chain_w[t];
            }
            chains_.push_back(std::move(chain));
        }
    }
}

std::uint32_t TrainingModel::predict_hard(const BitVector& encoded) const {
    return freeze(nullptr).predict(encoded);
}

FrozenModel TrainingModel::freeze(const ThermometerCodec* codec) const {
    FrozenModel fm;
    fm.input_bits = input_bits_;
    fm.head = config_.head;
    fm.tau = config_.tau;
    fm.class_count = class_count_;
    if (codec) {
        fm.has_codec = true;
        fm.codec = *codec;
    }

    auto freeze_stage = [](const Stage& st) {
        FrozenStage fs;
        fs.input_bits = st.input_bits;
        fs.n = st.layer.fan_in();
        fs.u = st.layer.size();
        st.current_selection(fs.sel);
        fs.table = binarize(st.layer);
        return fs;
    };

    std::vector<FrozenStage> frozen_body;
    frozen_body.reserve(body_.size());
    for (const auto& st : body_) frozen_body.push_back(freeze_stage(st));

    if (config_.head == HeadKind::Popcount) {
        fm.chains.push_back(std::move(frozen_body));
    } else {
        fm.shared_prefix = chains_.size() > 1 ? std::uint32_t(frozen_body.size()) : 0;
        for (const auto& chain : chains_) {
            std::vector<FrozenStage> fc = frozen_body;
            for (const auto& st : chain) fc.push_back(freeze_stage(st));
            fm.chains.push_back(std::move(fc));
        }
    }
    return fm;
}

std::vector<Eigen::MatrixXd*> TrainingModel::parameters() {
    std::vector<Eigen::MatrixXd*> out;
    auto add = [&out](Stage& st) {
        out.push_back(&st.layer.table());
        if (st.kind == MappingKind::Learnable) out.push_back(&st.lm.weights());
    };
    for (auto& st : body_) add(st);
    for (auto& chain : chains_)
        for (auto& st : chain) add(st);
    return out;
}

std::vector<Eigen::MatrixXd> TrainingModel::snapshot() const {
    std::vector<Eigen::MatrixXd> out;
    auto add = [&out](const Stage& st) {
        out.push_back(st.layer.table());
        if (st.kind == MappingKind::Learnable) out.push_back(st.lm.weights());
    };
    for (const auto& st : body_) add(st);
    for (const auto& chain : chains_)
        for (const auto& st : chain) add(st);
    return out;
}

void TrainingModel::restore(const std::vector<Eigen::MatrixXd>& snap) {
    auto params = parameters();
    if (snap.size() != params.size())
        throw InputShapeError("restore: snapshot has " + std::to_string(snap.size()) +
                              " tensors, model has " + std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->rows() != snap[i].rows() || params[i]->cols() != snap[i].cols())
            throw InputShapeError("restore: tensor " + std::to_string(i) + " shape mismatch");
        *params[i] = snap[i];
    }
}

void TrainingModel::clamp_tables(double lo, double hi) {
    auto clamp_stage = [lo, hi](Stage& st) {
        st.layer.table() = st.layer.table().cwiseMax(lo).cwiseMin(hi);
    };
    for (auto& st : body_) clamp_stage(st);
    for (auto& chain : chains_)
        for (auto& st : chain) clamp_stage(st);
}

bool TrainingModel::any_spectral() const {
    for (const auto& st : body_)
        if (st.spectral) return true;
    for (const auto& chain : chains_)
        for (const auto& st : chain)
            if (st.spectral) return true;
    return false;
}

BitVector FrozenModel::run_chain(std::size_t chain, const BitVector& encoded) const {
    if (chain >= chains.size()) throw InputShapeError("frozen model: chain index out of range");
    BitVector cur = encoded;
    BitVector next;
    for (const auto& st : chains[chain]) {
        run_stage_hard(st, cur, next);
        std::swap(cur, next);
    }
    return cur;
}

std::vector<std::uint32_t> FrozenModel::class_counts(const BitVector& encoded) const {
    if (head != HeadKind::Popcount)
        throw ConfigError("frozen model: class_counts is a popcount-head operation");
    const BitVector bits = run_chain(0, encoded);
    PopcountHead h(std::uint32_t(bits.size()), class_count, tau);
    std::vector<std::uint32_t> counts(class_count, 0);
    for (std::uint32_t c = 0; c < class_count; ++c) {
        const std::uint32_t s = h.block_start(c), l = h.block_len(c);
        for (std::uint32_t i = 0; i < l; ++i) counts[c] += bits.get(s + i);
    }
    return counts;
}

std::uint32_t FrozenModel::predict(const BitVector& encoded) const {
    if (encoded.size() != input_bits)
        throw InputShapeError("frozen model: input has " + std::to_string(encoded.size()) +
                              " bits, expected " + std::to_string(input_bits));
    if (head == HeadKind::Popcount) {
        const auto counts = class_counts(encoded);
        return argmax_lowest_u32(counts);
    }
    // Pyramid: each chain ends in one bit; binary reads the single chain's
    // bit, multi-class takes the first chain reporting 1 (argmax, tie low).
    if (chains.size() == 1) return run_chain(0, encoded).get(0) ? 1u : 0u;
    std::vector<std::uint32_t> bits(chains.size(), 0);
    for (std::size_t c = 0; c < chains.size(); ++c) bits[c] = run_chain(c, encoded).get(0);
    return argmax_lowest_u32(bits);
}

std::uint32_t FrozenModel::predict_raw(std::span<const double> features) const {
    if (!has_codec) throw ConfigError("frozen model: no input codec stored");
    if (!quant_lo.empty()) {
        const auto q = quantize8(features, quant_lo, quant_hi);
        std::vector<double> qd(q.begin(), q.end());
        return predict(codec.encode(qd));
    }
    return predict(codec.encode(features));
}

void FrozenModel::validate() const {
    if (input_bits < 1) throw ConfigError("frozen model: empty input");
    if (class_count < 2) throw ConfigError("frozen model: need at least 2 classes");
    if (chains.empty()) throw ConfigError("frozen model: no chains");
    if (head == HeadKind::Popcount && chains.size() != 1)
        throw ConfigError("frozen model: popcount head expects exactly one chain");
    if (head == HeadKind::Pyramid) {
        const std::size_t expect = class_count == 2 ? 1 : class_count;
        if (chains.size() != expect)
            throw ConfigError("frozen model: pyramid head expects " + std::to_string(expect) +
                              " chains, got " + std::to_string(chains.size()));
    }
    for (const auto& chain : chains) {
        if (chain.empty()) throw ConfigError("frozen model: empty chain");
        if (shared_prefix > chain.size())
            throw ConfigError("frozen model: shared prefix longer than a chain");
        std::uint32_t p = input_bits;
        for (std::size_t s = 0; s < chain.size(); ++s) {
            const auto& st = chain[s];
            if (st.input_bits != p)
                throw ConfigError("frozen model: stage " + std::to_string(s) + " expects " +
                                  std::to_string(st.input_bits) + " input bits, gets " +
                                  std::to_string(p));
            if (st.n < 1 || st.n > kMaxFanIn || st.u < 1)
                throw ConfigError("frozen model: stage " + std::to_string(s) + " has bad shape");
            if (st.sel.size() != std::size_t(st.u) * st.n)
                throw ConfigError("frozen model: stage " + std::to_string(s) + " selection size");
            for (auto idx : st.sel)
                if (idx >= p)
                    throw MappingRangeError("frozen model: stage " + std::to_string(s) +
                                            " pin reads out of range");
            if (st.table.size() != (std::size_t(st.u) << st.n))
                throw ConfigError("frozen model: stage " + std::to_string(s) + " table size");
            p = st.u;
        }
        if (head == HeadKind::Pyramid && chain.back().u != 1)
            throw ConfigError("frozen model: pyramid chain must end in width 1");
        if (head == HeadKind::Popcount && chain.back().u < class_count)
            throw ConfigError("frozen model: final width smaller than class count");
    }
}

TrainingModel build_model(const ModelConfig& config, std::uint32_t input_bits,
                          std::uint32_t class_count, std::uint64_t seed) {
    Rng rng(seed);
    return TrainingModel(config, input_bits, class_count, rng);
}

} // namespace dwn
