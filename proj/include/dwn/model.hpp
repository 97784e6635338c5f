#pragma once

/**
 * @file model.hpp
 * @brief Model assembly: stage wiring, training-mode network, frozen network.
 *
 * A model is one shared body chain plus, for pyramid heads, one reduction
 * chain per class (a single chain when the task is binary). With a popcount
 * head the body's final layer is partitioned into class blocks. When the head
 * is a pyramid and no explicit pyramid widths are given, the configured layer
 * widths themselves form the pyramid.
 */

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "dwn/heads.hpp"
#include "dwn/lut_layer.hpp"
#include "dwn/mapping.hpp"
#include "dwn/thermometer.hpp"

namespace dwn {

enum class MappingKind : std::uint8_t { Random = 0, Learnable = 1 };
enum class HeadKind : std::uint8_t { Popcount = 0, Pyramid = 1 };
enum class GradRule : std::uint8_t { Efd = 0, Fd = 1 };

struct ModelConfig {
    std::uint32_t z = 8;
    bool quantize_inputs = false;

    std::vector<std::uint32_t> layers;
    std::vector<std::uint32_t> lut_inputs = {6}; // broadcast when a single value
    std::vector<MappingKind> mapping;            // empty: learnable first stage, random rest
    std::vector<std::uint8_t> spectral;          // empty: all off; single value: broadcast
    double lambda = 1e-3;

    HeadKind head = HeadKind::Popcount;
    std::vector<std::uint32_t> pyramid; // explicit pyramid widths above the body
    double tau = 1.0;

    std::uint32_t batch_size = 32;
    std::uint32_t epochs = 0;
    std::vector<std::pair<double, std::uint32_t>> lr; // (rate, epoch count) stages
    GradRule grad = GradRule::Efd;
    bool adam = true;

    /// Widths of every stage in execution order: body stages, then the
    /// per-class pyramid stages once (chains share the shape).
    std::vector<std::uint32_t> body_widths() const;
    std::vector<std::uint32_t> chain_widths() const;

    /// Throws ConfigError on any inconsistency; epochs=0 skips schedule checks.
    void validate() const;

    std::uint32_t fan_in_at(std::size_t stage_index) const;
    MappingKind mapping_at(std::size_t stage_index) const;
    bool spectral_at(std::size_t stage_index) const;
    std::size_t total_stage_count() const;
};

/// One mapping + LUT layer step of a chain.
struct Stage {
    std::uint32_t input_bits = 0;
    MappingKind kind = MappingKind::Random;
    FixedMapping fixed;   // used when kind == Random
    LearnableMapping lm;  // used when kind == Learnable
    LutLayer layer;
    bool spectral = false;

    Stage(std::uint32_t in_bits, std::uint32_t n, std::uint32_t u) : input_bits(in_bits), layer(n, u) {}
    std::uint32_t width() const { return layer.size(); }
    std::uint32_t pins() const { return layer.size() * layer.fan_in(); }
    /// Current pin sources (argmax for learnable, table for fixed).
    void current_selection(std::vector<std::uint32_t>& sel) const;
};

struct FrozenStage {
    std::uint32_t input_bits = 0;
    std::uint32_t n = 0;
    std::uint32_t u = 0;
    std::vector<std::uint32_t> sel; // u*n pin sources
    BitVector table;                // u*2^n bits, lut-major delta order

    bool table_bit(std::uint32_t lut, std::uint32_t row) const {
        return table.get(std::size_t(lut) << n | row);
    }
};

/// Inference-only model: binary tables, fixed mappings, integer head math.
struct FrozenModel {
    std::uint32_t input_bits = 0;
    HeadKind head = HeadKind::Popcount;
    double tau = 1.0;
    std::uint32_t class_count = 0;
    std::vector<std::vector<FrozenStage>> chains; // popcount: exactly one
    /// Leading stages every chain shares (multi-class pyramids replicate the
    /// body for execution; area accounting must not double-count it).
    std::uint32_t shared_prefix = 0;

    bool has_codec = false;
    ThermometerCodec codec;
    std::vector<double> quant_lo, quant_hi; // 8-bit input quantization, empty = off

    /// Output bits of one chain's final layer.
    BitVector run_chain(std::size_t chain, const BitVector& encoded) const;
    /// Per-class popcount of the final layer (popcount head only).
    std::vector<std::uint32_t> class_counts(const BitVector& encoded) const;
    /// argmax class; ties break to the lowest class index.
    std::uint32_t predict(const BitVector& encoded) const;
    /// Encode raw features with the stored codec, then predict.
    std::uint32_t predict_raw(std::span<const double> features) const;

    void validate() const; // shape wiring check, ConfigError
};

class TrainingModel {
  public:
    /// input_bits = encoded width. Seeds mappings and tables from init_rng.
    TrainingModel(const ModelConfig& config, std::uint32_t input_bits, std::uint32_t class_count,
                  Rng& init_rng);

    const ModelConfig& config() const { return config_; }
    std::uint32_t input_bits() const { return input_bits_; }
    std::uint32_t class_count() const { return class_count_; }
    HeadKind head() const { return config_.head; }
    double tau() const { return config_.tau; }

    std::vector<Stage>& body() { return body_; }
    const std::vector<Stage>& body() const { return body_; }
    std::vector<std::vector<Stage>>& pyramid_chains() { return chains_; }
    const std::vector<std::vector<Stage>>& pyramid_chains() const { return chains_; }
    const PopcountHead& pop_head() const { return pop_head_; }

    /// Hard-path class decision on one encoded sample (sign tables, argmax
    /// selections, integer counts). Matches freeze()'s outputs bit-exactly.
    std::uint32_t predict_hard(const BitVector& encoded) const;

    /// Binarize tables and freeze mappings. For pyramid heads each frozen
    /// chain is the shared body followed by that class's reduction stages.
    FrozenModel freeze(const ThermometerCodec* codec) const;

    /// All trainable tensors in a stable order (tables first per stage, then
    /// mapping weights), for the optimizer and snapshots.
    std::vector<Eigen::MatrixXd*> parameters();

    /// Deep copies of parameter values, index-aligned with parameters().
    std::vector<Eigen::MatrixXd> snapshot() const;
    void restore(const std::vector<Eigen::MatrixXd>& snap);

    void clamp_tables(double lo = -1.0, double hi = 1.0);
    bool any_spectral() const;

  private:
    ModelConfig config_;
    std::uint32_t input_bits_ = 0;
    std::uint32_t class_count_ = 0;
    std::vector<Stage> body_;
    std::vector<std::vector<Stage>> chains_;
    PopcountHead pop_head_;
};

/// Convenience: validates the config against data dimensions and wires the model.
TrainingModel build_model(const ModelConfig& config, std::uint32_t input_bits,
                          std::uint32_t class_count, std::uint64_t seed);

} // namespace dwn
