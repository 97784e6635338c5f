#pragma once

/**
 * @file trainer.hpp
 * @brief Minibatch training loop: batched forward/backward, Adam/SGD,
 *        staged learning rates, checkpointing, hard-path evaluation.
 */

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "dwn/dataset.hpp"
#include "dwn/model.hpp"
#include "dwn/thermometer.hpp"

namespace dwn {

struct EncodedDataset {
    std::uint32_t input_bits = 0;
    std::uint32_t class_count = 0;
    std::vector<BitVector> rows;
    std::vector<std::uint32_t> labels;

    std::size_t size() const { return rows.size(); }
};

/// Raw features -> (optional 8-bit quantization) -> thermometer bits.
struct InputPipeline {
    bool quantized = false;
    std::vector<double> qlo, qhi; // per-feature quantization bounds
    ThermometerCodec codec;

    BitVector encode(std::span<const double> raw) const;
};

/// Fit quantization bounds (when the config asks) and thermometer thresholds
/// on the training features.
InputPipeline fit_input_pipeline(const Dataset& train, const ModelConfig& config);

EncodedDataset encode_dataset(const InputPipeline& pipe, const Dataset& d);

struct TrainOptions {
    std::uint64_t seed = 1;
    std::uint32_t threads = 1;
    bool strict_deterministic = false; // forces threads = 1
    std::ostream* log = nullptr;       // per-epoch lines when set
};

struct EpochRecord {
    std::uint32_t epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double test_accuracy = 0.0;
    double seconds = 0.0;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    double final_test_accuracy = 0.0; // of the returned (best-checkpoint) model
    double last_epoch_accuracy = 0.0;
    double best_test_accuracy = 0.0;
    std::uint32_t best_epoch = 0;
    std::uint64_t seed = 0;
};

/// Runs the configured schedule; the model is left at its best-test-accuracy
/// checkpoint. Non-finite loss restores that checkpoint and throws
/// NumericalDivergence. Deterministic for a fixed seed (any thread count).
TrainReport train(TrainingModel& model, const EncodedDataset& train_set,
                  const EncodedDataset& test_set, const TrainOptions& opts);

/// Hard binary path: sign tables, argmax selections, integer head counts.
double evaluate(const FrozenModel& model, const EncodedDataset& d);
double evaluate(const TrainingModel& model, const EncodedDataset& d);

} // namespace dwn
