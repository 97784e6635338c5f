#pragma once

/**
 * @file dataset.hpp
 * @brief Tabular and image dataset ingestion, splits, and the named registry.
 */

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dwn/errors.hpp"

namespace dwn {

struct Dataset {
    std::vector<double> x; // row-major, rows*cols
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint32_t> labels;
    std::uint32_t class_count = 0;
    std::vector<std::string> feature_names;
    std::vector<std::string> class_names; // factorization order

    std::span<const double> row(std::size_t r) const { return {x.data() + r * cols, cols}; }

    /// Feature-major copy for threshold fitting.
    std::vector<std::vector<double>> columns() const;

    /// Keep only the first n rows.
    Dataset head(std::size_t n) const;

    void validate() const;
};

/// label_column is a header name, or an integer index (negative counts from
/// the end). Labels are factorized to 0..C-1 in first-appearance order.
Dataset load_csv(const std::string& path, const std::string& label_column, bool header);

/// Uncompressed IDX pair (big-endian headers); labels are the class indices.
Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path);

struct SplitSpec {
    double train_fraction = 0.8;
    std::uint64_t seed = 0;
};

/// Seeded shuffle, then cut at floor(fraction * rows); disjoint and exhaustive.
std::pair<Dataset, Dataset> split(const Dataset& d, const SplitSpec& spec);

struct DatasetDescriptor {
    std::string name;
    std::string url;
    std::string format; // "csv" or "idx"
    std::string label_column;
    std::size_t rows = 0;      // 0 = not pinned
    std::size_t features = 0;  // 0 = not pinned
    std::uint32_t classes = 0; // 0 = not pinned
    std::string sha256;        // of the csv file; empty = not pinned
    std::vector<std::string> files;
    bool presplit = false; // canonical train/test files instead of 80/20
    std::string notes;
};

const std::vector<DatasetDescriptor>& registry();
const DatasetDescriptor& registry_lookup(const std::string& name);

struct LoadedData {
    Dataset train;
    Dataset test;
    bool presplit = false;
};

/// Load a registry dataset from data_dir, verifying pinned checksums and
/// counts, and produce the train/test pair (canonical files or seeded split).
LoadedData load_for_training(const std::string& name, const std::string& data_dir,
                             const SplitSpec& spec);

std::string sha256_file(const std::string& path);
std::string sha256_bytes(std::span<const std::uint8_t> bytes);

} // namespace dwn
