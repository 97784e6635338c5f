#pragma once

/**
 * @file config.hpp
 * @brief Line-oriented run configuration: `key = value`, one per line.
 *
 * Keys mirror the training table headers: z, layers, n, mapping, spectral,
 * lambda, head, tau, bs, lr, epochs, opt, grad, quantize8, plus the data
 * source (dataset registry name, or csv/label/header/train_fraction).
 * Values may use `#` comments, `2x 6000` width shorthand, reciprocal
 * temperatures like `1/0.245`, and staged rates like `1e-2(30), 1e-3(30)`.
 */

#include <string>

#include "dwn/model.hpp"

namespace dwn {

struct RunConfig {
    ModelConfig model;

    std::string dataset;            // registry name, or empty
    std::string csv;                // ad-hoc CSV path, or empty
    std::string label_column = "-1"; // CSV label column, name or index
    bool csv_header = true;
    double train_fraction = 0.8;
};

/// Parse config text. Errors carry the 1-based line number.
RunConfig parse_config_text(const std::string& text);

RunConfig load_config(const std::string& path);

/// Apply one `key=value` pair on top of an existing config.
void apply_override(RunConfig& cfg, const std::string& key_value);

} // namespace dwn
