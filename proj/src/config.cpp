#include "dwn/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "dwn/errors.hpp"

namespace dwn {

namespace {

std::string trim(std::string s) {
    const char* ws = " \t\r\n";
    const auto a = s.find_first_not_of(ws);
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(ws);
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> items;
    std::size_t start = 0;
    while (start <= value.size()) {
        const auto comma = value.find(',', start);
        const auto end = comma == std::string::npos ? value.size() : comma;
        items.push_back(trim(value.substr(start, end - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return items;
}

[[noreturn]] void fail(const std::string& where, const std::string& what) {
    throw ParseError("config " + where + ": " + what);
}

double parse_number(const std::string& where, const std::string& text) {
    const std::string t = trim(text);
    double v = 0.0;
    const char* first = t.data();
    if (!t.empty() && t[0] == '+') ++first;
    const auto [p, ec] = std::from_chars(first, t.data() + t.size(), v);
    if (ec != std::errc() || p != t.data() + t.size())
        fail(where, "expected a number, got '" + t + "'");
    return v;
}

std::uint32_t parse_count(const std::string& where, const std::string& text) {
    const std::string t = trim(text);
    std::uint32_t v = 0;
    const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || p != t.data() + t.size())
        fail(where, "expected a non-negative integer, got '" + t + "'");
    return v;
}

bool parse_bool(const std::string& where, const std::string& text) {
    const std::string t = trim(text);
    if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
    if (t == "false" || t == "0" || t == "no" || t == "off") return false;
    fail(where, "expected a boolean, got '" + t + "'");
}

/// `1/0.245` resolves to the division; a plain number passes through.
double parse_tau(const std::string& where, const std::string& text) {
    const auto slash = text.find('/');
    if (slash == std::string::npos) return parse_number(where, text);
    const double num = parse_number(where, text.substr(0, slash));
    const double den = parse_number(where, text.substr(slash + 1));
    if (den == 0.0) fail(where, "tau denominator is zero");
    return num / den;
}

/// Width lists accept `2x 6000` as two layers of 6000.
std::vector<std::uint32_t> parse_widths(const std::string& where, const std::string& value) {
    std::vector<std::uint32_t> widths;
    for (const auto& item : split_list(value)) {
        if (item.empty()) fail(where, "empty width entry");
        const auto x = item.find('x');
        if (x == std::string::npos) {
            widths.push_back(parse_count(where, item));
            continue;
        }
        const std::uint32_t repeat = parse_count(where, item.substr(0, x));
        const std::uint32_t width = parse_count(where, item.substr(x + 1));
        if (repeat == 0) fail(where, "zero repeat count in '" + item + "'");
        widths.insert(widths.end(), repeat, width);
    }
    return widths;
}

/// `1e-2(30), 1e-3(30)`; a single bare rate spans all epochs (count 0 here,
/// resolved once `epochs` is known).
std::vector<std::pair<double, std::uint32_t>> parse_lr(const std::string& where,
                                                       const std::string& value) {
    std::vector<std::pair<double, std::uint32_t>> stages;
    for (const auto& item : split_list(value)) {
        const auto open = item.find('(');
        if (open == std::string::npos) {
            stages.emplace_back(parse_number(where, item), 0);
            continue;
        }
        const auto close = item.find(')', open);
        if (close == std::string::npos) fail(where, "missing ')' in '" + item + "'");
        if (!trim(item.substr(close + 1)).empty()) fail(where, "trailing text in '" + item + "'");
        stages.emplace_back(parse_number(where, item.substr(0, open)),
                            parse_count(where, item.substr(open + 1, close - open - 1)));
    }
    return stages;
}

void apply_key(RunConfig& cfg, const std::string& where, const std::string& key,
               const std::string& value) {
    ModelConfig& m = cfg.model;
    if (key == "dataset") {
        cfg.dataset = value;
    } else if (key == "csv") {
        cfg.csv = value;
    } else if (key == "label") {
        cfg.label_column = value;
    } else if (key == "header") {
        cfg.csv_header = parse_bool(where, value);
    } else if (key == "train_fraction") {
        cfg.train_fraction = parse_number(where, value);
    } else if (key == "z") {
        m.z = parse_count(where, value);
    } else if (key == "quantize8") {
        m.quantize_inputs = parse_bool(where, value);
    } else if (key == "layers") {
        m.layers = parse_widths(where, value);
    } else if (key == "n") {
        m.lut_inputs = parse_widths(where, value);
    } else if (key == "mapping") {
        m.mapping.clear();
        for (const auto& item : split_list(value)) {
            if (item == "learnable")
                m.mapping.push_back(MappingKind::Learnable);
            else if (item == "random")
                m.mapping.push_back(MappingKind::Random);
            else
                fail(where, "mapping entries are 'learnable' or 'random', got '" + item + "'");
        }
    } else if (key == "spectral") {
        m.spectral.clear();
        for (const auto& item : split_list(value))
            m.spectral.push_back(parse_bool(where, item));
    } else if (key == "lambda") {
        m.lambda = parse_number(where, value);
    } else if (key == "head") {
        if (value == "popcount") {
            m.head = HeadKind::Popcount;
            m.pyramid.clear();
        } else if (value == "pyramid") {
            m.head = HeadKind::Pyramid;
            m.pyramid.clear();
        } else if (value.rfind("pyramid:", 0) == 0) {
            m.head = HeadKind::Pyramid;
            m.pyramid = parse_widths(where, value.substr(8));
        } else {
            fail(where, "head is 'popcount', 'pyramid' or 'pyramid:w,...', got '" + value + "'");
        }
    } else if (key == "tau") {
        m.tau = parse_tau(where, value);
    } else if (key == "bs") {
        m.batch_size = parse_count(where, value);
    } else if (key == "lr") {
        m.lr = parse_lr(where, value);
    } else if (key == "epochs") {
        m.epochs = parse_count(where, value);
    } else if (key == "opt") {
        if (value == "adam")
            m.adam = true;
        else if (value == "sgd")
            m.adam = false;
        else
            fail(where, "opt is 'adam' or 'sgd', got '" + value + "'");
    } else if (key == "grad") {
        if (value == "efd")
            m.grad = GradRule::Efd;
        else if (value == "fd")
            m.grad = GradRule::Fd;
        else
            fail(where, "grad is 'efd' or 'fd', got '" + value + "'");
    } else {
        fail(where, "unknown key '" + key + "'");
    }
}

void apply_line(RunConfig& cfg, const std::string& where, const std::string& line) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(where, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail(where, "missing key");
    apply_key(cfg, where, key, value);
}

/// A single bare rate is shorthand for one stage spanning all epochs.
void resolve_lr_stages(RunConfig& cfg) {
    auto& lr = cfg.model.lr;
    if (lr.empty()) {
        if (cfg.model.epochs > 0) lr.emplace_back(1e-2, cfg.model.epochs);
        return;
    }
    if (lr.size() == 1 && lr[0].second == 0) {
        if (cfg.model.epochs == 0) {
            lr.clear();
            return;
        }
        lr[0].second = cfg.model.epochs;
    }
    for (const auto& [rate, count] : lr)
        if (count == 0)
            throw ParseError("config: learning-rate stage " + std::to_string(rate) +
                             " has no epoch count");
}

} // namespace

RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    for (std::size_t number = 1; std::getline(in, line); ++number) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        apply_line(cfg, "line " + std::to_string(number), line);
    }
    resolve_lr_stages(cfg);
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("config: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

void apply_override(RunConfig& cfg, const std::string& key_value) {
    apply_line(cfg, "override '" + key_value + "'", key_value);
    resolve_lr_stages(cfg);
}

} // namespace dwn
