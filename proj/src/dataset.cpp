#include "dwn/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <openssl/evp.h>

#include "dwn/rng.hpp"

namespace dwn {

std::vector<std::vector<double>> Dataset::columns() const {
    std::vector<std::vector<double>> out(cols);
    for (auto& c : out) c.reserve(rows);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out[c].push_back(x[r * cols + c]);
    return out;
}

Dataset Dataset::head(std::size_t n) const {
    if (n >= rows) return *this;
    Dataset out = *this;
    out.rows = n;
    out.x.assign(x.begin(), x.begin() + n * cols);
    out.labels.assign(labels.begin(), labels.begin() + n);
    return out;
}

void Dataset::validate() const {
    if (x.size() != rows * cols) throw InputShapeError("dataset: feature matrix size mismatch");
    if (labels.size() != rows) throw InputShapeError("dataset: label count mismatch");
    for (auto l : labels)
        if (l >= class_count) throw InputShapeError("dataset: label out of class range");
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    cells.push_back(cur);
    for (auto& c : cells) {
        while (!c.empty() && std::isspace(std::uint8_t(c.front()))) c.erase(c.begin());
        while (!c.empty() && std::isspace(std::uint8_t(c.back()))) c.pop_back();
        if (c.size() >= 2 && c.front() == '"' && c.back() == '"') c = c.substr(1, c.size() - 2);
    }
    return cells;
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    if (*begin == '+') ++begin; // from_chars rejects an explicit plus
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc() && ptr == end;
}

bool parse_int(const std::string& s, long& out) {
    if (s.empty()) return false;
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc() && ptr == end;
}

} // namespace

Dataset load_csv(const std::string& path, const std::string& label_column, bool header) {
    std::ifstream in(path);
    if (!in) throw ParseError("load_csv: cannot open " + path);

    std::string line;
    std::vector<std::string> names;
    std::size_t line_no = 0;

    if (header) {
        if (!std::getline(in, line)) throw ParseError("load_csv: empty file " + path);
        ++line_no;
        names = split_csv_line(line);
    }

    long label_idx = -1;
    long parsed_idx = 0;
    const bool index_given = parse_int(label_column, parsed_idx);
    if (!index_given) {
        if (!header)
            throw ConfigError("load_csv: label column named '" + label_column +
                              "' needs a header row");
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == label_column) label_idx = long(i);
        if (label_idx < 0)
            throw ConfigError("load_csv: no column named '" + label_column + "' in " + path);
    }

    Dataset d;
    std::map<std::string, std::uint32_t> label_ids;
    std::size_t width = header ? names.size() : 0;

    auto resolve_label_index = [&](std::size_t w) {
        label_idx = parsed_idx < 0 ? long(w) + parsed_idx : parsed_idx;
        if (label_idx < 0 || label_idx >= long(w))
            throw ConfigError("load_csv: label column index " + label_column +
                              " out of range for " + std::to_string(w) + " columns");
    };
    if (index_given && width != 0) resolve_label_index(width);

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (width == 0) {
            width = cells.size();
            if (width < 2) throw ParseError("load_csv: need at least 2 columns, line 1");
            if (index_given) resolve_label_index(width);
        }
        if (cells.size() != width)
            throw ParseError("load_csv: row at line " + std::to_string(line_no) + " has " +
                             std::to_string(cells.size()) + " cells, expected " + std::to_string(width));
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (long(c) == label_idx) {
                auto [it, inserted] =
                    label_ids.try_emplace(cells[c], std::uint32_t(label_ids.size()));
                d.labels.push_back(it->second);
                if (inserted) d.class_names.push_back(cells[c]);
            } else {
                double v = 0.0;
                if (!parse_double(cells[c], v))
                    throw ParseError("load_csv: non-numeric cell '" + cells[c] + "' at line " +
                                     std::to_string(line_no) + ", column " + std::to_string(c + 1));
                d.x.push_back(v);
            }
        }
        ++d.rows;
    }
    if (d.rows == 0) throw ParseError("load_csv: no data rows in " + path);
    d.cols = width - 1;
    d.class_count = std::uint32_t(label_ids.size());
    if (d.class_count < 2) throw ParseError("load_csv: dataset has fewer than 2 classes");
    if (header) {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (long(i) != label_idx) d.feature_names.push_back(names[i]);
    }
    d.validate();
    return d;
}

namespace {

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return bytes;
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t off, const std::string& path) {
    if (off + 4 > b.size()) throw ParseError("idx file truncated: " + path);
    return std::uint32_t(b[off]) << 24 | std::uint32_t(b[off + 1]) << 16 |
           std::uint32_t(b[off + 2]) << 8 | std::uint32_t(b[off + 3]);
}

} // namespace

Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
    const auto img = read_file_bytes(images_path);
    const auto lab = read_file_bytes(labels_path);

    if (read_be32(img, 0, images_path) != 0x00000803u)
        throw ParseError("idx: bad image magic in " + images_path);
    if (read_be32(lab, 0, labels_path) != 0x00000801u)
        throw ParseError("idx: bad label magic in " + labels_path);

    const std::size_t count = read_be32(img, 4, images_path);
    const std::size_t h = read_be32(img, 8, images_path);
    const std::size_t w = read_be32(img, 12, images_path);
    const std::size_t lcount = read_be32(lab, 4, labels_path);
    if (count != lcount)
        throw ParseError("idx: " + std::to_string(count) + " images vs " + std::to_string(lcount) +
                         " labels");
    if (img.size() != 16 + count * h * w) throw ParseError("idx: image payload size mismatch");
    if (lab.size() != 8 + count) throw ParseError("idx: label payload size mismatch");

    Dataset d;
    d.rows = count;
    d.cols = h * w;
    d.x.resize(count * d.cols);
    for (std::size_t i = 0; i < count * d.cols; ++i) d.x[i] = double(img[16 + i]);
    d.labels.resize(count);
    std::uint32_t max_label = 0;
    for (std::size_t i = 0; i < count; ++i) {
        d.labels[i] = lab[8 + i];
        max_label = std::max(max_label, d.labels[i]);
    }
    d.class_count = max_label + 1;
    for (std::uint32_t c = 0; c < d.class_count; ++c) d.class_names.push_back(std::to_string(c));
    d.validate();
    return d;
}

std::pair<Dataset, Dataset> split(const Dataset& d, const SplitSpec& spec) {
    if (d.rows < 2) throw InputShapeError("split: need at least 2 rows");
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
        throw ConfigError("split: train fraction must be in (0,1)");
    std::vector<std::uint32_t> order;
    {
        Rng rng(spec.seed);
        order = rng.permutation(std::uint32_t(d.rows));
    }
    const std::size_t ntrain = std::size_t(spec.train_fraction * double(d.rows));

    auto take = [&](std::size_t begin, std::size_t end) {
        Dataset out;
        out.cols = d.cols;
        out.class_count = d.class_count;
        out.feature_names = d.feature_names;
        out.class_names = d.class_names;
        out.rows = end - begin;
        out.x.reserve(out.rows * d.cols);
        out.labels.reserve(out.rows);
        for (std::size_t i = begin; i < end; ++i) {
            const auto r = d.row(order[i]);
            out.x.insert(out.x.end(), r.begin(), r.end());
            out.labels.push_back(d.labels[order[i]]);
        }
        return out;
    };
    return {take(0, ntrain), take(ntrain, d.rows)};
}

const std::vector<DatasetDescriptor>& registry() {
    static const std::vector<DatasetDescriptor> r = {
        {"blood", "https://www.openml.org/d/1464", "csv", "-1", 748, 4, 2, "", {"blood.csv"}, false,
         "blood-transfusion-service-center"},
        {"australian", "https://www.openml.org/d/40981", "csv", "-1", 690, 14, 2, "",
         {"australian.csv"}, false, "credit approval, categoricals pre-encoded"},
        {"phoneme", "https://www.openml.org/d/1489", "csv", "-1", 5404, 5, 2, "", {"phoneme.csv"},
         false, "nasal vs oral vowels"},
        {"skin-seg", "https://www.openml.org/d/1502", "csv", "-1", 245057, 3, 2, "",
         {"skin-seg.csv"}, false, "skin segmentation RGB"},
        {"higgs", "https://www.openml.org/d/23512", "csv", "-1", 98050, 28, 2, "", {"higgs.csv"},
         false, "HIGGS subsample"},
        {"nomao", "https://www.openml.org/d/1486", "csv", "-1", 34465, 118, 2, "", {"nomao.csv"},
         false, "deduplication features"},
        {"segment", "https://www.openml.org/d/40984", "csv", "-1", 2310, 19, 2, "", {"segment.csv"},
         false, "label binarized: original class index >= 4 maps to 1; not comparable to the "
                "7-class original"},
        {"miniboone", "https://www.openml.org/d/41150", "csv", "-1", 130064, 50, 2, "",
         {"miniboone.csv"}, false, "particle id"},
        {"christine", "https://www.openml.org/d/41142", "csv", "-1", 5418, 1636, 2, "",
         {"christine.csv"}, false, "automl binary"},
        {"jasmine", "https://www.openml.org/d/41143", "csv", "-1", 2984, 144, 2, "",
         {"jasmine.csv"}, false, "automl binary"},
        {"sylvine", "https://www.openml.org/d/41146", "csv", "-1", 5124, 20, 2, "", {"sylvine.csv"},
         false, "automl binary"},
        {"iris", "https://archive.ics.uci.edu/dataset/53/iris", "csv", "-1", 150, 4, 3, "",
         {"iris.csv"}, false, "3-class flower measurements"},
        {"mnist", "https://yann.lecun.com/exdb/mnist/", "idx", "", 70000, 784, 10, "",
         {"train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte",
          "t10k-labels-idx1-ubyte"},
         true, "canonical 60k/10k split, uncompressed idx"},
        {"fashion-mnist", "https://github.com/zalandoresearch/fashion-mnist", "idx", "", 70000, 784,
         10, "",
         {"fashion-train-images-idx3-ubyte", "fashion-train-labels-idx1-ubyte",
          "fashion-t10k-images-idx3-ubyte", "fashion-t10k-labels-idx1-ubyte"},
         true, "drop-in mnist replacement"},
    };
    return r;
}

const DatasetDescriptor& registry_lookup(const std::string& name) {
    for (const auto& d : registry())
        if (d.name == name) return d;
    throw LookupError("registry: unknown dataset '" + name + "'");
}

namespace {

void check_counts(const DatasetDescriptor& desc, const Dataset& d, std::size_t expected_rows) {
    if (expected_rows != 0 && d.rows != expected_rows)
        throw IntegrityError("dataset " + desc.name + ": expected " + std::to_string(expected_rows) +
                             " rows, file has " + std::to_string(d.rows));
    if (desc.features != 0 && d.cols != desc.features)
        throw IntegrityError("dataset " + desc.name + ": expected " + std::to_string(desc.features) +
                             " features, file has " + std::to_string(d.cols));
    if (desc.classes != 0 && d.class_count != desc.classes)
        throw IntegrityError("dataset " + desc.name + ": expected " + std::to_string(desc.classes) +
                             " classes, file has " + std::to_string(d.class_count));
}

} // namespace

LoadedData load_for_training(const std::string& name, const std::string& data_dir,
                             const SplitSpec& spec) {
    const auto& desc = registry_lookup(name);
    namespace fs = std::filesystem;
    const fs::path dir(data_dir);

    LoadedData out;
    out.presplit = desc.presplit;
    if (desc.format == "idx") {
        out.train = load_mnist_idx((dir / desc.files[0]).string(), (dir / desc.files[1]).string());
        out.test = load_mnist_idx((dir / desc.files[2]).string(), (dir / desc.files[3]).string());
        if (desc.rows != 0 && out.train.rows + out.test.rows != desc.rows)
            throw IntegrityError("dataset " + name + ": expected " + std::to_string(desc.rows) +
                                 " total rows, files have " +
                                 std::to_string(out.train.rows + out.test.rows));
        check_counts(desc, out.train, 0);
        // idx labels don't pass through factorization; class counts can differ
        // between halves only if a digit is absent, which the pin catches.
        out.test.class_count = out.train.class_count;
        check_counts(desc, out.test, 0);
        return out;
    }

    const fs::path file = dir / desc.files[0];
    if (!desc.sha256.empty()) {
        const std::string got = sha256_file(file.string());
        if (got != desc.sha256)
            throw IntegrityError("dataset " + name + ": sha256 " + got + " does not match pinned " +
                                 desc.sha256);
    }
    Dataset whole = load_csv(file.string(), desc.label_column, true);
    check_counts(desc, whole, desc.rows);
    auto [train, test] = split(whole, spec);
    out.train = std::move(train);
    out.test = std::move(test);
    return out;
}

std::string sha256_bytes(std::span<const std::uint8_t> bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx) throw Error("sha256: cannot allocate digest context");
    if (EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
        EVP_MD_CTX_free(ctx);
        throw Error("sha256: digest computation failed");
    }
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xF]);
    }
    return out;
}

std::string sha256_file(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    return sha256_bytes(bytes);
}

} // namespace dwn
