#include "doctest.h"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dwn/area.hpp"
#include "dwn/dataset.hpp"
#include "dwn/gradcheck.hpp"
#include "dwn/model.hpp"
#include "dwn/netlist.hpp"
#include "dwn/packed_model.hpp"
#include "dwn/trainer.hpp"

#include "support/oracles.hpp"

using namespace dwn;

namespace {

class Stopwatch {
  public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

  private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void report(int criterion, bool pass, const std::string& detail) {
    std::printf("[%s] criterion %d: %s\n", pass ? "PASS" : "FAIL", criterion, detail.c_str());
    std::fflush(stdout);
    CHECK_MESSAGE(pass, "criterion ", criterion, ": ", detail);
}

void report_skip(int criterion, const std::string& reason) {
    std::printf("[SKIP] criterion %d: %s\n", criterion, reason.c_str());
    std::fflush(stdout);
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::filesystem::path data_root() {
    if (const char* env = std::getenv("DWN_DATA_DIR")) return env;
    return "data";
}

/// Empty when every file of the registry entry is on disk, else the missing list.
std::string missing_files(const std::string& name) {
    std::string missing;
    for (const auto& f : registry_lookup(name).files) {
        const auto p = data_root() / f;
        if (!std::filesystem::exists(p)) missing += (missing.empty() ? "" : ", ") + p.string();
    }
    return missing;
}

// ---------------------------------------------------------------------------
// Shared tabular runs (criteria 4 and 5 both look at these models).

struct TabularTask {
    const char* name;
    std::vector<std::uint32_t> pyramid;         // reduction widths, LUT-2
    std::vector<std::uint32_t> popcount_layers; // head-ablation counterpart
    double accuracy_floor;
    double reference_nand;
};

const std::vector<TabularTask>& tabular_tasks() {
    static const std::vector<TabularTask> tasks = {
        {"blood", {8, 4, 2, 1}, {16}, 0.75, 49.0},
        {"australian", {4, 2, 1}, {8}, 0.85, 7.0},
        {"phoneme", {64, 32, 16, 8, 4, 2, 1}, {64}, 0.82, 168.0},
    };
    return tasks;
}

ModelConfig tiny_tabular_config(const TabularTask& task, bool pyramid_head) {
    ModelConfig cfg;
    cfg.z = 200;
    cfg.lut_inputs = {2};
    cfg.layers = pyramid_head ? task.pyramid : task.popcount_layers;
    cfg.head = pyramid_head ? HeadKind::Pyramid : HeadKind::Popcount;
    cfg.tau = 1.0 / 0.03;
    cfg.batch_size = 32;
    cfg.epochs = 200;
    cfg.lr = {{1e-2, 80}, {1e-3, 80}, {1e-4, 40}};
    cfg.spectral = {1};
    cfg.lambda = 1e-3;
    return cfg;
}

struct TabularOutcome {
    bool ran = false;
    std::string skip_reason;
    double best_accuracy = 0.0;
    double pyramid_nand = 0.0;
    double popcount_nand = 0.0; // head-ablation counterpart, seed 1 only
    double seconds = 0.0;
};

/// Trains the pyramid model on 3 seeds (best-of) plus one popcount
/// counterpart, all cached so criteria 4 and 5 share the work.
const TabularOutcome& tabular_outcome(std::size_t task_index) {
    static std::vector<std::optional<TabularOutcome>> cache(tabular_tasks().size());
    auto& slot = cache[task_index];
    if (slot) return *slot;

    const TabularTask& task = tabular_tasks()[task_index];
    TabularOutcome out;
    const std::string missing = missing_files(task.name);
    if (!missing.empty()) {
        out.skip_reason = std::string(task.name) + " data not on disk (" + missing + ")";
        slot = out;
        return *slot;
    }

    Stopwatch clock;
    LoadedData data = load_for_training(task.name, data_root().string(), SplitSpec{0.8, 7});

    const ModelConfig pyr_cfg = tiny_tabular_config(task, true);
    InputPipeline pipe = fit_input_pipeline(data.train, pyr_cfg);
    EncodedDataset train_set = encode_dataset(pipe, data.train);
    EncodedDataset test_set = encode_dataset(pipe, data.test);

    double best_acc = -1.0;
    for (std::uint64_t seed : {1, 2, 3}) {
        TrainingModel model = build_model(pyr_cfg, train_set.input_bits, train_set.class_count, seed);
        TrainReport rep = train(model, train_set, test_set, TrainOptions{seed, 1, false, nullptr});
        if (rep.final_test_accuracy > best_acc) {
            best_acc = rep.final_test_accuracy;
            out.pyramid_nand = model_area(model.freeze(&pipe.codec)).total_nand;
        }
    }
    out.best_accuracy = best_acc;

    const ModelConfig pop_cfg = tiny_tabular_config(task, false);
    TrainingModel pop_model =
        build_model(pop_cfg, train_set.input_bits, train_set.class_count, 1);
    train(pop_model, train_set, test_set, TrainOptions{1, 1, false, nullptr});
    out.popcount_nand = model_area(pop_model.freeze(&pipe.codec)).total_nand;

    out.ran = true;
    out.seconds = clock.seconds();
    slot = out;
    return *slot;
}

// ---------------------------------------------------------------------------
// MNIST helpers (criteria 5 and 6).

ModelConfig mnist_sm_config(std::uint32_t epochs, std::vector<std::pair<double, std::uint32_t>> lr) {
    ModelConfig cfg;
    cfg.z = 1;
    cfg.lut_inputs = {6};
    cfg.layers = {1000, 500};
    cfg.head = HeadKind::Popcount;
    cfg.tau = 1.0 / 0.245;
    cfg.batch_size = 128;
    cfg.epochs = epochs;
    cfg.lr = std::move(lr);
    return cfg;
}

} // namespace

TEST_SUITE_BEGIN("acceptance");

TEST_CASE("criterion 1: gradient and norm oracles") {
    Stopwatch clock;
    const auto checks = run_gradchecks(2026);
    std::size_t passed = 0;
    std::string worst;
    for (const auto& c : checks) {
        if (c.pass) {
            ++passed;
        } else if (worst.empty()) {
            worst = c.name + " err " + fmt("%.3e", c.error) + " > tol " + fmt("%.0e", c.tolerance);
        }
    }
    const double secs = clock.seconds();
    const bool pass = passed == checks.size() && secs < 30.0;
    std::string detail = std::to_string(passed) + "/" + std::to_string(checks.size()) +
                         " oracle checks within tolerance (fd/efd/mapping 1e-12, spectral grad "
                         "1e-5, specnorm 1e-10), " +
                         fmt("%.1f", secs) + "s";
    if (!worst.empty()) detail += "; first failure: " + worst;
    report(1, pass, detail);
}

TEST_CASE("criterion 2: popcount adder-tree area") {
    Stopwatch clock;
    const PopcountArea a12 = popcount_area(12);
    const bool golden = a12.full_adders == 8.0 && a12.half_adders == 3.0 && a12.nand2 == 66.5;

    double worst_gap = 0.0;
    for (std::uint32_t n = 3; n <= 4096; ++n) {
        const PopcountArea a = popcount_area(n);
        worst_gap = std::max(worst_gap, std::abs(a.closed_form - a.nand2));
    }
    const double secs = clock.seconds();
    const bool pass = golden && worst_gap <= 0.51 && secs < 1.0;
    report(2, pass,
           "N=12 -> " + fmt("%.0f", a12.full_adders) + " FA, " + fmt("%.0f", a12.half_adders) +
               " HA, " + fmt("%.1f", a12.nand2) + " NAND2; closed vs composed gap " +
               fmt("%.3f", worst_gap) + " <= 0.51 on [3,4096], " + fmt("%.2f", secs) + "s");
}

TEST_CASE("criterion 3: engine, interpreter and netlist agree") {
    Stopwatch clock;
    Rng rng(424242);
    std::size_t exhaustive = 0, sampled = 0, netlists = 0, mismatches = 0;
    for (int trial = 0; trial < 100; ++trial) {
        FrozenModel fm = dwn::testing::random_toy_model(rng, 20, {2, 6});
        const auto bytes = pack(fm);
        const PackedView view = parse_packed(bytes);

        bool netlist_eligible = fm.head == HeadKind::Pyramid;
        for (const auto& chain : fm.chains)
            for (const auto& st : chain) netlist_eligible = netlist_eligible && st.n == 2;
        std::optional<Netlist> net;
        if (netlist_eligible) {
            net = export_netlist(fm);
            ++netlists;
        }

        auto check_one = [&](const BitVector& in) {
            const std::uint32_t want = fm.predict(in);
            if (interpret(view, in) != want) ++mismatches;
            if (net && netlist_class(*net, in) != want) ++mismatches;
        };

        if (fm.input_bits <= 13) {
            ++exhaustive;
            for (std::uint64_t v = 0; v < (1ull << fm.input_bits); ++v)
                check_one(dwn::testing::bits_from_integer(v, fm.input_bits));
        } else {
            ++sampled;
            for (int s = 0; s < 10000; ++s)
                check_one(dwn::testing::random_bits(rng, fm.input_bits));
        }
    }
    const double secs = clock.seconds();
    const bool pass = mismatches == 0 && secs < 120.0;
    report(3, pass,
           "100 toy models bit-exact (" + std::to_string(exhaustive) + " exhaustive, " +
               std::to_string(sampled) + " x10^4 samples, " + std::to_string(netlists) +
               " with netlists), " + std::to_string(mismatches) + " mismatches, " +
               fmt("%.1f", secs) + "s");
}

TEST_CASE("criterion 4: tiny tabular accuracy and area") {
    Stopwatch clock;
    std::string detail;
    std::string skips;
    bool all_ran = true, all_pass = true;
    for (std::size_t i = 0; i < tabular_tasks().size(); ++i) {
        const TabularTask& task = tabular_tasks()[i];
        const TabularOutcome& out = tabular_outcome(i);
        if (!out.ran) {
            all_ran = false;
            skips += (skips.empty() ? "" : "; ") + out.skip_reason;
            continue;
        }
        const double ratio = out.pyramid_nand / task.reference_nand;
        const bool ok =
            out.best_accuracy >= task.accuracy_floor && ratio <= 3.0 && ratio >= 1.0 / 3.0;
        all_pass = all_pass && ok;
        detail += std::string(detail.empty() ? "" : "; ") + task.name + " acc " +
                  fmt("%.3f", out.best_accuracy) + " (floor " + fmt("%.2f", task.accuracy_floor) +
                  "), " + fmt("%.1f", out.pyramid_nand) + " NAND2 vs reference " +
                  fmt("%.0f", task.reference_nand);
    }
    const double secs = clock.seconds();
    if (!all_ran) {
        // Whatever data is present is still checked; a failure there is real,
        // but a pass cannot establish the criterion for the absent datasets.
        if (!detail.empty() && !(all_pass && secs < 1800.0)) {
            report(4, false, "partial data: " + detail + " [" + skips + "]");
        } else if (!detail.empty()) {
            report_skip(4, "incomplete data, available datasets passed (" + detail + ") [" + skips +
                               "]; run scripts/fetch_datasets.py, then rerun");
        } else {
            report_skip(4, skips + "; run scripts/fetch_datasets.py, then rerun");
        }
        return;
    }
    report(4, all_pass && secs < 1800.0,
           detail + " (3 seeds best-of, pyramid NAND2 within 3x), " + fmt("%.0f", secs) + "s");
}

TEST_CASE("criterion 5: mapping and head ablation directions") {
    Stopwatch clock;
    std::string parts;
    std::string skips;
    bool any_ran = false, all_pass = true, complete = true;

    const std::string mnist_missing = missing_files("mnist");
    if (mnist_missing.empty()) {
        LoadedData data = load_for_training("mnist", data_root().string(), SplitSpec{0.8, 7});
        Dataset train_rows = data.train.head(10000);
        Dataset test_rows = data.test.head(2000);

        ModelConfig lm_cfg = mnist_sm_config(30, {{1e-2, 30}});
        InputPipeline pipe = fit_input_pipeline(train_rows, lm_cfg);
        EncodedDataset train_set = encode_dataset(pipe, train_rows);
        EncodedDataset test_set = encode_dataset(pipe, test_rows);

        ModelConfig rand_cfg = lm_cfg;
        rand_cfg.mapping = {MappingKind::Random};

        double lm_mean = 0.0, rand_mean = 0.0;
        for (std::uint64_t seed : {1, 2, 3}) {
            TrainingModel lm = build_model(lm_cfg, train_set.input_bits, 10, seed);
            lm_mean += train(lm, train_set, test_set, TrainOptions{seed, 1, false, nullptr})
                           .final_test_accuracy / 3.0;
            TrainingModel rnd = build_model(rand_cfg, train_set.input_bits, 10, seed);
            rand_mean += train(rnd, train_set, test_set, TrainOptions{seed, 1, false, nullptr})
                             .final_test_accuracy / 3.0;
        }
        const double gain = (lm_mean - rand_mean) * 100.0;
        all_pass = all_pass && gain >= 1.0;
        any_ran = true;
        parts += "learnable mapping " + fmt("%.2f", lm_mean * 100.0) + "% vs random " +
                 fmt("%.2f", rand_mean * 100.0) + "% (gain " + fmt("%+.2f", gain) +
                 "pt, need >= +1.0)";
    } else {
        complete = false;
        skips += "mnist data not on disk (" + mnist_missing + ")";
    }

    std::string head_part;
    for (std::size_t i = 0; i < tabular_tasks().size(); ++i) {
        const TabularTask& task = tabular_tasks()[i];
        const TabularOutcome& out = tabular_outcome(i);
        if (!out.ran) {
            complete = false;
            if (skips.find(task.name) == std::string::npos)
                skips += (skips.empty() ? "" : "; ") + out.skip_reason;
            continue;
        }
        any_ran = true;
        all_pass = all_pass && out.pyramid_nand < out.popcount_nand;
        head_part += std::string(head_part.empty() ? "" : ", ") + task.name + " " +
                     fmt("%.1f", out.pyramid_nand) + " < " + fmt("%.1f", out.popcount_nand);
    }
    if (!head_part.empty()) parts += (parts.empty() ? "" : "; ") + std::string("pyramid vs popcount NAND2: ") + head_part;

    const double secs = clock.seconds();
    if (!any_ran) {
        report_skip(5, skips + "; run scripts/fetch_datasets.py, then rerun");
        return;
    }
    if (!complete) {
        if (!(all_pass && secs < 2700.0)) {
            report(5, false, "partial data: " + parts + " [" + skips + "]");
        } else {
            report_skip(5, "incomplete data, available parts passed (" + parts + ") [" + skips +
                               "]; run scripts/fetch_datasets.py, then rerun");
        }
        return;
    }
    report(5, all_pass && secs < 2700.0, parts + ", " + fmt("%.0f", secs) + "s");
}

TEST_CASE("criterion 7: strict determinism produces identical model files") {
    Stopwatch clock;

    auto run_once = [&](std::uint32_t threads) {
        Rng gen(901);
        Dataset d;
        d.rows = 400;
        d.cols = 3;
        d.class_count = 3;
        d.feature_names = {"f0", "f1", "f2"};
        d.class_names = {"0", "1", "2"};
        for (std::size_t r = 0; r < d.rows; ++r) {
            const double a = gen.uniform(), b = gen.uniform(), c = gen.uniform();
            d.x.insert(d.x.end(), {a, b, c});
            d.labels.push_back(std::uint32_t(int(a > b) + int(a > c)));
        }
        d.validate();
        auto [train_rows, test_rows] = split(d, SplitSpec{0.8, 5});

        ModelConfig cfg;
        cfg.z = 6;
        cfg.lut_inputs = {3};
        cfg.layers = {18, 9};
        cfg.head = HeadKind::Popcount;
        cfg.tau = 0.5;
        cfg.batch_size = 20;
        cfg.epochs = 8;
        cfg.lr = {{1e-2, 8}};
        cfg.spectral = {1};
        cfg.lambda = 1e-3;

        InputPipeline pipe = fit_input_pipeline(train_rows, cfg);
        EncodedDataset train_set = encode_dataset(pipe, train_rows);
        EncodedDataset test_set = encode_dataset(pipe, test_rows);
        TrainingModel model = build_model(cfg, train_set.input_bits, 3, 11);
        TrainOptions opts;
        opts.seed = 11;
        opts.threads = threads;
        opts.strict_deterministic = true;
        train(model, train_set, test_set, opts);
        return pack(model.freeze(&pipe.codec));
    };

    const auto first = run_once(1);
    const auto second = run_once(1);
    const auto threaded = run_once(4); // strict mode pins the thread count

    const auto dir = std::filesystem::temp_directory_path();
    const auto path_a = dir / "dwn-determinism-a.dwnm";
    const auto path_b = dir / "dwn-determinism-b.dwnm";
    for (auto [path, bytes] : {std::pair{path_a, &first}, std::pair{path_b, &second}}) {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        f.write(reinterpret_cast<const char*>(bytes->data()), std::streamsize(bytes->size()));
    }
    std::ostringstream a_back, b_back;
    a_back << std::ifstream(path_a, std::ios::binary).rdbuf();
    b_back << std::ifstream(path_b, std::ios::binary).rdbuf();

    const double secs = clock.seconds();
    const bool pass = first == second && first == threaded && a_back.str() == b_back.str() &&
                      !first.empty() && secs < 300.0;
    report(7, pass,
           "two strict seed-11 runs and a threads=4 strict run all packed to identical " +
               std::to_string(first.size()) + "-byte files, " + fmt("%.1f", secs) + "s");
}

TEST_SUITE_END();

TEST_SUITE_BEGIN("slow");

TEST_CASE("criterion 6: mnist headline accuracy") {
    Stopwatch clock;
    const std::string mnist_missing = missing_files("mnist");
    if (!mnist_missing.empty()) {
        report_skip(6, "mnist data not on disk (" + mnist_missing +
                           "); run scripts/fetch_datasets.py, then rerun with -ts=slow");
        return;
    }
    LoadedData data = load_for_training("mnist", data_root().string(), SplitSpec{0.8, 7});
    ModelConfig cfg = mnist_sm_config(100, {{1e-2, 30}, {1e-3, 30}, {1e-4, 30}, {1e-5, 10}});
    InputPipeline pipe = fit_input_pipeline(data.train, cfg);
    EncodedDataset train_set = encode_dataset(pipe, data.train);
    EncodedDataset test_set = encode_dataset(pipe, data.test);
    TrainingModel model = build_model(cfg, train_set.input_bits, 10, 1);
    TrainReport rep = train(model, train_set, test_set, TrainOptions{1, 1, false, nullptr});
    const double secs = clock.seconds();
    report(6, rep.final_test_accuracy >= 0.965,
           "full 1000,500 n=6 run reached " + fmt("%.2f", rep.final_test_accuracy * 100.0) +
               "% (need >= 96.5%), " + fmt("%.0f", secs) + "s");
}

TEST_SUITE_END();
