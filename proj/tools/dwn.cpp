#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "dwn/area.hpp"
#include "dwn/config.hpp"
#include "dwn/dataset.hpp"
#include "dwn/errors.hpp"
#include "dwn/gradcheck.hpp"
#include "dwn/model.hpp"
#include "dwn/netlist.hpp"
#include "dwn/packed_model.hpp"
#include "dwn/trainer.hpp"

namespace fs = std::filesystem;

namespace {

/// Raised for bad invocations (missing config, malformed flags): exit 2.
struct UsageExit {
    std::string message;
};

struct GlobalFlags {
    std::uint64_t seed = 1;
    std::uint32_t threads = 1;
    bool strict = false;
    std::string out = ".";
    std::string data_dir = "data";
    std::vector<std::string> sets;
};

std::vector<std::uint8_t> read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw dwn::LookupError("cannot open '" + path + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw dwn::LookupError("cannot write '" + path.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw dwn::LookupError("cannot write '" + path.string() + "'");
    out << text;
}

dwn::RunConfig load_run_config(const std::string& path, const std::vector<std::string>& sets) {
    try {
        dwn::RunConfig cfg = dwn::load_config(path);
        for (const auto& kv : sets) dwn::apply_override(cfg, kv);
        return cfg;
    } catch (const dwn::ParseError& e) {
        throw UsageExit{e.what()};
    }
}

dwn::LoadedData load_data(const dwn::RunConfig& cfg, const GlobalFlags& g) {
    const dwn::SplitSpec spec{cfg.train_fraction, g.seed};
    if (!cfg.dataset.empty() && !cfg.csv.empty())
        throw dwn::ConfigError("config sets both 'dataset' and 'csv'");
    if (!cfg.dataset.empty()) return dwn::load_for_training(cfg.dataset, g.data_dir, spec);
    if (!cfg.csv.empty()) {
        dwn::Dataset d = dwn::load_csv(cfg.csv, cfg.label_column, cfg.csv_header);
        auto [tr, te] = dwn::split(d, spec);
        return {std::move(tr), std::move(te), false};
    }
    throw dwn::ConfigError("config needs 'dataset = <registry name>' or 'csv = <path>'");
}

/// Encode a dataset with the codec and bounds stored in a model file.
dwn::EncodedDataset encode_with_model(const dwn::FrozenModel& fm, const dwn::Dataset& d) {
    if (!fm.has_codec)
        throw dwn::ConfigError("model file carries no input codec; retrain to embed one");
    dwn::InputPipeline pipe;
    pipe.quantized = !fm.quant_lo.empty();
    pipe.qlo = fm.quant_lo;
    pipe.qhi = fm.quant_hi;
    pipe.codec = fm.codec;
    dwn::EncodedDataset enc = dwn::encode_dataset(pipe, d);
    if (enc.input_bits != fm.input_bits)
        throw dwn::ConfigError("dataset encodes to " + std::to_string(enc.input_bits) +
                               " bits but the model expects " + std::to_string(fm.input_bits));
    return enc;
}

std::string area_text(const dwn::AreaReport& report) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(1);
    os << "logic NAND2:    " << report.logic_nand
       << (report.logic_exact ? "" : "  (incomplete, see warnings)") << "\n";
    os << "popcount NAND2: " << report.popcount_nand << "\n";
    os << "total NAND2:    " << report.total_nand << "\n";
    for (const auto& layer : report.layers) {
        os << "  layer fan_in=" << layer.fan_in << " luts=" << layer.lut_count;
        if (layer.exact)
            os << " nand2=" << layer.nand2;
        else
            os << " (not mapped)";
        os << "\n";
    }
    for (const auto& w : report.warnings) os << "warning: " << w << "\n";
    return os.str();
}

void emit_area_records(const dwn::AreaReport& report) {
    std::cout << "@rec area logic=" << report.logic_nand << " popcount=" << report.popcount_nand
              << " total=" << report.total_nand << " exact=" << (report.logic_exact ? 1 : 0)
              << "\n";
}

int cmd_train(const std::string& cfg_path, const GlobalFlags& g) {
    dwn::RunConfig cfg = load_run_config(cfg_path, g.sets);
    cfg.model.validate();

    const dwn::LoadedData data = load_data(cfg, g);
    const dwn::InputPipeline pipe = dwn::fit_input_pipeline(data.train, cfg.model);
    const dwn::EncodedDataset enc_train = dwn::encode_dataset(pipe, data.train);
    const dwn::EncodedDataset enc_test = dwn::encode_dataset(pipe, data.test);
    std::cout << "data: " << enc_train.size() << " train / " << enc_test.size() << " test rows, "
              << enc_train.input_bits << " encoded bits, " << enc_train.class_count
              << " classes\n";

    dwn::TrainingModel model =
        dwn::build_model(cfg.model, enc_train.input_bits, enc_train.class_count, g.seed);

    dwn::TrainOptions opts;
    opts.seed = g.seed;
    opts.threads = g.threads;
    opts.strict_deterministic = g.strict;
    opts.log = &std::cout;
    const dwn::TrainReport report = dwn::train(model, enc_train, enc_test, opts);

    dwn::FrozenModel fm = model.freeze(&pipe.codec);
    if (pipe.quantized) {
        fm.quant_lo = pipe.qlo;
        fm.quant_hi = pipe.qhi;
    }
    const std::vector<std::uint8_t> bytes = dwn::pack(fm);

    fs::create_directories(g.out);
    const fs::path model_path = fs::path(g.out) / "model.dwnm";
    write_bytes(model_path, bytes);

    std::ostringstream rp;
    rp << "seed " << report.seed << "\n";
    rp << "epochs " << report.epochs.size() << "\n";
    rp << std::setprecision(6);
    rp << "best_test_accuracy " << report.best_test_accuracy << " (epoch " << report.best_epoch
       << ")\n";
    rp << "last_epoch_accuracy " << report.last_epoch_accuracy << "\n";
    rp << "final_test_accuracy " << report.final_test_accuracy << "\n";
    for (const auto& e : report.epochs)
        rp << "epoch " << e.epoch << " lr " << e.lr << " loss " << e.train_loss << " test_acc "
           << e.test_accuracy << " seconds " << e.seconds << "\n";
    write_text(fs::path(g.out) / "train_report.txt", rp.str());

    for (const auto& e : report.epochs)
        std::cout << "@rec epoch index=" << e.epoch << " lr=" << e.lr << " loss=" << e.train_loss
                  << " test_acc=" << e.test_accuracy << "\n";
    std::cout << "@rec result final_acc=" << report.final_test_accuracy
              << " best_epoch=" << report.best_epoch << " model=" << model_path.string() << "\n";
    std::cout << "final test accuracy " << report.final_test_accuracy << " (best epoch "
              << report.best_epoch << "), model written to " << model_path.string() << "\n";
    return 0;
}

int cmd_eval(const std::string& cfg_path, const std::string& model_path, const GlobalFlags& g) {
    dwn::RunConfig cfg = load_run_config(cfg_path, g.sets);
    const dwn::FrozenModel fm = dwn::unpack(read_bytes(model_path));
    const dwn::LoadedData data = load_data(cfg, g);
    const double train_acc = dwn::evaluate(fm, encode_with_model(fm, data.train));
    const double test_acc = dwn::evaluate(fm, encode_with_model(fm, data.test));
    std::cout << "train accuracy " << train_acc << "\n";
    std::cout << "test accuracy " << test_acc << "\n";
    std::cout << "@rec eval train_acc=" << train_acc << " test_acc=" << test_acc << "\n";
    return 0;
}

int cmd_area(const std::string& model_path) {
    const dwn::FrozenModel fm = dwn::unpack(read_bytes(model_path));
    const dwn::AreaReport report = dwn::model_area(fm);
    std::cout << area_text(report);
    emit_area_records(report);
    return 0;
}

int cmd_netlist(const std::string& model_path, const std::string& out_file) {
    const dwn::FrozenModel fm = dwn::unpack(read_bytes(model_path));
    const dwn::Netlist net = dwn::export_netlist(fm);
    const std::string text = dwn::netlist_text(net);
    if (out_file.empty())
        std::cout << text;
    else
        write_text(out_file, text);
    std::cout << "@rec netlist inputs=" << net.input_bits << " gates=" << net.gates.size()
              << " outputs=" << net.outputs.size() << "\n";
    return 0;
}

int cmd_export(const std::string& model_path, const GlobalFlags& g) {
    const std::vector<std::uint8_t> bytes = read_bytes(model_path);
    const dwn::FrozenModel fm = dwn::unpack(bytes);
    fs::create_directories(g.out);

    const dwn::AreaReport report = dwn::model_area(fm);
    write_text(fs::path(g.out) / "area.txt", area_text(report));
    emit_area_records(report);

    const dwn::PackedStats stats = dwn::packed_stats(bytes);
    std::ostringstream ps;
    ps << "total_bytes " << stats.total_bytes << "\n";
    ps << "header_bytes " << stats.header_bytes << "\n";
    ps << "scratchpad_bits " << stats.scratchpad_bits << "\n";
    for (std::size_t c = 0; c < stats.chains.size(); ++c)
        for (const auto& st : stats.chains[c])
            ps << "chain " << c << " stage n=" << int(st.n) << " luts=" << st.u
               << " index_bits=" << int(st.index_width) << " map_bytes=" << st.map_bytes
               << " lut_bytes=" << st.lut_bytes << "\n";
    write_text(fs::path(g.out) / "packed_stats.txt", ps.str());

    try {
        const dwn::Netlist net = dwn::export_netlist(fm);
        write_text(fs::path(g.out) / "netlist.txt", dwn::netlist_text(net));
        std::cout << "netlist: " << net.gates.size() << " gates\n";
    } catch (const dwn::UnsupportedForNetlist& e) {
        std::cout << "netlist skipped: " << e.what() << "\n";
    }
    std::cout << "export written to " << g.out << "\n";
    return 0;
}

int cmd_gradcheck(const GlobalFlags& g) {
    const std::vector<dwn::GradCheck> checks = dwn::run_gradchecks(g.seed);
    bool all_pass = true;
    std::size_t width = 0;
    for (const auto& c : checks) width = std::max(width, c.name.size());
    for (const auto& c : checks) {
        all_pass = all_pass && c.pass;
        std::cout << (c.pass ? "[PASS] " : "[FAIL] ") << std::left << std::setw(int(width) + 2)
                  << c.name << std::scientific << std::setprecision(3) << "err " << c.error
                  << "  tol " << c.tolerance << std::defaultfloat << "\n";
        std::cout << "@rec gradcheck name=\"" << c.name << "\" err=" << c.error
                  << " tol=" << c.tolerance << " pass=" << (c.pass ? 1 : 0) << "\n";
    }
    std::cout << (all_pass ? "all checks passed\n" : "some checks FAILED\n");
    return all_pass ? 0 : 1;
}

int cmd_pack(const std::string& model_path) {
    const std::vector<std::uint8_t> bytes = read_bytes(model_path);
    const dwn::PackedStats stats = dwn::packed_stats(bytes);
    std::cout << "total " << stats.total_bytes << " bytes (header " << stats.header_bytes
              << "), scratchpad " << stats.scratchpad_bits << " bits\n";
    for (std::size_t c = 0; c < stats.chains.size(); ++c)
        for (const auto& st : stats.chains[c])
            std::cout << "chain " << c << ": n=" << int(st.n) << " luts=" << st.u << " index "
                      << int(st.index_width) << "-bit map " << st.map_bytes << " B, tables "
                      << st.lut_bytes << " B\n";
    const std::vector<std::uint8_t> again = dwn::pack(dwn::unpack(bytes));
    const bool identical = again == bytes;
    std::cout << "unpack/repack round trip: " << (identical ? "byte-identical" : "MISMATCH")
              << "\n";
    std::cout << "@rec pack total_bytes=" << stats.total_bytes
              << " scratchpad_bits=" << stats.scratchpad_bits
              << " roundtrip=" << (identical ? 1 : 0) << "\n";
    return identical ? 0 : 1;
}

int cmd_run_packed(const std::string& model_path, const std::string& cfg_path,
                   const std::string& bits, const GlobalFlags& g) {
    const std::vector<std::uint8_t> bytes = read_bytes(model_path);
    const dwn::PackedView view = dwn::parse_packed(bytes);

    if (!bits.empty()) {
        dwn::BitVector x(bits.size());
        for (std::size_t i = 0; i < bits.size(); ++i) {
            if (bits[i] != '0' && bits[i] != '1')
                throw UsageExit{"--bits takes a string of 0s and 1s"};
            x.set(i, bits[i] == '1');
        }
        const std::uint32_t cls = dwn::interpret(view, x);
        std::cout << "class " << cls << "\n";
        std::cout << "@rec run_packed class=" << cls << "\n";
        return 0;
    }
    if (cfg_path.empty()) throw UsageExit{"run-packed needs a config (for data) or --bits"};

    dwn::RunConfig cfg = load_run_config(cfg_path, g.sets);
    const dwn::FrozenModel fm = dwn::unpack(bytes);
    const dwn::LoadedData data = load_data(cfg, g);
    const dwn::EncodedDataset enc = encode_with_model(fm, data.test);
    std::size_t correct = 0, agree = 0;
    for (std::size_t r = 0; r < enc.size(); ++r) {
        const std::uint32_t cls = dwn::interpret(view, enc.rows[r]);
        correct += cls == enc.labels[r];
        agree += cls == fm.predict(enc.rows[r]);
    }
    const double acc = double(correct) / double(enc.size());
    const double agreement = double(agree) / double(enc.size());
    std::cout << "packed interpreter test accuracy " << acc << " (agreement with unpacked "
              << agreement << ")\n";
    std::cout << "@rec run_packed test_acc=" << acc << " agreement=" << agreement << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Differentiable weightless network trainer and hardware-cost compiler"};
    app.require_subcommand(1);
    GlobalFlags g;

    std::string cfg_path, model_path, out_file, bits;

    auto add_common = [&](CLI::App* sub, bool with_out) {
        sub->add_option("--seed", g.seed, "Seed for init, shuffling and splits");
        sub->add_option("--set", g.sets, "Config override key=value (repeatable)");
        sub->add_option("--data-dir", g.data_dir, "Directory holding datasets");
        if (with_out) sub->add_option("--out", g.out, "Output directory");
    };

    CLI::App* train = app.add_subcommand("train", "Train a model from a config file");
    train->add_option("config", cfg_path, "Config file")->required();
    add_common(train, true);
    train->add_option("--threads", g.threads, "Worker threads (results identical for any count)");
    train->add_flag("--strict-deterministic", g.strict, "Force single-threaded math");

    CLI::App* eval = app.add_subcommand("eval", "Evaluate a model file on a config's data");
    eval->add_option("config", cfg_path, "Config file (data source)")->required();
    eval->add_option("--model", model_path, "Packed model file")->required();
    add_common(eval, false);

    CLI::App* exp = app.add_subcommand("export", "Write area, packed stats and netlist");
    exp->add_option("model", model_path, "Packed model file")->required();
    add_common(exp, true);

    CLI::App* area = app.add_subcommand("area", "NAND2 area report for a model file");
    area->add_option("model", model_path, "Packed model file")->required();

    CLI::App* netlist = app.add_subcommand("netlist", "Emit the NAND netlist of a fan-in-2 model");
    netlist->add_option("model", model_path, "Packed model file")->required();
    netlist->add_option("--out", out_file, "Write to file instead of stdout");

    CLI::App* gradcheck = app.add_subcommand("gradcheck", "Run gradient oracles, report errors");
    gradcheck->add_option("--seed", g.seed, "Seed for the checked shapes");

    CLI::App* packcmd = app.add_subcommand("pack", "Inspect a packed model and verify round trip");
    packcmd->add_option("model", model_path, "Packed model file")->required();

    CLI::App* runp = app.add_subcommand("run-packed", "Run the packed-format interpreter");
    runp->add_option("model", model_path, "Packed model file")->required();
    runp->add_option("config", cfg_path, "Config file (data source)");
    runp->add_option("--bits", bits, "Single encoded input as a 01 string");
    add_common(runp, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (app.got_subcommand(train)) return cmd_train(cfg_path, g);
        if (app.got_subcommand(eval)) return cmd_eval(cfg_path, model_path, g);
        if (app.got_subcommand(exp)) return cmd_export(model_path, g);
        if (app.got_subcommand(area)) return cmd_area(model_path);
        if (app.got_subcommand(netlist)) return cmd_netlist(model_path, out_file);
        if (app.got_subcommand(gradcheck)) return cmd_gradcheck(g);
        if (app.got_subcommand(packcmd)) return cmd_pack(model_path);
        if (app.got_subcommand(runp)) return cmd_run_packed(model_path, cfg_path, bits, g);
    } catch (const UsageExit& e) {
        std::cerr << "usage error: " << e.message << "\n";
        return 2;
    } catch (const dwn::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
