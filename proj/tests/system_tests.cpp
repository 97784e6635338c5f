#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "dwn/config.hpp"
#include "dwn/dataset.hpp"
#include "dwn/model.hpp"
#include "dwn/trainer.hpp"

#include "support/oracles.hpp"

using namespace dwn;

namespace {

namespace fs = std::filesystem;

/// Per-process scratch directory, wiped on construction.
fs::path scratch_dir() {
    static const fs::path dir = [] {
        fs::path p = fs::temp_directory_path() / "dwn-system-tests";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

fs::path write_file(const std::string& name, const std::string& text) {
    const fs::path p = scratch_dir() / name;
    std::ofstream out(p, std::ios::binary);
    out << text;
    return p;
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

void push_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
    b.push_back(std::uint8_t(v >> 24));
    b.push_back(std::uint8_t(v >> 16));
    b.push_back(std::uint8_t(v >> 8));
    b.push_back(std::uint8_t(v));
}

ModelConfig tiny_popcount_config() {
    ModelConfig m;
    m.z = 4;
    m.layers = {12};
    m.lut_inputs = {2};
    m.head = HeadKind::Popcount;
    m.tau = 0.2;
    m.batch_size = 16;
    m.epochs = 15;
    m.lr = {{1e-2, 15}};
    return m;
}

bool same_matrix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

/// label = x0 > x1, two uniform features.
Dataset threshold_dataset(std::size_t rows, std::uint64_t seed) {
    Dataset d;
    d.rows = rows;
    d.cols = 2;
    d.class_count = 2;
    d.class_names = {"below", "above"};
    Rng rng(seed);
    for (std::size_t r = 0; r < rows; ++r) {
        const double a = rng.uniform(0.0, 1.0);
        const double b = rng.uniform(0.0, 1.0);
        d.x.push_back(a);
        d.x.push_back(b);
        d.labels.push_back(a > b ? 1 : 0);
    }
    return d;
}

} // namespace

TEST_SUITE_BEGIN("system");

TEST_CASE("model config rejects inconsistent shapes and schedules") {
    ModelConfig m = tiny_popcount_config();
    CHECK_NOTHROW(m.validate());

    ModelConfig bad = m;
    bad.layers.clear();
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = m;
    bad.lut_inputs = {2, 2, 2};
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = m;
    bad.lut_inputs = {0};
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = m;
    bad.lr = {{1e-2, 10}};
    CHECK_THROWS_AS(bad.validate(), ConfigError); // stages cover 10, epochs 15

    bad = m;
    bad.head = HeadKind::Pyramid;
    bad.layers = {8, 4, 2}; // does not end at width 1
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = m;
    bad.pyramid = {4, 2, 1}; // pyramid widths under a popcount head
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = m;
    bad.epochs = 0;
    bad.lr.clear(); // schedule checks only apply when training
    CHECK_NOTHROW(bad.validate());
}

TEST_CASE("default mapping is learnable first then random") {
    ModelConfig m;
    m.layers = {8, 4};
    CHECK(m.mapping_at(0) == MappingKind::Learnable);
    CHECK(m.mapping_at(1) == MappingKind::Random);

    m.mapping = {MappingKind::Random};
    CHECK(m.mapping_at(0) == MappingKind::Random);
    CHECK(m.mapping_at(1) == MappingKind::Random);
}

TEST_CASE("head kinds wire the expected chain structure") {
    ModelConfig m = tiny_popcount_config();
    TrainingModel pop = build_model(m, 8, 3, 1);
    CHECK(pop.body().size() == 1);
    CHECK(pop.pyramid_chains().empty());
    FrozenModel fpop = pop.freeze(nullptr);
    CHECK(fpop.chains.size() == 1);
    CHECK(fpop.shared_prefix == 0);

    ModelConfig pyr = m;
    pyr.head = HeadKind::Pyramid;
    pyr.layers = {8, 4, 2, 1};
    TrainingModel binary = build_model(pyr, 8, 2, 1);
    CHECK(binary.body().empty());
    CHECK(binary.pyramid_chains().size() == 1);
    FrozenModel fbin = binary.freeze(nullptr);
    CHECK(fbin.chains.size() == 1);
    CHECK(fbin.shared_prefix == 0);
    CHECK(fbin.chains[0].back().u == 1);

    ModelConfig deep = pyr;
    deep.layers = {10, 6};
    deep.pyramid = {4, 2, 1};
    TrainingModel multi = build_model(deep, 8, 3, 1);
    CHECK(multi.body().size() == 2);
    CHECK(multi.pyramid_chains().size() == 3);
    FrozenModel fmulti = multi.freeze(nullptr);
    CHECK(fmulti.chains.size() == 3);
    CHECK(fmulti.shared_prefix == 2);
    for (const auto& chain : fmulti.chains) {
        CHECK(chain.size() == 5);
        CHECK(chain.back().u == 1);
    }
    CHECK_NOTHROW(fmulti.validate());
}

TEST_CASE("hand-built frozen OR model predicts through the hard path") {
    FrozenModel fm;
    fm.input_bits = 2;
    fm.head = HeadKind::Pyramid;
    fm.class_count = 2;
    FrozenStage st;
    st.input_bits = 2;
    st.n = 2;
    st.u = 1;
    st.sel = {0, 1};
    st.table = BitVector(4);
    st.table.set(1, true); // rows 01, 10, 11: an OR gate
    st.table.set(2, true);
    st.table.set(3, true);
    fm.chains.push_back({st});
    fm.validate();

    BitVector in(2);
    CHECK(fm.predict(in) == 0);
    in.set(1, true);
    CHECK(fm.predict(in) == 1);
    in.set(0, true);
    CHECK(fm.predict(in) == 1);
    CHECK_THROWS_AS(fm.predict(BitVector(3)), InputShapeError);
}

TEST_CASE("popcount prediction breaks count ties toward the lower class") {
    FrozenModel fm;
    fm.input_bits = 2;
    fm.head = HeadKind::Popcount;
    fm.class_count = 2;
    FrozenStage st;
    st.input_bits = 2;
    st.n = 1;
    st.u = 4;
    st.sel = {0, 1, 0, 1};
    st.table = BitVector(8);
    // Every LUT passes its input through: rows (0,1) -> bits (0,1).
    for (std::uint32_t lut = 0; lut < 4; ++lut) st.table.set(lut * 2 + 1, true);
    fm.chains.push_back({st});
    fm.validate();

    BitVector in(2);
    in.set(0, true); // blocks count (1, 1)
    auto counts = fm.class_counts(in);
    CHECK(counts[0] == 1);
    CHECK(counts[1] == 1);
    CHECK(fm.predict(in) == 0);

    in.set(0, false);
    in.set(1, true); // blocks count (1, 1) again, different bits
    CHECK(fm.predict(in) == 0);
}

TEST_CASE("snapshot and restore round-trip the trainable tensors") {
    ModelConfig m = tiny_popcount_config();
    TrainingModel model = build_model(m, 8, 2, 7);
    auto before = model.snapshot();
    Rng prng(3);
    const BitVector probe = dwn::testing::random_bits(prng, 8);
    const std::uint32_t pred_before = model.predict_hard(probe);

    for (auto* p : model.parameters()) p->setConstant(0.25);
    model.restore(before);
    CHECK(model.predict_hard(probe) == pred_before);
    auto after = model.snapshot();
    REQUIRE(after.size() == before.size());
    for (std::size_t i = 0; i < after.size(); ++i) CHECK(same_matrix(after[i], before[i]));

    before.pop_back();
    CHECK_THROWS_AS(model.restore(before), InputShapeError);
}

TEST_CASE("config text parses widths, temperatures and staged rates") {
    const std::string text =
        "# training run\n"
        "dataset = blood\n"
        "z = 200\n"
        "layers = 2x 6000, 1000   # wide body\n"
        "n = 6\n"
        "head = popcount\n"
        "tau = 1/0.245\n"
        "bs = 128\n"
        "epochs = 60\n"
        "lr = 1e-2(30), 1e-3(30)\n"
        "opt = sgd\n"
        "grad = fd\n"
        "spectral = true\n"
        "lambda = 0.01\n";
    RunConfig cfg = parse_config_text(text);
    CHECK(cfg.dataset == "blood");
    CHECK(cfg.model.z == 200);
    CHECK(cfg.model.layers == std::vector<std::uint32_t>{6000, 6000, 1000});
    CHECK(cfg.model.lut_inputs == std::vector<std::uint32_t>{6});
    CHECK(cfg.model.tau == doctest::Approx(1.0 / 0.245));
    CHECK(cfg.model.batch_size == 128);
    REQUIRE(cfg.model.lr.size() == 2);
    CHECK(cfg.model.lr[0].first == doctest::Approx(1e-2));
    CHECK(cfg.model.lr[0].second == 30);
    CHECK(cfg.model.lr[1].second == 30);
    CHECK_FALSE(cfg.model.adam);
    CHECK(cfg.model.grad == GradRule::Fd);
    CHECK(cfg.model.spectral_at(0));
    CHECK(cfg.model.lambda == doctest::Approx(0.01));
    CHECK_NOTHROW(cfg.model.validate());
}

TEST_CASE("bare learning rate spans all epochs") {
    RunConfig cfg = parse_config_text("layers = 8\nepochs = 40\nlr = 5e-3\n");
    REQUIRE(cfg.model.lr.size() == 1);
    CHECK(cfg.model.lr[0].first == doctest::Approx(5e-3));
    CHECK(cfg.model.lr[0].second == 40);

    // Evaluation-only configs may state a rate without epochs.
    RunConfig eval = parse_config_text("layers = 8\nepochs = 0\nlr = 5e-3\n");
    CHECK(eval.model.lr.empty());

    RunConfig defaulted = parse_config_text("layers = 8\nepochs = 10\n");
    REQUIRE(defaulted.model.lr.size() == 1);
    CHECK(defaulted.model.lr[0].second == 10);
}

TEST_CASE("pyramid head variants parse") {
    RunConfig plain = parse_config_text("layers = 8, 4, 2, 1\nhead = pyramid\n");
    CHECK(plain.model.head == HeadKind::Pyramid);
    CHECK(plain.model.pyramid.empty());
    CHECK(plain.model.chain_widths() == std::vector<std::uint32_t>{8, 4, 2, 1});

    RunConfig topped = parse_config_text("layers = 32\nhead = pyramid:4,2,1\n");
    CHECK(topped.model.pyramid == std::vector<std::uint32_t>{4, 2, 1});
    CHECK(topped.model.body_widths() == std::vector<std::uint32_t>{32});
}

TEST_CASE("config errors carry the line number") {
    try {
        parse_config_text("z = 8\nlayers = 16\nhead = cone\n");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config_text("layers 16\n"), ParseError);
    CHECK_THROWS_AS(parse_config_text("wat = 7\n"), ParseError);
    CHECK_THROWS_AS(parse_config_text("tau = 1/0\n"), ParseError);
    CHECK_THROWS_AS(parse_config_text("layers = 0x 16\n"), ParseError);
    CHECK_THROWS_AS(parse_config_text("epochs = 10\nlr = 1e-2(5), 1e-3\n"), ParseError);
}

TEST_CASE("config overrides reuse the line syntax") {
    RunConfig cfg = parse_config_text("layers = 8\nepochs = 10\nbs = 32\n");
    apply_override(cfg, "bs = 64");
    CHECK(cfg.model.batch_size == 64);
    apply_override(cfg, "lr=1e-3");
    CHECK(cfg.model.lr[0].first == doctest::Approx(1e-3));
    CHECK(cfg.model.lr[0].second == 10);
    CHECK_THROWS_AS(apply_override(cfg, "nope = 1"), ParseError);
}

TEST_CASE("config files load from disk") {
    const fs::path p = write_file("run.cfg", "layers = 4\nz = 2\n");
    RunConfig cfg = load_config(p.string());
    CHECK(cfg.model.z == 2);
    CHECK_THROWS_AS(load_config((scratch_dir() / "absent.cfg").string()), ParseError);
}

TEST_CASE("csv loads, factorizes labels and reports malformed rows") {
    const fs::path p = write_file("tiny.csv",
                                  "a,b,label\n"
                                  "1.0, 2.0, yes\n"
                                  "3.0,\"4.0\",no\n"
                                  "5.0,6.0,yes\n");
    Dataset d = load_csv(p.string(), "label", true);
    CHECK(d.rows == 3);
    CHECK(d.cols == 2);
    CHECK(d.labels == std::vector<std::uint32_t>{0, 1, 0});
    CHECK(d.class_names == std::vector<std::string>{"yes", "no"});
    CHECK(d.feature_names == std::vector<std::string>{"a", "b"});
    CHECK(d.x == std::vector<double>{1.0, 2.0, 3.0, 4.0, 5.0, 6.0});

    Dataset by_index = load_csv(p.string(), "-1", true);
    CHECK(by_index.labels == d.labels);

    const fs::path numeric = write_file("numeric.csv", "1,10,0\n2,20,1\n3,30,0\n");
    Dataset first = load_csv(numeric.string(), "0", false);
    CHECK(first.cols == 2);
    CHECK(first.class_count == 3);
    CHECK(first.x == std::vector<double>{10.0, 0.0, 20.0, 1.0, 30.0, 0.0});

    CHECK_THROWS_AS(load_csv(numeric.string(), "label", false), ConfigError);
    CHECK_THROWS_AS(load_csv(numeric.string(), "7", false), ConfigError);
    CHECK_THROWS_AS(load_csv((scratch_dir() / "absent.csv").string(), "-1", true), ParseError);

    const fs::path ragged = write_file("ragged.csv", "a,b,label\n1,2,x\n1,2\n");
    try {
        load_csv(ragged.string(), "label", true);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }

    const fs::path word = write_file("word.csv", "a,b,label\noops,2,x\n1,2,y\n");
    CHECK_THROWS_AS(load_csv(word.string(), "label", true), ParseError);

    const fs::path oneclass = write_file("oneclass.csv", "a,label\n1,x\n2,x\n");
    CHECK_THROWS_AS(load_csv(oneclass.string(), "label", true), ParseError);
}

TEST_CASE("split shuffles deterministically and partitions the rows") {
    Dataset d = threshold_dataset(100, 4);
    auto [train, test] = split(d, {0.8, 11});
    CHECK(train.rows == 80);
    CHECK(test.rows == 20);
    CHECK(train.class_count == d.class_count);

    // Every original row appears exactly once across the halves.
    std::multiset<double> seen;
    for (std::size_t r = 0; r < train.rows; ++r) seen.insert(train.x[r * 2]);
    for (std::size_t r = 0; r < test.rows; ++r) seen.insert(test.x[r * 2]);
    std::multiset<double> want;
    for (std::size_t r = 0; r < d.rows; ++r) want.insert(d.x[r * 2]);
    CHECK(seen == want);

    auto [train2, test2] = split(d, {0.8, 11});
    CHECK(train2.x == train.x);
    auto [train3, test3] = split(d, {0.8, 12});
    CHECK(train3.x != train.x);

    CHECK_THROWS_AS(split(d, {1.5, 0}), ConfigError);
}

TEST_CASE("idx image pairs load with big-endian headers") {
    std::vector<std::uint8_t> img;
    push_be32(img, 0x00000803);
    push_be32(img, 2); // two 2x2 images
    push_be32(img, 2);
    push_be32(img, 2);
    for (std::uint8_t v : {10, 20, 30, 40, 50, 60, 70, 80}) img.push_back(v);
    std::vector<std::uint8_t> lab;
    push_be32(lab, 0x00000801);
    push_be32(lab, 2);
    lab.push_back(3);
    lab.push_back(1);

    const fs::path ip = scratch_dir() / "imgs.idx";
    const fs::path lp = scratch_dir() / "labs.idx";
    write_bytes(ip, img);
    write_bytes(lp, lab);

    Dataset d = load_mnist_idx(ip.string(), lp.string());
    CHECK(d.rows == 2);
    CHECK(d.cols == 4);
    CHECK(d.x[0] == 10.0);
    CHECK(d.x[7] == 80.0);
    CHECK(d.labels == std::vector<std::uint32_t>{3, 1});
    CHECK(d.class_count == 4);

    img[3] = 0x04; // wrong magic
    write_bytes(ip, img);
    CHECK_THROWS_AS(load_mnist_idx(ip.string(), lp.string()), ParseError);
}

TEST_CASE("registry lookup knows the bundled datasets and rejects strangers") {
    CHECK(registry_lookup("blood").features == 4);
    CHECK(registry_lookup("mnist").format == "idx");
    CHECK(registry_lookup("mnist").presplit);
    CHECK_THROWS_AS(registry_lookup("does-not-exist"), LookupError);
}

TEST_CASE("input pipeline encodes z thresholds per feature") {
    Dataset d = threshold_dataset(64, 5);
    ModelConfig m = tiny_popcount_config();
    InputPipeline pipe = fit_input_pipeline(d, m);
    CHECK_FALSE(pipe.quantized);
    CHECK(pipe.codec.encoded_bits() == d.cols * m.z);

    EncodedDataset enc = encode_dataset(pipe, d);
    CHECK(enc.size() == d.rows);
    CHECK(enc.input_bits == 8);
    CHECK(enc.labels == d.labels);
    CHECK(enc.rows[0].size() == 8);

    ModelConfig q = m;
    q.quantize_inputs = true;
    InputPipeline qpipe = fit_input_pipeline(d, q);
    CHECK(qpipe.quantized);
    REQUIRE(qpipe.qlo.size() == 2);
    CHECK(qpipe.qlo[0] < qpipe.qhi[0]);
    // Quantized and raw pipelines agree on monotonicity: more bits for larger x.
    std::vector<double> low{0.1, 0.5}, high{0.9, 0.5};
    CHECK(qpipe.encode(high).popcount() >= qpipe.encode(low).popcount());
}

TEST_CASE("training learns a threshold task and reports per-epoch records") {
    Dataset train_raw = threshold_dataset(240, 21);
    Dataset test_raw = threshold_dataset(80, 22);
    ModelConfig m = tiny_popcount_config();
    InputPipeline pipe = fit_input_pipeline(train_raw, m);
    EncodedDataset train_set = encode_dataset(pipe, train_raw);
    EncodedDataset test_set = encode_dataset(pipe, test_raw);

    TrainingModel model = build_model(m, train_set.input_bits, 2, 3);
    TrainOptions opts;
    opts.seed = 3;
    TrainReport report = train(model, train_set, test_set, opts);

    REQUIRE(report.epochs.size() == m.epochs);
    CHECK(report.epochs.front().lr == doctest::Approx(1e-2));
    CHECK(report.best_test_accuracy >= 0.85);
    CHECK(report.final_test_accuracy == doctest::Approx(report.best_test_accuracy));
    // The returned model sits at the best checkpoint.
    CHECK(evaluate(model, test_set) == doctest::Approx(report.best_test_accuracy));
}

TEST_CASE("zero epochs only evaluates") {
    Dataset raw = threshold_dataset(40, 2);
    ModelConfig m = tiny_popcount_config();
    m.epochs = 0;
    m.lr.clear();
    InputPipeline pipe = fit_input_pipeline(raw, m);
    EncodedDataset enc = encode_dataset(pipe, raw);
    TrainingModel model = build_model(m, enc.input_bits, 2, 9);
    TrainReport report = train(model, enc, enc, {});
    CHECK(report.epochs.empty());
    CHECK(report.final_test_accuracy == doctest::Approx(evaluate(model, enc)));
}

TEST_CASE("training is deterministic in the seed and the thread count") {
    Dataset train_raw = threshold_dataset(120, 31);
    Dataset test_raw = threshold_dataset(40, 32);
    ModelConfig m = tiny_popcount_config();
    m.epochs = 5;
    m.lr = {{1e-2, 5}};
    InputPipeline pipe = fit_input_pipeline(train_raw, m);
    EncodedDataset train_set = encode_dataset(pipe, train_raw);
    EncodedDataset test_set = encode_dataset(pipe, test_raw);

    auto run = [&](std::uint64_t seed, std::uint32_t threads) {
        TrainingModel model = build_model(m, train_set.input_bits, 2, seed);
        TrainOptions opts;
        opts.seed = seed;
        opts.threads = threads;
        train(model, train_set, test_set, opts);
        return model.snapshot();
    };

    auto a = run(5, 1);
    auto b = run(5, 1);
    auto c = run(5, 3);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(same_matrix(a[i], b[i]));
        CHECK(same_matrix(a[i], c[i]));
    }
    auto d = run(6, 1);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.size(); ++i) any_diff = any_diff || !same_matrix(a[i], d[i]);
    CHECK(any_diff);
}

TEST_CASE("an exploding schedule raises a divergence error and keeps the checkpoint") {
    Dataset raw = threshold_dataset(64, 41);
    ModelConfig m;
    m.z = 4;
    m.layers = {8, 4, 2, 1};
    m.lut_inputs = {2};
    m.head = HeadKind::Pyramid;
    m.tau = 0.2;
    m.batch_size = 16;
    m.epochs = 6;
    // Adam's bias-corrected first step moves every touched entry by about lr,
    // so the final stage's logits overflow within a couple of batches.
    m.lr = {{1e308, 6}};
    InputPipeline pipe = fit_input_pipeline(raw, m);
    EncodedDataset enc = encode_dataset(pipe, raw);
    TrainingModel model = build_model(m, enc.input_bits, 2, 13);
    CHECK_THROWS_AS(train(model, enc, enc, {}), NumericalDivergence);
    // The restored tables are finite and usable.
    CHECK_NOTHROW(model.predict_hard(enc.rows[0]));
}

TEST_CASE("fan-ins beyond the weight cache train through the fallback path") {
    Dataset raw = threshold_dataset(48, 51);
    ModelConfig m;
    m.z = 8;
    m.layers = {6};
    m.lut_inputs = {11};
    m.head = HeadKind::Popcount;
    m.tau = 0.3;
    m.batch_size = 16;
    m.epochs = 2;
    m.lr = {{1e-2, 2}};
    InputPipeline pipe = fit_input_pipeline(raw, m);
    EncodedDataset enc = encode_dataset(pipe, raw);
    TrainingModel model = build_model(m, enc.input_bits, 2, 17);
    TrainReport report = train(model, enc, enc, {});
    CHECK(report.epochs.size() == 2);
    CHECK(std::isfinite(report.epochs.back().train_loss));
}

TEST_CASE("mismatched data shapes are rejected before training") {
    Dataset raw = threshold_dataset(32, 61);
    ModelConfig m = tiny_popcount_config();
    InputPipeline pipe = fit_input_pipeline(raw, m);
    EncodedDataset enc = encode_dataset(pipe, raw);
    TrainingModel model = build_model(m, enc.input_bits + 1, 2, 19);
    CHECK_THROWS_AS(train(model, enc, enc, {}), InputShapeError);

    EncodedDataset empty;
    empty.input_bits = enc.input_bits;
    empty.class_count = 2;
    TrainingModel ok = build_model(m, enc.input_bits, 2, 19);
    CHECK_THROWS_AS(train(ok, empty, enc, {}), ConfigError);
}

TEST_SUITE_END();
