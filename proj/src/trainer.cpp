#include "dwn/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <ostream>
#include <thread>

#include "dwn/spectral.hpp"

namespace dwn {

namespace {

using MatrixU8 = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;
using MatrixU32 = Eigen::Matrix<std::uint32_t, Eigen::Dynamic, Eigen::Dynamic>;

constexpr std::uint32_t kMaxMatrixFanIn = 10; // above this, per-sample fallback paths

void parallel_columns(std::uint32_t count, std::uint32_t threads,
                      const std::function<void(std::uint32_t, std::uint32_t)>& fn) {
    if (threads <= 1 || count < 2 * threads) {
        fn(0, count);
        return;
    }
    std::vector<std::thread> pool;
    const std::uint32_t chunk = (count + threads - 1) / threads;
    for (std::uint32_t t = 0; t < threads; ++t) {
        const std::uint32_t b = t * chunk;
        const std::uint32_t e = std::min(count, b + chunk);
        if (b >= e) break;
        pool.emplace_back(fn, b, e);
    }
    for (auto& th : pool) th.join();
}

} // namespace

InputPipeline fit_input_pipeline(const Dataset& train, const ModelConfig& config) {
    train.validate();
    if (train.rows == 0) throw ConfigError("fit_input_pipeline: empty training set");
    InputPipeline pipe;
    auto cols = train.columns();
    if (config.quantize_inputs) {
        pipe.quantized = true;
        pipe.qlo.resize(train.cols);
        pipe.qhi.resize(train.cols);
        for (std::size_t c = 0; c < train.cols; ++c) {
            auto [mn, mx] = std::minmax_element(cols[c].begin(), cols[c].end());
            pipe.qlo[c] = *mn;
            pipe.qhi[c] = *mx;
        }
        for (std::size_t c = 0; c < train.cols; ++c) {
            std::vector<double> one{0.0};
            for (auto& v : cols[c]) {
                one[0] = v;
                const auto q = quantize8(one, {&pipe.qlo[c], 1}, {&pipe.qhi[c], 1});
                v = double(q[0]);
            }
        }
    }
    pipe.codec = fit_distributive(cols, config.z);
    return pipe;
}

BitVector InputPipeline::encode(std::span<const double> raw) const {
    if (!quantized) return codec.encode(raw);
    const auto q = quantize8(raw, qlo, qhi);
    std::vector<double> qd(q.begin(), q.end());
    return codec.encode(qd);
}

EncodedDataset encode_dataset(const InputPipeline& pipe, const Dataset& d) {
    d.validate();
    EncodedDataset out;
    out.input_bits = std::uint32_t(pipe.codec.encoded_bits());
    out.class_count = d.class_count;
    out.labels = d.labels;
    out.rows.reserve(d.rows);
    for (std::size_t r = 0; r < d.rows; ++r) out.rows.push_back(pipe.encode(d.row(r)));
    return out;
}

double evaluate(const FrozenModel& model, const EncodedDataset& d) {
    if (d.size() == 0) throw ConfigError("evaluate: empty dataset");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < d.size(); ++i)
        if (model.predict(d.rows[i]) == d.labels[i]) ++correct;
    return double(correct) / double(d.size());
}

double evaluate(const TrainingModel& model, const EncodedDataset& d) {
    return evaluate(model.freeze(nullptr), d);
}

namespace {

struct StageWork {
    std::vector<std::uint32_t> sel;
    MatrixU8 bits;         // u x B
    MatrixU32 addr;        // u x B
    Eigen::MatrixXd values; // u x B
    Eigen::MatrixXd gcur;   // u x B, gradient w.r.t. this stage's read values
    Eigen::MatrixXd dpins;  // (u*n) x B
    Eigen::MatrixXd AG;     // (n*2^n) x u
    Eigen::MatrixXd SM;     // P x Q softmax workspace
    Eigen::MatrixXd Sx;     // P x B signed input workspace
    Eigen::MatrixXd dU;     // 2^n x u
    Eigen::MatrixXd dW;     // P x Q (learnable mapping only)
};

class BatchEngine {
  public:
    BatchEngine(TrainingModel& model, std::uint32_t threads)
        : model_(model), threads_(std::max(1u, threads)) {
        body_work_.resize(model_.body().size());
        chain_work_.resize(model_.pyramid_chains().size());
        for (std::size_t c = 0; c < chain_work_.size(); ++c)
            chain_work_[c].resize(model_.pyramid_chains()[c].size());

        auto add = [this](Stage& st, StageWork& w) {
            tensors_.push_back({&st.layer.table(), &w.dU});
            if (st.kind == MappingKind::Learnable) tensors_.push_back({&st.lm.weights(), &w.dW});
        };
        for (std::size_t s = 0; s < model_.body().size(); ++s)
            add(model_.body()[s], body_work_[s]);
        for (std::size_t c = 0; c < chain_work_.size(); ++c)
            for (std::size_t s = 0; s < chain_work_[c].size(); ++s)
                add(model_.pyramid_chains()[c][s], chain_work_[c][s]);
    }

    struct Tensor {
        Eigen::MatrixXd* param;
        Eigen::MatrixXd* grad;
    };

    std::vector<Tensor>& tensors() { return tensors_; }

    /// Forward, loss, and backward over one batch. Returns the mean
    /// cross-entropy; gradients land in the tensors() grad matrices.
    double step(const EncodedDataset& data, std::span<const std::uint32_t> batch) {
        const auto B = std::uint32_t(batch.size());
        stage_input(data, batch);

        const MatrixU8* in = &x0_;
        for (std::size_t s = 0; s < model_.body().size(); ++s) {
            forward_stage(model_.body()[s], body_work_[s], *in, B);
            in = &body_work_[s].bits;
        }
        const MatrixU8* body_out = in;
        for (std::size_t c = 0; c < chain_work_.size(); ++c) {
            const MatrixU8* cin = body_out;
            for (std::size_t s = 0; s < chain_work_[c].size(); ++s) {
                forward_stage(model_.pyramid_chains()[c][s], chain_work_[c][s], *cin, B);
                cin = &chain_work_[c][s].bits;
            }
        }

        const double loss = head_loss_and_grads(data, batch, B);

        // Pyramid chains first; their first-stage input gradients sum into
        // the body's final stage (or vanish at the encoded input).
        const bool body_nonempty = !model_.body().empty();
        if (model_.head() == HeadKind::Pyramid) {
            if (body_nonempty) {
                auto& bw = body_work_.back();
                bw.gcur.setZero(model_.body().back().width(), B);
            }
            for (std::size_t c = 0; c < chain_work_.size(); ++c) {
                auto& chain = model_.pyramid_chains()[c];
                auto& work = chain_work_[c];
                for (std::size_t s = chain.size(); s-- > 0;) {
                    const MatrixU8& cin = s > 0 ? work[s - 1].bits : *body_out_ptr(B);
                    Eigen::MatrixXd* gprev = nullptr;
                    if (s > 0) {
                        work[s - 1].gcur.setZero(chain[s - 1].width(), B);
                        gprev = &work[s - 1].gcur;
                    } else if (body_nonempty) {
                        gprev = &body_work_.back().gcur; // pre-zeroed, sums over chains
                    }
                    backward_stage(chain[s], work[s], cin, B, gprev);
                }
            }
        }
        for (std::size_t s = model_.body().size(); s-- > 0;) {
            const MatrixU8& bin = s > 0 ? body_work_[s - 1].bits : x0_;
            Eigen::MatrixXd* gprev = nullptr;
            if (s > 0) {
                body_work_[s - 1].gcur.setZero(model_.body()[s - 1].width(), B);
                gprev = &body_work_[s - 1].gcur;
            }
            backward_stage(model_.body()[s], body_work_[s], bin, B, gprev);
        }
        return loss;
    }

    /// Adds the spectral gradient into every flagged stage's dU and returns
    /// lambda * sum of the norms (the penalty part of the loss).
    double spectral_penalty() {
        const double lambda = model_.config().lambda;
        double total = 0.0;
        auto apply = [&](Stage& st, StageWork& w) {
            if (!st.spectral) return;
            const auto& S = spectral_matrix(st.layer.fan_in());
            total += lambda * add_spectral_gradient(st.layer.table(), S, lambda, w.dU);
        };
        for (std::size_t s = 0; s < model_.body().size(); ++s)
            apply(model_.body()[s], body_work_[s]);
        for (std::size_t c = 0; c < chain_work_.size(); ++c)
            for (std::size_t s = 0; s < chain_work_[c].size(); ++s)
                apply(model_.pyramid_chains()[c][s], chain_work_[c][s]);
        return total;
    }

  private:
    const MatrixU8* body_out_ptr(std::uint32_t) const {
        return model_.body().empty() ? &x0_ : &body_work_.back().bits;
    }

    void stage_input(const EncodedDataset& data, std::span<const std::uint32_t> batch) {
        const auto B = std::uint32_t(batch.size());
        const std::uint32_t P = model_.input_bits();
        x0_.resize(P, B);
        parallel_columns(B, threads_, [&](std::uint32_t b0, std::uint32_t b1) {
            for (std::uint32_t s = b0; s < b1; ++s) {
                const BitVector& row = data.rows[batch[s]];
                for (std::uint32_t p = 0; p < P; ++p) x0_(p, s) = std::uint8_t(row.get(p));
            }
        });
    }

    void forward_stage(Stage& st, StageWork& w, const MatrixU8& in, std::uint32_t B) {
        st.current_selection(w.sel);
        const std::uint32_t n = st.layer.fan_in();
        const std::uint32_t u = st.layer.size();
        w.bits.resize(u, B);
        w.addr.resize(u, B);
        w.values.resize(u, B);
        const Eigen::MatrixXd& U = st.layer.table();
        const std::uint32_t* sel = w.sel.data();
        parallel_columns(B, threads_, [&](std::uint32_t b0, std::uint32_t b1) {
            for (std::uint32_t s = b0; s < b1; ++s)
                for (std::uint32_t i = 0; i < u; ++i) {
                    std::uint32_t a = 0;
                    const std::uint32_t* pins = sel + std::size_t(i) * n;
                    for (std::uint32_t j = 0; j < n; ++j) a = (a << 1) | in(pins[j], s);
                    const double v = U(a, i);
                    w.addr(i, s) = a;
                    w.values(i, s) = v;
                    w.bits(i, s) = v > 0.0 ? 1 : 0;
                }
        });
    }

    double head_loss_and_grads(const EncodedDataset& data, std::span<const std::uint32_t> batch,
                               std::uint32_t B) {
        const std::uint32_t C = model_.class_count();
        const double tau = model_.tau();
        const double inv_b = 1.0 / double(B);
        logits_.resize(C, B);

        if (model_.head() == HeadKind::Popcount) {
            const auto& head = model_.pop_head();
            const auto& vals = body_work_.back().values;
            for (std::uint32_t s = 0; s < B; ++s)
                for (std::uint32_t c = 0; c < C; ++c) {
                    double sum = 0.0;
                    const std::uint32_t st = head.block_start(c), l = head.block_len(c);
                    for (std::uint32_t i = 0; i < l; ++i) sum += vals(st + i, s);
                    logits_(c, s) = sum / tau;
                }
        } else if (chain_work_.size() == 1) {
            for (std::uint32_t s = 0; s < B; ++s) {
                const double v = chain_work_[0].back().values(0, s) / tau;
                logits_(0, s) = -v;
                logits_(1, s) = v;
            }
        } else {
            for (std::uint32_t s = 0; s < B; ++s)
                for (std::uint32_t c = 0; c < C; ++c)
                    logits_(c, s) = chain_work_[c].back().values(0, s) / tau;
        }

        double loss_sum = 0.0;
        dlogits_.resize(C, B);
        for (std::uint32_t s = 0; s < B; ++s) {
            const std::uint32_t label = data.labels[batch[s]];
            Eigen::VectorXd col = logits_.col(s);
            loss_sum += cross_entropy(col, label);
            dlogits_.col(s) = cross_entropy_grad(col, label) * inv_b;
        }

        if (model_.head() == HeadKind::Popcount) {
            const auto& head = model_.pop_head();
            auto& bw = body_work_.back();
            bw.gcur.setZero(head.width(), B);
            for (std::uint32_t s = 0; s < B; ++s)
                for (std::uint32_t c = 0; c < C; ++c) {
                    const double g = dlogits_(c, s) / tau;
                    const std::uint32_t st = head.block_start(c), l = head.block_len(c);
                    for (std::uint32_t i = 0; i < l; ++i) bw.gcur(st + i, s) += g;
                }
        } else if (chain_work_.size() == 1) {
            auto& cw = chain_work_[0].back();
            cw.gcur.resize(1, B);
            for (std::uint32_t s = 0; s < B; ++s)
                cw.gcur(0, s) = (dlogits_(1, s) - dlogits_(0, s)) / tau;
        } else {
            for (std::uint32_t c = 0; c < C; ++c) {
                auto& cw = chain_work_[c].back();
                cw.gcur.resize(1, B);
                for (std::uint32_t s = 0; s < B; ++s) cw.gcur(0, s) = dlogits_(c, s) / tau;
            }
        }
        return loss_sum * inv_b;
    }

    void backward_stage(Stage& st, StageWork& w, const MatrixU8& in, std::uint32_t B,
                        Eigen::MatrixXd* gprev) {
        const std::uint32_t n = st.layer.fan_in();
        const std::uint32_t u = st.layer.size();
        const std::uint32_t Q = u * n;
        const Eigen::MatrixXd& U = st.layer.table();
        const GradRule rule = model_.config().grad;

        w.dU.setZero(st.layer.entries(), u);
        for (std::uint32_t s = 0; s < B; ++s)
            for (std::uint32_t i = 0; i < u; ++i) w.dU(w.addr(i, s), i) += w.gcur(i, s);

        w.dpins.resize(Q, B);
        if (n <= kMaxMatrixFanIn) {
            const Eigen::MatrixXd& Wg = rule == GradRule::Efd ? efd_weights(n) : fd_weights(n);
            w.AG.noalias() = Wg.transpose() * U;
            parallel_columns(B, threads_, [&](std::uint32_t b0, std::uint32_t b1) {
                for (std::uint32_t s = b0; s < b1; ++s)
                    for (std::uint32_t i = 0; i < u; ++i) {
                        const double g = w.gcur(i, s);
                        const std::uint32_t base = w.addr(i, s) * n;
                        for (std::uint32_t j = 0; j < n; ++j)
                            w.dpins(std::size_t(i) * n + j, s) = g * w.AG(base + j, i);
                    }
            });
        } else {
            // Large fan-in: evaluate the address gradient per sample.
            const std::uint32_t e = st.layer.entries();
            parallel_columns(B, threads_, [&](std::uint32_t b0, std::uint32_t b1) {
                for (std::uint32_t s = b0; s < b1; ++s)
                    for (std::uint32_t i = 0; i < u; ++i) {
                        const double g = w.gcur(i, s);
                        const std::uint32_t a = w.addr(i, s);
                        for (std::uint32_t j = 0; j < n; ++j) {
                            const std::uint32_t mask = 1u << (n - 1 - j);
                            double dA = 0.0;
                            if (rule == GradRule::Efd) {
                                for (std::uint32_t k = 0; k < e; ++k) {
                                    const double sign = (k & mask) ? 1.0 : -1.0;
                                    const int h = std::popcount((k ^ a) & ~mask);
                                    dA += sign * U(k, i) / double(h + 1);
                                }
                            } else {
                                dA = U(a | mask, i) - U(a & ~mask, i);
                            }
                            w.dpins(std::size_t(i) * n + j, s) = g * dA;
                        }
                    }
            });
        }

        if (st.kind == MappingKind::Learnable) {
            w.Sx = in.cast<double>();
            w.Sx = 2.0 * w.Sx.array() - 1.0;
            w.dW.noalias() = w.Sx * w.dpins.transpose();
            if (gprev) {
                st.lm.softmax_sources(w.SM);
                gprev->noalias() += w.SM * w.dpins; // target pre-zeroed
            }
        } else {
            if (gprev) {
                const std::uint32_t* sel = w.sel.data();
                for (std::uint32_t s = 0; s < B; ++s)
                    for (std::uint32_t q = 0; q < Q; ++q) (*gprev)(sel[q], s) += w.dpins(q, s);
            }
        }
    }

    TrainingModel& model_;
    std::uint32_t threads_;
    MatrixU8 x0_;
    std::vector<StageWork> body_work_;
    std::vector<std::vector<StageWork>> chain_work_;
    std::vector<Tensor> tensors_;
    Eigen::MatrixXd logits_, dlogits_;
};

class Optimizer {
  public:
    Optimizer(bool adam, std::size_t tensor_count) : adam_(adam), state_(tensor_count) {}

    void step(std::vector<BatchEngine::Tensor>& tensors, double lr) {
        for (std::size_t i = 0; i < tensors.size(); ++i) {
            Eigen::MatrixXd& p = *tensors[i].param;
            const Eigen::MatrixXd& g = *tensors[i].grad;
            if (!adam_) {
                p.noalias() -= lr * g;
                continue;
            }
            auto& st = state_[i];
            if (st.t == 0) {
                st.m.setZero(p.rows(), p.cols());
                st.v.setZero(p.rows(), p.cols());
            }
            ++st.t;
            st.m = kBeta1 * st.m + (1.0 - kBeta1) * g;
            st.v = kBeta2 * st.v.array() + (1.0 - kBeta2) * g.array().square();
            const double c1 = 1.0 - std::pow(kBeta1, double(st.t));
            const double c2 = 1.0 - std::pow(kBeta2, double(st.t));
            p.array() -= lr * (st.m.array() / c1) / ((st.v.array() / c2).sqrt() + kEps);
        }
    }

  private:
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;

    struct State {
        Eigen::MatrixXd m, v;
        std::uint64_t t = 0;
    };
    bool adam_;
    std::vector<State> state_;
};

double lr_at_epoch(const ModelConfig& config, std::uint32_t epoch) {
    std::uint32_t covered = 0;
    for (const auto& [rate, count] : config.lr) {
        covered += count;
        if (epoch < covered) return rate;
    }
    return config.lr.back().first;
}

void check_data(const TrainingModel& model, const EncodedDataset& d, const char* which) {
    if (d.size() == 0) throw ConfigError(std::string("train: empty ") + which + " set");
    if (d.input_bits != model.input_bits())
        throw InputShapeError(std::string("train: ") + which + " set encodes " +
                              std::to_string(d.input_bits) + " bits, model expects " +
                              std::to_string(model.input_bits()));
    if (d.class_count != model.class_count())
        throw ConfigError(std::string("train: ") + which + " set has " +
                          std::to_string(d.class_count) + " classes, model expects " +
                          std::to_string(model.class_count()));
    for (auto l : d.labels)
        if (l >= model.class_count()) throw InputShapeError("train: label out of range");
}

} // namespace

TrainReport train(TrainingModel& model, const EncodedDataset& train_set,
                  const EncodedDataset& test_set, const TrainOptions& opts) {
    check_data(model, train_set, "train");
    check_data(model, test_set, "test");
    const ModelConfig& config = model.config();

    TrainReport report;
    report.seed = opts.seed;

    if (config.epochs == 0) {
        report.final_test_accuracy = evaluate(model, test_set);
        report.last_epoch_accuracy = report.final_test_accuracy;
        report.best_test_accuracy = report.final_test_accuracy;
        return report;
    }

    const std::uint32_t threads = opts.strict_deterministic ? 1 : std::max(1u, opts.threads);
    BatchEngine engine(model, threads);
    Optimizer optimizer(config.adam, engine.tensors().size());
    Rng order_rng = Rng(opts.seed).fork(1);
    const bool clamp_after_step = model.any_spectral();

    std::vector<std::uint32_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = std::uint32_t(i);

    std::vector<Eigen::MatrixXd> best_snapshot = model.snapshot();
    double best_acc = -1.0;
    std::uint32_t best_epoch = 0;

    for (std::uint32_t epoch = 0; epoch < config.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double lr = lr_at_epoch(config, epoch);
        order_rng.shuffle(order);

        double loss_sum = 0.0;
        for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
            const std::size_t end = std::min(order.size(), begin + config.batch_size);
            std::span<const std::uint32_t> batch(order.data() + begin, end - begin);
            double loss = engine.step(train_set, batch);
            loss += engine.spectral_penalty();
            if (!std::isfinite(loss)) {
                model.restore(best_snapshot);
                throw NumericalDivergence("train: non-finite loss in epoch " +
                                          std::to_string(epoch + 1) +
                                          "; model restored to the best checkpoint (epoch " +
                                          std::to_string(best_epoch) + ")");
            }
            optimizer.step(engine.tensors(), lr);
            if (clamp_after_step) model.clamp_tables();
            loss_sum += loss * double(batch.size());
        }

        const double train_loss = loss_sum / double(train_set.size());
        const double acc = evaluate(model, test_set);
        const auto t1 = std::chrono::steady_clock::now();
        const double secs = std::chrono::duration<double>(t1 - t0).count();

        report.epochs.push_back({epoch + 1, lr, train_loss, acc, secs});
        if (acc > best_acc) {
            best_acc = acc;
            best_epoch = epoch + 1;
            best_snapshot = model.snapshot();
        }
        if (opts.log)
            (*opts.log) << "epoch " << (epoch + 1) << "/" << config.epochs << " lr " << lr
                        << " loss " << train_loss << " test_acc " << acc << " (" << secs << "s)\n";
    }

    report.last_epoch_accuracy = report.epochs.back().test_accuracy;
    report.best_test_accuracy = best_acc;
    report.best_epoch = best_epoch;
    model.restore(best_snapshot);
    report.final_test_accuracy = best_acc;
    return report;
}

} // namespace dwn
