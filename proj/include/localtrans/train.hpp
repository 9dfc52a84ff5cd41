#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "localtrans/network.hpp"

namespace localtrans {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    Adam(ParameterStore& store, AdamConfig cfg) : store_(&store), cfg_(cfg) {
        m_.resize(store.size());
        v_.resize(store.size());
        for (std::size_t i = 0; i < store.size(); ++i) {
            m_[i].reset(store.at(i).value.shape());
            v_[i].reset(store.at(i).value.shape());
        }
    }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
        const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
        for (std::size_t i = 0; i < store_->size(); ++i) {
            Parameter& p = store_->at(i);
            if (!p.trainable) continue;
            Tensor& m = m_[i];
            Tensor& v = v_[i];
            for (std::size_t j = 0; j < p.value.size(); ++j) {
                const double g = p.grad[j];
                m[j] = static_cast<scalar>(cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g);
                v[j] = static_cast<scalar>(cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g);
                const double mhat = m[j] / bc1;
                const double vhat = v[j] / bc2;
                p.value[j] -= static_cast<scalar>(cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
            }
        }
    }

    long steps_taken() const { return t_; }

    void save(const std::string& path) const {
        std::map<std::string, Tensor> m;
        for (std::size_t i = 0; i < store_->size(); ++i) {
            m.emplace("adam.m." + store_->at(i).name, m_[i].clone());
            m.emplace("adam.v." + store_->at(i).name, v_[i].clone());
        }
        m.emplace("adam.t", Tensor::scalar_value(static_cast<scalar>(t_)));
        ckpt::save(path, m);
    }

    void load(const std::string& path) {
        std::map<std::string, Tensor> m = ckpt::load(path);
        for (std::size_t i = 0; i < store_->size(); ++i) {
            auto im = m.find("adam.m." + store_->at(i).name);
            auto iv = m.find("adam.v." + store_->at(i).name);
            if (im == m.end() || iv == m.end())
                throw DataError(path + ": optimizer state missing for " + store_->at(i).name);
            m_[i] = std::move(im->second);
            v_[i] = std::move(iv->second);
        }
        auto it = m.find("adam.t");
        if (it == m.end()) throw DataError(path + ": optimizer state missing step count");
        t_ = static_cast<long>(it->second[0]);
    }

private:
    ParameterStore* store_;
    AdamConfig cfg_;
    std::vector<Tensor> m_, v_;
    long t_ = 0;
};

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalStats {
    double mean_corner_error = 0;
    double median_corner_error = 0;
    double mean_psnr = 0;   // warp(I_U, H_hat) vs I_T
    double mean_ssim = 0;
    int count = 0;
};

inline double identity_corner_error(const SamplePair& s) {
    return corner_error(Homography::identity(), s.gt_h, s.gt_offsets.base);
}

inline EvalStats evaluate(LocalTransModel& model, const std::vector<const SamplePair*>& samples,
                          bool with_image_metrics) {
    EvalStats st;
    std::vector<double> errs;
    errs.reserve(samples.size());
    double psnr_acc = 0, ssim_acc = 0;
    int finite_psnr = 0;
    for (const SamplePair* s : samples) {
        CascadeForward fwd = model.infer(s->target, s->unaligned);
        errs.push_back(corner_error(fwd.h_hat, s->gt_h, s->gt_offsets.base));
        if (with_image_metrics) {
            Tensor aligned = warp(s->unaligned, fwd.h_hat);
            const double p = psnr(aligned, s->target);
            if (std::isfinite(p)) {
                psnr_acc += p;
                ++finite_psnr;
            }
            ssim_acc += ssim(aligned, s->target);
        }
    }
    st.count = static_cast<int>(errs.size());
    if (st.count == 0) return st;
    st.mean_corner_error = std::accumulate(errs.begin(), errs.end(), 0.0) / st.count;
    std::sort(errs.begin(), errs.end());
    st.median_corner_error = (st.count % 2) ? errs[static_cast<std::size_t>(st.count / 2)]
                                            : 0.5 * (errs[static_cast<std::size_t>(st.count / 2 - 1)] +
                                                     errs[static_cast<std::size_t>(st.count / 2)]);
    if (with_image_metrics) {
        st.mean_psnr = finite_psnr ? psnr_acc / finite_psnr : std::numeric_limits<double>::infinity();
        st.mean_ssim = ssim_acc / st.count;
    }
    return st;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainOptions {
    int steps = 2000;
    int batch = 8;
    double lr = 1e-4;
    std::uint64_t seed = 1;
    int overfit = 0;          // >0: train on the first N samples, no validation split
    double val_fraction = 0.1;
    int eval_every = 50;      // steps between corner-error probes (0 = off)
    double target_px = -1;    // early stop when the probe set reaches this error
    std::string out_dir;      // checkpoints + metrics (empty: keep in memory only)
    std::string resume;       // checkpoint prefix to resume from
    bool deterministic = false;
};

struct TrainResult {
    int steps_run = 0;
    double final_loss = 0;
    std::vector<double> step_losses;
    std::vector<std::pair<int, double>> epoch_losses; // (epoch, mean loss)
    EvalStats train_stats;
    EvalStats val_stats;
    double elapsed_seconds = 0;
    bool reached_target = false;
};

namespace detail {

inline void diagnose_non_finite(LocalTransModel& model, int step) {
    std::string group = "loss";
    for (std::size_t i = 0; i < model.params().size(); ++i) {
        const Parameter& p = model.params().at(i);
        for (std::size_t j = 0; j < p.value.size(); ++j)
            if (!std::isfinite(static_cast<double>(p.value[j])) ||
                !std::isfinite(static_cast<double>(p.grad[j]))) {
                group = LocalTransModel::param_group(p.name);
                break;
            }
    }
    throw NumericError("training diverged: non-finite loss at step " + std::to_string(step) +
                       " (parameter group: " + group + ")");
}

} // namespace detail

inline TrainResult train_model(LocalTransModel& model, const std::vector<SamplePair>& dataset,
                               const TrainOptions& opts, std::ostream* log = nullptr) {
    if (dataset.empty()) throw DataError("train: empty dataset");
    ThreadPool::set_deterministic(opts.deterministic);

    std::vector<const SamplePair*> train_set, val_set;
    if (opts.overfit > 0) {
        const int n = std::min<int>(opts.overfit, static_cast<int>(dataset.size()));
        for (int i = 0; i < n; ++i) train_set.push_back(&dataset[static_cast<std::size_t>(i)]);
    } else {
        const int n_val = static_cast<int>(std::lround(opts.val_fraction * dataset.size()));
        for (std::size_t i = 0; i < dataset.size(); ++i) {
            if (static_cast<int>(i) < static_cast<int>(dataset.size()) - n_val)
                train_set.push_back(&dataset[i]);
            else
                val_set.push_back(&dataset[i]);
        }
    }
    if (train_set.empty()) throw DataError("train: no training samples after split");

    Adam adam(model.params(), AdamConfig{opts.lr, 0.9, 0.999, 1e-8});
    if (!opts.resume.empty()) {
        model.params().load(opts.resume + ".ltck");
        adam.load(opts.resume + ".optim");
    }

    const int batch = std::max(1, std::min<int>(opts.batch, static_cast<int>(train_set.size())));
    std::mt19937_64 shuffle_rng(splitmix64(opts.seed ^ 0x747261696Eull));
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = order.size(); // forces an initial shuffle

    TrainResult res;
    res.step_losses.reserve(static_cast<std::size_t>(opts.steps));
    const auto t0 = std::chrono::steady_clock::now();
    double epoch_loss_acc = 0;
    int epoch_step_count = 0;
    int epoch = 0;
    double best_probe = std::numeric_limits<double>::infinity();

    for (int step = 1; step <= opts.steps; ++step) {
        std::vector<const Tensor*> targets, unaligned;
        std::vector<const Homography*> gts;
        for (int b = 0; b < batch; ++b) {
            if (cursor == order.size()) {
                std::shuffle(order.begin(), order.end(), shuffle_rng);
                cursor = 0;
                if (epoch_step_count > 0) {
                    res.epoch_losses.emplace_back(epoch, epoch_loss_acc / epoch_step_count);
                    if (log)
                        *log << "epoch " << epoch << " mean_loss " << epoch_loss_acc / epoch_step_count
                             << "\n";
                }
                epoch_loss_acc = 0;
                epoch_step_count = 0;
                ++epoch;
            }
            const SamplePair* s = train_set[order[cursor++]];
            targets.push_back(&s->target);
            unaligned.push_back(&s->unaligned);
            gts.push_back(&s->gt_h);
        }

        Tape tape;
        auto bound = model.bind(tape);
        BatchForward fwd = model.forward_batch(tape, bound, targets, unaligned, BNMode::train);
        Value loss = model.loss(tape, fwd, gts);
        const double loss_v = static_cast<double>(loss.t()[0]);
        model.params().zero_grads();
        tape.backward(loss);
        model.collect_grads(tape);
        tape.clear();
        if (!std::isfinite(loss_v)) detail::diagnose_non_finite(model, step);
        adam.step();

        res.step_losses.push_back(loss_v);
        res.final_loss = loss_v;
        res.steps_run = step;
        epoch_loss_acc += loss_v;
        ++epoch_step_count;

        if (opts.eval_every > 0 && (step % opts.eval_every == 0 || step == opts.steps)) {
            EvalStats probe = evaluate(model, train_set, /*with_image_metrics=*/false);
            if (log)
                *log << "step " << step << " loss " << loss_v << " train_corner_px "
                     << probe.mean_corner_error << "\n";
            if (!opts.out_dir.empty() && probe.mean_corner_error < best_probe) {
                best_probe = probe.mean_corner_error;
                model.save(opts.out_dir + "/best");
            }
            if (opts.target_px > 0 && probe.mean_corner_error < opts.target_px) {
                res.reached_target = true;
                res.train_stats = probe;
                break;
            }
        }
    }
    if (epoch_step_count > 0) res.epoch_losses.emplace_back(epoch, epoch_loss_acc / epoch_step_count);

    if (!res.reached_target) res.train_stats = evaluate(model, train_set, false);
    if (!val_set.empty()) res.val_stats = evaluate(model, val_set, false);
    if (!opts.out_dir.empty()) {
        model.save(opts.out_dir + "/model");
        adam.save(opts.out_dir + "/model.optim");
        if (best_probe == std::numeric_limits<double>::infinity()) model.save(opts.out_dir + "/best");
    }
    res.elapsed_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

} // namespace localtrans
