#pragma once

// Dataset splitting, patch sampling, Adam, and the training loop.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "hsr/autodiff.hpp"
#include "hsr/checkpoint.hpp"
#include "hsr/common.hpp"
#include "hsr/metrics.hpp"
#include "hsr/models.hpp"

namespace hsr {

struct Split {
    std::vector<size_t> train, val, test;
};

/// Shuffles 0..n-1 with the given seed and carves off floor(n/10) samples each
/// for validation and test; the remainder trains.
inline Split split_dataset(size_t n, uint64_t seed) {
    size_t n_val = n / 10, n_test = n / 10;
    if (n_val == 0 || n_test == 0)
        throw TooFewItems("need at least 10 samples to split, got " + std::to_string(n));
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t(0));
    Rng rng(seed);
    rng.shuffle(idx.begin(), idx.end());
    Split s;
    s.val.assign(idx.begin(), idx.begin() + n_val);
    s.test.assign(idx.begin() + n_val, idx.begin() + n_val + n_test);
    s.train.assign(idx.begin() + n_val + n_test, idx.end());
    if (s.train.empty()) throw TooFewItems("split left no training samples");
    return s;
}

/// Uniform choice among top-left corners lying on the stride grid such that a
/// patch x patch window fits.
inline std::pair<int, int> sample_patch(int height, int width, int patch, int stride, Rng& rng) {
    if (patch < 1 || stride < 1) throw InvalidConfig("patch and stride must be positive");
    if (patch > height || patch > width)
        throw PatchTooLarge(std::to_string(patch) + " patch in " + std::to_string(height) +
                            "x" + std::to_string(width) + " image");
    auto n_of = [&](int dim) { return (dim - patch) / stride + 1; };
    int r = int(rng.below(uint64_t(n_of(height)))) * stride;
    int c = int(rng.below(uint64_t(n_of(width)))) * stride;
    return {r, c};
}

namespace detail {

/// Plain value crop of a CHW tensor (no graph edge; used to build patch inputs).
template <class T>
ad::Ptr<T> window(const ad::Ptr<T>& x, int r, int c, int h, int w) {
    const int C = x->shape[0], W = x->shape[2];
    auto out = ad::tensor<T>({C, h, w});
    for (int ch = 0; ch < C; ++ch)
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j)
                out->v[(ch * h + i) * w + j] = x->v[(ch * x->shape[1] + r + i) * W + c + j];
    return out;
}

}  // namespace detail

inline double lr_at(double lr0, double gamma, int epoch) {
    return lr0 * std::pow(gamma, epoch);
}

/// Adam with bias correction. State vectors are keyed by position, so the
/// same parameter list must be passed to every step.
template <class T>
class Adam {
public:
    Adam(double lr0, double beta1, double beta2, double eps = 1e-8)
        : lr_(lr0), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }
    long long steps() const { return t_; }

    void step(const std::vector<ad::Ptr<T>>& params) {
        if (m_.empty()) {
            for (auto& p : params) {
                m_.emplace_back(p->numel(), 0.0);
                v_.emplace_back(p->numel(), 0.0);
            }
        }
        if (m_.size() != params.size()) throw ShapeMismatch("optimizer bound to a different parameter list");
        ++t_;
        double bc1 = 1.0 - std::pow(beta1_, double(t_));
        double bc2 = 1.0 - std::pow(beta2_, double(t_));
        for (size_t i = 0; i < params.size(); ++i) {
            auto& p = *params[i];
            p.ensure_grad();
            for (size_t j = 0; j < p.v.size(); ++j) {
                double g = double(p.g[j]);
                m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g;
                v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g * g;
                double mhat = m_[i][j] / bc1;
                double vhat = v_[i][j] / bc2;
                p.v[j] = T(double(p.v[j]) - lr_ * mhat / (std::sqrt(vhat) + eps_));
            }
        }
    }

private:
    double lr_, beta1_, beta2_, eps_;
    long long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

template <class T>
struct TrainSample {
    ad::Ptr<T> rgb;   // 3 x H x W
    ad::Ptr<T> cube;  // B x H x W
};

struct TrainConfig {
    int epochs = 200;
    int iters_per_epoch = 1000;
    int batch_size = 1;
    double lr0 = 1e-4;
    double lr_gamma = 0.98;
    double beta1 = 0.9;  // 0.5 for hrnet
    double beta2 = 0.99;
    double adam_eps = 1e-8;
    int patch = 128;
    int stride = 8;
    uint64_t seed = 0;
};

inline double default_beta1(Arch arch) { return arch == Arch::hrnet ? 0.5 : 0.9; }

/// Scaled-down defaults sized for the synthetic desk dataset.
inline TrainConfig desk_train_config() {
    TrainConfig c;
    c.epochs = 30;
    c.iters_per_epoch = 50;
    c.patch = 32;
    return c;
}

inline void validate_train_config(const TrainConfig& c) {
    if (c.epochs < 1 || c.iters_per_epoch < 0 || c.batch_size < 1 || c.patch < 1 || c.stride < 1)
        throw InvalidConfig("epochs/batch/patch/stride must be positive, iterations non-negative");
    if (!(c.lr0 > 0)) throw InvalidConfig("lr0 must be positive");
    if (!(c.lr_gamma > 0) || c.lr_gamma > 1) throw InvalidConfig("lr_decay_gamma must be in (0, 1]");
    if (!(c.beta1 > 0) || c.beta1 >= 1 || !(c.beta2 > 0) || c.beta2 >= 1)
        throw InvalidConfig("betas must be in (0, 1)");
}

struct EpochStats {
    int epoch = 0;
    double train_mrae = 0;
    double val_mrae = 0;
    double lr = 0;
};

struct TrainResult {
    std::vector<EpochStats> history;
    double best_val = 0;
    int best_epoch = -1;
};

inline void write_history_csv(const std::vector<EpochStats>& history, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoFailure("cannot open " + path + " for writing");
    out << "epoch,train_mrae,val_mrae,lr\n";
    char line[128];
    for (const auto& e : history) {
        std::snprintf(line, sizeof line, "%d,%.9g,%.9g,%.9g\n", e.epoch, e.train_mrae,
                      e.val_mrae, e.lr);
        out << line;
    }
    if (!out) throw IoFailure("short write to " + path);
}

/// Full-image mean MRAE of the model over the given sample indices.
template <class T>
double evaluate_mrae(const Model<T>& model, const std::vector<TrainSample<T>>& samples,
                     const std::vector<size_t>& indices) {
    if (indices.empty()) throw TooFewItems("no samples to evaluate");
    double acc = 0;
    for (size_t i : indices) {
        auto pred = model.forward(samples[i].rgb);
        std::vector<float> pv(pred->v.begin(), pred->v.end());
        std::vector<float> gv(samples[i].cube->v.begin(), samples[i].cube->v.end());
        acc += mrae(pv, gv);
    }
    return acc / double(indices.size());
}

/// Patch-based MRAE training with per-epoch exponential LR decay and
/// best-validation parameter restore. Throws NonFiniteLoss if a step produces
/// a non-finite loss.
template <class T>
TrainResult train(Model<T>& model, const std::vector<TrainSample<T>>& samples,
                  const Split& split, const TrainConfig& cfg,
                  const std::string& checkpoint_path = "") {
    validate_train_config(cfg);
    if (split.train.empty() || split.val.empty()) throw TooFewItems("empty train or val split");
    for (size_t i : split.train) {
        const auto& s = samples[i];
        if (s.rgb->shape[1] != s.cube->shape[1] || s.rgb->shape[2] != s.cube->shape[2])
            throw ShapeMismatch("rgb/cube spatial size mismatch in sample " + std::to_string(i));
    }

    std::vector<ad::Ptr<T>> params;
    for (auto& [_, t] : model.params()) params.push_back(t);
    Adam<T> opt(cfg.lr0, cfg.beta1, cfg.beta2, cfg.adam_eps);
    Rng rng(cfg.seed);

    TrainResult res;
    std::vector<std::vector<T>> best_params;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        opt.set_lr(lr_at(cfg.lr0, cfg.lr_gamma, epoch));
        double train_acc = 0;
        for (int it = 0; it < cfg.iters_per_epoch; ++it) {
            const auto& s = samples[split.train[rng.below(split.train.size())]];
            auto [r, c] = sample_patch(s.rgb->shape[1], s.rgb->shape[2], cfg.patch,
                                       cfg.stride, rng);
            auto x = detail::window(s.rgb, r, c, cfg.patch, cfg.patch);
            auto y = detail::window(s.cube, r, c, cfg.patch, cfg.patch);
            model.zero_grad();
            auto loss = ad::mrae(model.forward(x), y);
            double lv = double(loss->v[0]);
            if (!std::isfinite(lv))
                throw NonFiniteLoss("epoch " + std::to_string(epoch) + " iter " +
                                    std::to_string(it));
            ad::backward(loss);
            opt.step(params);
            train_acc += lv;
        }
        EpochStats st;
        st.epoch = epoch;
        st.train_mrae = cfg.iters_per_epoch ? train_acc / double(cfg.iters_per_epoch) : 0.0;
        st.val_mrae = evaluate_mrae(model, samples, split.val);
        st.lr = opt.lr();
        res.history.push_back(st);
        if (res.best_epoch < 0 || st.val_mrae < res.best_val) {
            res.best_val = st.val_mrae;
            res.best_epoch = epoch;
            best_params.clear();
            for (auto& p : params) best_params.push_back(p->v);
            if (!checkpoint_path.empty()) save_checkpoint(model, checkpoint_path);
        }
    }
    for (size_t i = 0; i < params.size(); ++i) params[i]->v = best_params[i];
    return res;
}

}  // namespace hsr
