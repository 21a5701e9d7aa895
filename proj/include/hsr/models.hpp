#pragma once

// The four reconstruction architectures, built from autodiff ops. All map a
// 3xHxW image to an out_bands x H x W cube and are differentiable end to end.

#include <map>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "hsr/autodiff.hpp"
#include "hsr/common.hpp"

namespace hsr {

enum class Arch { hrnet, mstpp, restormer, edsr };

inline std::string to_string(Arch a) {
    switch (a) {
        case Arch::hrnet: return "hrnet";
        case Arch::mstpp: return "mstpp";
        case Arch::restormer: return "restormer";
        case Arch::edsr: return "edsr";
    }
    return "?";
}

inline Arch arch_from_string(const std::string& s) {
    if (s == "hrnet") return Arch::hrnet;
    if (s == "mstpp") return Arch::mstpp;
    if (s == "restormer") return Arch::restormer;
    if (s == "edsr") return Arch::edsr;
    throw InvalidConfig("unknown architecture '" + s + "'");
}

struct ModelConfig {
    Arch arch = Arch::edsr;
    int out_bands = 10;
    int base_width = 32;
    int depth = 8;          // residual blocks (edsr), blocks per stream (hrnet),
                            // attention blocks (mstpp), blocks per level (restormer)
    int levels = 1;         // hierarchy count (hrnet, restormer)
    int heads = 1;          // attention heads at the base level
    int ffn_expansion = 2;
    uint64_t seed = 0;
};

/// Toy-scale defaults; trainable on CPU in minutes while exercising every
/// structural mechanism of each architecture.
inline ModelConfig default_config(Arch arch) {
    ModelConfig c;
    c.arch = arch;
    switch (arch) {
        case Arch::edsr:
            c.base_width = 32;
            c.depth = 8;
            c.levels = 1;
            c.heads = 1;
            break;
        case Arch::hrnet:
            c.base_width = 16;
            c.depth = 2;
            c.levels = 4;
            c.heads = 1;
            break;
        case Arch::mstpp:
            c.base_width = 32;
            c.depth = 2;
            c.levels = 1;
            c.heads = 4;
            c.ffn_expansion = 2;
            break;
        case Arch::restormer:
            c.base_width = 16;  // dims 16/32/64 across levels
            c.depth = 1;
            c.levels = 3;
            c.heads = 1;  // 1/2/4 across levels
            c.ffn_expansion = 2;
            break;
    }
    return c;
}

inline void validate_config(const ModelConfig& c) {
    if (c.out_bands < 1) throw InvalidConfig("out_bands must be >= 1");
    if (c.base_width < 1 || c.depth < 1 || c.levels < 1 || c.heads < 1 || c.ffn_expansion < 1)
        throw InvalidConfig("all size parameters must be >= 1");
    if ((c.arch == Arch::mstpp || c.arch == Arch::restormer) && c.base_width % c.heads != 0)
        throw InvalidConfig("base_width " + std::to_string(c.base_width) +
                            " not divisible by heads " + std::to_string(c.heads));
}

namespace nn {

using ad::Ptr;

/// Registers named parameter tensors with deterministic initialization:
/// He-uniform for conv kernels and projections, constants for the rest.
/// Initialization order is the registration order, so a fixed seed gives
/// bit-identical parameters.
template <class T>
struct ParamStore {
    explicit ParamStore(uint64_t seed) : rng(seed) {}

    Rng rng;
    std::vector<std::pair<std::string, Ptr<T>>> list;

    Ptr<T> he_uniform(const std::string& name, std::vector<int> shape, int fan_in) {
        auto t = ad::tensor<T>(std::move(shape), true);
        double limit = std::sqrt(6.0 / double(fan_in));
        for (auto& v : t->v) v = T(rng.uniform(-limit, limit));
        add(name, t);
        return t;
    }

    Ptr<T> constant(const std::string& name, std::vector<int> shape, double value) {
        auto t = ad::tensor<T>(std::move(shape), true);
        for (auto& v : t->v) v = T(value);
        add(name, t);
        return t;
    }

private:
    void add(const std::string& name, const Ptr<T>& t) {
        for (auto& [n, _] : list)
            if (n == name) throw InvalidConfig("duplicate parameter name " + name);
        list.emplace_back(name, t);
    }
};

template <class T>
struct Conv {
    Ptr<T> w, b;
    int stride = 1, pad = 0, groups = 1;
    Ptr<T> operator()(const Ptr<T>& x) const { return ad::conv2d(x, w, b, stride, pad, groups); }
};

template <class T>
Conv<T> make_conv(ParamStore<T>& ps, const std::string& name, int cin, int cout, int k,
                  int groups = 1, bool bias = true) {
    Conv<T> c;
    int cig = cin / groups;
    c.w = ps.he_uniform(name + ".w", {cout, cig, k, k}, cig * k * k);
    if (bias) c.b = ps.constant(name + ".b", {cout}, 0.0);
    c.pad = k / 2;
    c.groups = groups;
    return c;
}

/// Output heads start at zero so every network's initial prediction is zero
/// and early training is dominated by the (nearly linear) head regression.
template <class T>
Conv<T> make_output_conv(ParamStore<T>& ps, const std::string& name, int cin, int cout, int k) {
    Conv<T> c;
    c.w = ps.constant(name + ".w", {cout, cin, k, k}, 0.0);
    c.b = ps.constant(name + ".b", {cout}, 0.0);
    c.pad = k / 2;
    return c;
}

template <class T>
struct LayerNormChan {
    Ptr<T> gamma, beta;
    Ptr<T> operator()(const Ptr<T>& x) const { return ad::layer_norm(x, gamma, beta, 0); }
};

template <class T>
LayerNormChan<T> make_ln(ParamStore<T>& ps, const std::string& name, int c) {
    return {ps.constant(name + ".gamma", {c}, 1.0), ps.constant(name + ".beta", {c}, 0.0)};
}

template <class T>
Ptr<T> to_tokens(const Ptr<T>& x) {  // CHW -> (HW x C)
    const int C = x->shape[0], H = x->shape[1], W = x->shape[2];
    return ad::transpose(ad::reshape(x, {C, H * W}));
}

template <class T>
Ptr<T> from_tokens(const Ptr<T>& t, int C, int H, int W) {  // (HW x C) -> CHW
    return ad::reshape(ad::transpose(t), {C, H, W});
}

/// Self-attention across the channel dimension: per head, Q/K/V are
/// (HW x d) token projections, the (d x d) attention matrix compares channels
/// with each other, and a learnable temperature reweights it before softmax.
/// Spatial positions only enter through the inner products, so permuting them
/// permutes the output identically.
template <class T>
struct ChannelAttention {
    int heads = 1;
    std::vector<Ptr<T>> temp;  // one scalar per head

    /// q, k, v: (HW x C) token matrices; returns (HW x C)
    Ptr<T> operator()(const Ptr<T>& q, const Ptr<T>& k, const Ptr<T>& v) const {
        const int C = q->shape[1];
        const int d = C / heads;
        std::vector<Ptr<T>> outs;
        for (int h = 0; h < heads; ++h) {
            auto qh = head_cols(q, h, d);
            auto kh = head_cols(k, h, d);
            auto vh = head_cols(v, h, d);
            auto scores = ad::mul(ad::matmul(ad::transpose(qh), kh), temp[h]);  // d x d
            auto attn = ad::softmax(scores, 1);
            outs.push_back(ad::matmul(vh, ad::transpose(attn)));  // HW x d
        }
        return cols_concat(outs);
    }

private:
    static Ptr<T> head_cols(const Ptr<T>& m, int h, int d) {
        // column slice via CHW machinery: (N x C) -> C x N x 1 -> slice -> back
        const int N = m->shape[0], C = m->shape[1];
        auto chw = ad::reshape(ad::transpose(m), {C, N, 1});
        return ad::transpose(ad::reshape(ad::slice_channels(chw, h * d, d), {d, N}));
    }
    static Ptr<T> cols_concat(const std::vector<Ptr<T>>& parts) {
        const int N = parts[0]->shape[0];
        std::vector<Ptr<T>> chw;
        for (const auto& p : parts)
            chw.push_back(ad::reshape(ad::transpose(p), {p->shape[1], N, 1}));
        auto cat = ad::concat_channels(chw);
        return ad::transpose(ad::reshape(cat, {cat->shape[0], N}));
    }
};

// ---------------------------------------------------------------------------
// EDSR: head conv, residual blocks without normalization, tail conv
// ---------------------------------------------------------------------------

template <class T>
struct EdsrNet {
    static constexpr double kResidualScale = 0.1;  // stabilizes the no-norm stack
    Conv<T> head, tail;
    std::vector<std::pair<Conv<T>, Conv<T>>> blocks;

    EdsrNet() = default;
    EdsrNet(const ModelConfig& c, ParamStore<T>& ps) {
        head = make_conv(ps, "head", 3, c.base_width, 3);
        for (int d = 0; d < c.depth; ++d) {
            auto name = "block" + std::to_string(d);
            blocks.emplace_back(make_conv(ps, name + ".conv1", c.base_width, c.base_width, 3),
                                make_conv(ps, name + ".conv2", c.base_width, c.base_width, 3));
        }
        tail = make_output_conv(ps, "tail", c.base_width, c.out_bands, 3);
    }

    Ptr<T> operator()(const Ptr<T>& x) const {
        auto h = head(x);
        for (const auto& [c1, c2] : blocks)
            h = ad::add(h, ad::scale(c2(ad::relu(c1(h))), kResidualScale));
        return tail(h);
    }
};

// ---------------------------------------------------------------------------
// HRNet-style hierarchical regressor: parallel streams at 1/2^k resolution
// via pixel_unshuffle, residual blocks per stream, learned bottom-up fusion
// through 1x1 conv + pixel_shuffle
// ---------------------------------------------------------------------------

template <class T>
struct HrNet {
    int levels = 0;
    std::vector<Conv<T>> stems;                              // per level
    std::vector<std::vector<std::pair<Conv<T>, Conv<T>>>> blocks;  // per level
    std::vector<Conv<T>> fuse_up;  // level k+1 -> k, 1x1 conv W -> 4W
    Conv<T> out;

    HrNet() = default;
    HrNet(const ModelConfig& c, ParamStore<T>& ps) : levels(c.levels) {
        const int W = c.base_width;
        for (int k = 0; k < levels; ++k) {
            int cin = 3 << (2 * k);  // 3 * 4^k channels after k unshuffles
            auto lv = "level" + std::to_string(k);
            stems.push_back(make_conv(ps, lv + ".stem", cin, W, 3));
            blocks.emplace_back();
            for (int d = 0; d < c.depth; ++d) {
                auto name = lv + ".block" + std::to_string(d);
                blocks.back().emplace_back(make_conv(ps, name + ".conv1", W, W, 3),
                                           make_conv(ps, name + ".conv2", W, W, 3));
            }
        }
        for (int k = 0; k + 1 < levels; ++k)
            fuse_up.push_back(
                make_conv(ps, "fuse" + std::to_string(k) + ".up", W, 4 * W, 1));
        out = make_output_conv(ps, "out", W, c.out_bands, 3);
    }

    Ptr<T> operator()(const Ptr<T>& x) const {
        std::vector<Ptr<T>> streams;
        auto cur = x;
        for (int k = 0; k < levels; ++k) {
            auto h = stems[k](cur);
            for (const auto& [c1, c2] : blocks[k]) h = ad::add(h, c2(ad::relu(c1(h))));
            streams.push_back(h);
            if (k + 1 < levels) cur = ad::pixel_unshuffle(cur, 2);
        }
        auto fused = streams[levels - 1];
        for (int k = levels - 2; k >= 0; --k)
            fused = ad::add(streams[k], ad::pixel_shuffle(fuse_up[k](fused), 2));
        return out(fused);
    }
};

// ---------------------------------------------------------------------------
// MST++-style single-stage spectral-wise transformer
// ---------------------------------------------------------------------------

template <class T>
struct MstBlock {
    int dim, heads;
    LayerNormChan<T> ln1, ln2;
    std::vector<Ptr<T>> wq, wk, wv, wo;  // per head, C x d and d x C
    ChannelAttention<T> attn;
    Ptr<T> chan_bias;  // learnable additive channel bias after attention
    Conv<T> ffn1, ffn2;

    MstBlock(const std::string& name, int dim_, int heads_, int ffn_expansion,
             ParamStore<T>& ps)
        : dim(dim_), heads(heads_) {
        const int d = dim / heads;
        ln1 = make_ln(ps, name + ".ln1", dim);
        ln2 = make_ln(ps, name + ".ln2", dim);
        attn.heads = heads;
        for (int h = 0; h < heads; ++h) {
            auto hn = name + ".head" + std::to_string(h);
            wq.push_back(ps.he_uniform(hn + ".wq", {dim, d}, dim));
            wk.push_back(ps.he_uniform(hn + ".wk", {dim, d}, dim));
            wv.push_back(ps.he_uniform(hn + ".wv", {dim, d}, dim));
            wo.push_back(ps.he_uniform(hn + ".wo", {d, dim}, d));
            attn.temp.push_back(ps.constant(hn + ".temp", {1}, 1.0));
        }
        chan_bias = ps.constant(name + ".chan_bias", {dim}, 0.0);
        ffn1 = make_conv(ps, name + ".ffn1", dim, dim * ffn_expansion, 1);
        ffn2 = make_conv(ps, name + ".ffn2", dim * ffn_expansion, dim, 1);
    }

    Ptr<T> operator()(const Ptr<T>& x) const {
        const int C = x->shape[0], H = x->shape[1], W = x->shape[2];
        auto t = to_tokens(ln1(x));
        Ptr<T> acc;
        for (int h = 0; h < heads; ++h) {
            auto qh = ad::matmul(t, wq[h]);
            auto kh = ad::matmul(t, wk[h]);
            auto vh = ad::matmul(t, wv[h]);
            auto scores = ad::mul(ad::matmul(ad::transpose(qh), kh), attn.temp[h]);
            auto a = ad::softmax(scores, 1);
            auto oh = ad::matmul(ad::matmul(vh, ad::transpose(a)), wo[h]);  // HW x C
            acc = acc ? ad::add(acc, oh) : oh;
        }
        auto attended = ad::add_channel_bias(from_tokens(acc, C, H, W), chan_bias);
        auto y = ad::add(x, attended);
        auto f = ffn2(ad::gelu(ffn1(ln2(y))));
        return ad::add(y, f);
    }
};

template <class T>
struct MstNet {
    Conv<T> embed, out;
    std::vector<MstBlock<T>> blocks_;

    MstNet() = default;
    MstNet(const ModelConfig& c, ParamStore<T>& ps) {
        embed = make_conv(ps, "embed", 3, c.base_width, 3);
        for (int d = 0; d < c.depth; ++d)
            blocks_.emplace_back("block" + std::to_string(d), c.base_width, c.heads,
                                 c.ffn_expansion, ps);
        out = make_output_conv(ps, "out", c.base_width, c.out_bands, 3);
    }

    Ptr<T> operator()(const Ptr<T>& x) const {
        auto h = embed(x);
        for (const auto& b : blocks_) h = b(h);
        return out(h);
    }
};

// ---------------------------------------------------------------------------
// Restormer-style encoder-decoder with multi-Dconv-head transposed attention
// and gated feed-forward blocks
// ---------------------------------------------------------------------------

template <class T>
struct RestormerBlock {
    int dim, heads;
    LayerNormChan<T> ln1, ln2;
    Conv<T> qkv_point, qkv_depth, attn_out;
    ChannelAttention<T> attn;
    Conv<T> gate_point, gate_depth, body_point, body_depth, ffn_out;

    RestormerBlock(const std::string& name, int dim_, int heads_, int ffn_expansion,
                   ParamStore<T>& ps)
        : dim(dim_), heads(heads_) {
        ln1 = make_ln(ps, name + ".ln1", dim);
        ln2 = make_ln(ps, name + ".ln2", dim);
        qkv_point = make_conv(ps, name + ".qkv_point", dim, 3 * dim, 1);
        qkv_depth = make_conv(ps, name + ".qkv_depth", 3 * dim, 3 * dim, 3, 3 * dim);
        attn.heads = heads;
        for (int h = 0; h < heads; ++h)
            attn.temp.push_back(ps.constant(name + ".temp" + std::to_string(h), {1}, 1.0));
        attn_out = make_conv(ps, name + ".attn_out", dim, dim, 1);
        const int e = dim * ffn_expansion;
        gate_point = make_conv(ps, name + ".gate_point", dim, e, 1);
        gate_depth = make_conv(ps, name + ".gate_depth", e, e, 3, e);
        body_point = make_conv(ps, name + ".body_point", dim, e, 1);
        body_depth = make_conv(ps, name + ".body_depth", e, e, 3, e);
        ffn_out = make_conv(ps, name + ".ffn_out", e, dim, 1);
    }

    Ptr<T> operator()(const Ptr<T>& x) const {
        const int C = dim, H = x->shape[1], W = x->shape[2];
        auto qkv = qkv_depth(qkv_point(ln1(x)));
        auto q = to_tokens(ad::slice_channels(qkv, 0, C));
        auto k = to_tokens(ad::slice_channels(qkv, C, C));
        auto v = to_tokens(ad::slice_channels(qkv, 2 * C, C));
        auto a = from_tokens(attn(q, k, v), C, H, W);
        auto y = ad::add(x, attn_out(a));

        auto z = ln2(y);
        auto gate = ad::gelu(gate_depth(gate_point(z)));
        auto body = body_depth(body_point(z));
        return ad::add(y, ffn_out(ad::mul(gate, body)));
    }
};

template <class T>
struct RestormerNet {
    int levels = 0;
    Conv<T> shallow, out, input_skip;
    std::vector<std::vector<RestormerBlock<T>>> enc, dec;  // dec has levels-1 entries
    std::vector<Conv<T>> down, up;

    RestormerNet() = default;
    RestormerNet(const ModelConfig& c, ParamStore<T>& ps) : levels(c.levels) {
        auto dim_at = [&](int k) { return c.base_width << k; };
        auto heads_at = [&](int k) { return c.heads << k; };
        shallow = make_conv(ps, "shallow", 3, c.base_width, 3);
        enc.resize(levels);
        for (int k = 0; k < levels; ++k)
            for (int d = 0; d < c.depth; ++d)
                enc[k].emplace_back("enc" + std::to_string(k) + ".block" + std::to_string(d),
                                    dim_at(k), heads_at(k), c.ffn_expansion, ps);
        for (int k = 0; k + 1 < levels; ++k)
            down.push_back(make_conv(ps, "down" + std::to_string(k), 4 * dim_at(k),
                                     dim_at(k + 1), 1));
        for (int k = levels - 2; k >= 0; --k)
            up.push_back(make_conv(ps, "up" + std::to_string(k), dim_at(k + 1),
                                   4 * dim_at(k), 1));
        dec.resize(levels - 1);
        for (int k = levels - 2; k >= 0; --k)
            for (int d = 0; d < c.depth; ++d)
                dec[k].emplace_back("dec" + std::to_string(k) + ".block" + std::to_string(d),
                                    dim_at(k), heads_at(k), c.ffn_expansion, ps);
        out = make_output_conv(ps, "out", c.base_width, c.out_bands, 3);
        input_skip = make_output_conv(ps, "input_skip", 3, c.out_bands, 3);
    }

    Ptr<T> operator()(const Ptr<T>& x) const {
        std::vector<Ptr<T>> skips;
        auto h = shallow(x);
        for (int k = 0; k < levels; ++k) {
            for (const auto& b : enc[k]) h = b(h);
            if (k + 1 < levels) {
                skips.push_back(h);
                h = down[k](ad::pixel_unshuffle(h, 2));
            }
        }
        for (int k = levels - 2; k >= 0; --k) {
            h = ad::pixel_shuffle(up[levels - 2 - k](h), 2);
            h = ad::add(h, skips[k]);
            for (const auto& b : dec[k]) h = b(h);
        }
        return ad::add(out(h), input_skip(x));
    }
};

}  // namespace nn

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

template <class T = float>
class Model {
public:
    explicit Model(const ModelConfig& config) : config_(config) {
        validate_config(config);
        nn::ParamStore<T> ps(config.seed);
        switch (config.arch) {
            case Arch::edsr: net_.template emplace<nn::EdsrNet<T>>(config, ps); break;
            case Arch::hrnet: net_.template emplace<nn::HrNet<T>>(config, ps); break;
            case Arch::mstpp: net_.template emplace<nn::MstNet<T>>(config, ps); break;
            case Arch::restormer: net_.template emplace<nn::RestormerNet<T>>(config, ps); break;
        }
        params_ = std::move(ps.list);
    }

    const ModelConfig& config() const { return config_; }
    const std::vector<std::pair<std::string, ad::Ptr<T>>>& params() const { return params_; }

    ad::Ptr<T> param(const std::string& name) const {
        for (auto& [n, t] : params_)
            if (n == name) return t;
        throw InvalidConfig("no parameter named " + name);
    }

    long long param_count() const {
        long long n = 0;
        for (auto& [_, t] : params_) n += (long long)t->numel();
        return n;
    }

    /// Spatial divisor the architecture requires of its inputs.
    int spatial_divisor() const {
        if (config_.arch == Arch::hrnet || config_.arch == Arch::restormer)
            return 1 << (config_.levels - 1);
        return 1;
    }

    /// Forward pass. Inputs whose spatial dims do not satisfy the divisor are
    /// reflect-padded on the bottom/right and the output is cropped back.
    ad::Ptr<T> forward(const ad::Ptr<T>& rgb) const {
        if (rgb->shape.size() != 3 || rgb->shape[0] != 3)
            throw ShapeMismatch("model input must be 3xHxW");
        const int H = rgb->shape[1], W = rgb->shape[2];
        const int div = spatial_divisor();
        const int ph = (div - H % div) % div, pw = (div - W % div) % div;
        auto x = (ph || pw) ? ad::reflect_pad2d(rgb, ph, pw) : rgb;
        auto y = std::visit([&](const auto& net) { return net(x); }, net_);
        if (ph || pw) y = ad::crop2d(y, H, W);
        return y;
    }

    void zero_grad() const {
        for (auto& [_, t] : params_) t->zero_grad();
    }

private:
    ModelConfig config_;
    std::vector<std::pair<std::string, ad::Ptr<T>>> params_;
    std::variant<nn::EdsrNet<T>, nn::HrNet<T>, nn::MstNet<T>, nn::RestormerNet<T>> net_;
};

}  // namespace hsr
