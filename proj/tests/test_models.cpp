#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "hsr/checkpoint.hpp"
#include "hsr/models.hpp"
#include "support.hpp"

using namespace hsr;

namespace {

template <class T>
ad::Ptr<T> rand_image(int h, int w, Rng& rng) {
    auto x = ad::tensor<T>({3, h, w});
    for (auto& v : x->v) v = T(rng.uniform(0.0, 1.0));
    return x;
}

std::vector<Arch> all_archs() {
    return {Arch::edsr, Arch::hrnet, Arch::mstpp, Arch::restormer};
}

// tiny configs that exercise every structural mechanism but run in milliseconds
ModelConfig micro_config(Arch arch) {
    ModelConfig c;
    c.arch = arch;
    c.out_bands = 2;
    c.seed = 5;
    switch (arch) {
        case Arch::edsr:
            c.base_width = 4;
            c.depth = 2;
            break;
        case Arch::hrnet:
            c.base_width = 4;
            c.depth = 1;
            c.levels = 2;
            break;
        case Arch::mstpp:
            c.base_width = 4;
            c.depth = 1;
            c.heads = 2;
            c.ffn_expansion = 2;
            break;
        case Arch::restormer:
            c.base_width = 4;
            c.depth = 1;
            c.levels = 2;
            c.heads = 1;
            c.ffn_expansion = 2;
            break;
    }
    return c;
}

}  // namespace

TEST_CASE("config validation") {
    for (auto arch : all_archs()) CHECK_NOTHROW(validate_config(default_config(arch)));

    ModelConfig bad = default_config(Arch::mstpp);
    bad.base_width = 30;  // not divisible by heads=4
    CHECK_THROWS_AS(validate_config(bad), InvalidConfig);

    ModelConfig zero = default_config(Arch::edsr);
    zero.out_bands = 0;
    CHECK_THROWS_AS(validate_config(zero), InvalidConfig);

    ModelConfig neg = default_config(Arch::hrnet);
    neg.levels = 0;
    CHECK_THROWS_AS(validate_config(neg), InvalidConfig);

    CHECK(arch_from_string("mstpp") == Arch::mstpp);
    CHECK_THROWS_AS(arch_from_string("vgg"), InvalidConfig);
    for (auto arch : all_archs()) CHECK(arch_from_string(to_string(arch)) == arch);
}

TEST_CASE("forward maps 3xHxW to out_bands x H x W, including awkward sizes") {
    Rng rng(11);
    for (auto arch : all_archs()) {
        CAPTURE(to_string(arch));
        Model<float> m(micro_config(arch));
        for (auto [h, w] : {std::pair{8, 8}, std::pair{13, 17}, std::pair{5, 9}}) {
            auto y = m.forward(rand_image<float>(h, w, rng));
            REQUIRE(y->shape.size() == 3);
            CHECK(y->shape[0] == 2);
            CHECK(y->shape[1] == h);
            CHECK(y->shape[2] == w);
            for (float v : y->v) CHECK(std::isfinite(v));
        }
        CHECK_THROWS_AS(m.forward(ad::tensor<float>({4, 8, 8})), ShapeMismatch);
    }
}

TEST_CASE("same seed gives bit-identical models, different seed does not") {
    Rng rng(12);
    for (auto arch : all_archs()) {
        CAPTURE(to_string(arch));
        auto cfg = micro_config(arch);
        Model<float> a(cfg), b(cfg);
        REQUIRE(a.params().size() == b.params().size());
        for (size_t i = 0; i < a.params().size(); ++i) {
            CHECK(a.params()[i].first == b.params()[i].first);
            CHECK(a.params()[i].second->v == b.params()[i].second->v);
        }
        auto x = rand_image<float>(8, 8, rng);
        CHECK(a.forward(x)->v == b.forward(x)->v);

        cfg.seed = 99;
        Model<float> c(cfg);
        bool any_diff = false;
        for (size_t i = 0; i < a.params().size(); ++i)
            if (a.params()[i].second->v != c.params()[i].second->v) any_diff = true;
        CHECK(any_diff);
    }
}

TEST_CASE("parameter counts match closed-form oracles for the default configs") {
    // conv k x k, cin -> cout, grouped: cout*(cin/g)*k*k + cout
    auto conv = [](int cin, int cout, int k, int g = 1) {
        return (long long)cout * (cin / g) * k * k + cout;
    };

    SUBCASE("edsr: head + depth x (2 convs) + tail") {
        long long expect = conv(3, 32, 3) + 8 * 2 * conv(32, 32, 3) + conv(32, 10, 3);
        CHECK(Model<float>(default_config(Arch::edsr)).param_count() == expect);
    }

    SUBCASE("hrnet: per-level stem + blocks, fusion 1x1s, output conv") {
        long long expect = 0;
        for (int k = 0; k < 4; ++k) expect += conv(3 << (2 * k), 16, 3);
        expect += 4 * 2 * 2 * conv(16, 16, 3);  // 4 levels x depth 2 x 2 convs
        expect += 3 * conv(16, 64, 1);
        expect += conv(16, 10, 3);
        CHECK(Model<float>(default_config(Arch::hrnet)).param_count() == expect);
    }

    SUBCASE("mstpp: embed + depth x (norms, per-head qkvo+temp, bias, ffn) + out") {
        const int C = 32, d = C / 4;
        long long block = 2 * 2 * C;                       // two layer norms
        block += 4 * (3 * C * d + d * C + 1);              // wq wk wv wo temp per head
        block += C;                                        // channel bias
        block += conv(C, 2 * C, 1) + conv(2 * C, C, 1);    // ffn
        long long expect = conv(3, C, 3) + 2 * block + conv(C, 10, 3);
        CHECK(Model<float>(default_config(Arch::mstpp)).param_count() == expect);
    }

    SUBCASE("restormer: encoder-decoder with down/up 1x1s and input skip") {
        auto block = [&](int dim, int heads) {
            long long n = 4 * dim;                                   // two layer norms
            n += conv(dim, 3 * dim, 1) + conv(3 * dim, 3 * dim, 3, 3 * dim);  // qkv
            n += heads + conv(dim, dim, 1);                          // temps + attn out
            int e = 2 * dim;
            n += conv(dim, e, 1) + conv(e, e, 3, e);                 // gate branch
            n += conv(dim, e, 1) + conv(e, e, 3, e);                 // body branch
            n += conv(e, dim, 1);
            return n;
        };
        long long expect = conv(3, 16, 3);
        expect += block(16, 1) + block(32, 2) + block(64, 4);        // encoder
        expect += conv(64, 32, 1) + conv(128, 64, 1);                // down
        expect += conv(64, 128, 1) + conv(32, 64, 1);                // up
        expect += block(32, 2) + block(16, 1);                       // decoder
        expect += conv(16, 10, 3) + conv(3, 10, 3);                  // out + skip
        CHECK(Model<float>(default_config(Arch::restormer)).param_count() == expect);
    }
}

TEST_CASE("micro-model gradients agree with finite differences") {
    Rng rng(21);
    for (auto arch : all_archs()) {
        CAPTURE(to_string(arch));
        Model<double> m(micro_config(arch));
        auto x = rand_image<double>(8, 8, rng);
        std::vector<ad::Ptr<double>> params;
        for (auto& [_, t] : m.params()) params.push_back(t);
        // move off the zero-initialized output head so every gradient is live
        for (auto& p : params)
            for (auto& v : p->v) v += rng.uniform(-0.05, 0.05);
        auto fn = [&](const std::vector<ad::Ptr<double>>&) {
            return ad::mean(m.forward(x));
        };
        double err = testsupport::smooth_grad_err(fn, params, 3, 77);
        CHECK(err < 1e-3);
    }
}

TEST_CASE("mstpp attention block is equivariant to spatial permutation") {
    // only per-pixel ops (channel norm/attention/1x1 convs) touch the block, so
    // shuffling pixels before must equal shuffling after
    const int C = 4, H = 3, W = 5, N = H * W;
    nn::ParamStore<float> ps(3);
    nn::MstBlock<float> block("b", C, 2, 2, ps);

    Rng rng(4);
    auto in = ad::tensor<float>({C, H, W});
    for (auto& v : in->v) v = float(rng.uniform(-1.0, 1.0));

    std::vector<size_t> perm(N);
    std::iota(perm.begin(), perm.end(), size_t(0));
    rng.shuffle(perm.begin(), perm.end());

    auto permuted = ad::tensor<float>({C, H, W});
    for (int c = 0; c < C; ++c)
        for (int p = 0; p < N; ++p) permuted->v[c * N + p] = in->v[c * N + perm[p]];

    auto y = block(in);
    auto yp = block(permuted);
    for (int c = 0; c < C; ++c)
        for (int p = 0; p < N; ++p)
            CHECK(yp->v[c * N + p] ==
                  doctest::Approx(y->v[c * N + perm[p]]).epsilon(1e-4));
}

TEST_CASE("checkpoint round trip is exact") {
    namespace fs = std::filesystem;
    auto path = (fs::temp_directory_path() / "hsr_ckpt_test.bin").string();
    for (auto arch : all_archs()) {
        CAPTURE(to_string(arch));
        Model<float> m(micro_config(arch));
        // nudge params away from init so the round trip is not trivially equal
        for (auto& [_, t] : m.params())
            for (auto& v : t->v) v += 0.125f;
        save_checkpoint(m, path);
        auto back = load_checkpoint<float>(path);
        REQUIRE(back.params().size() == m.params().size());
        for (size_t i = 0; i < m.params().size(); ++i) {
            CHECK(back.params()[i].first == m.params()[i].first);
            CHECK(back.params()[i].second->v == m.params()[i].second->v);
        }
        CHECK(config_text(back.config()) == config_text(m.config()));
        // serialized bytes are reproducible
        CHECK(serialize_checkpoint(back) == serialize_checkpoint(m));
    }
    fs::remove(path);
}

TEST_CASE("checkpoint integrity and architecture checks") {
    Model<float> m(micro_config(Arch::edsr));
    auto buf = serialize_checkpoint(m);

    CHECK_THROWS_AS(deserialize_checkpoint<float>(buf, "hrnet"), ArchMismatch);
    CHECK_NOTHROW(deserialize_checkpoint<float>(buf, "edsr"));

    SUBCASE("any single-byte corruption is detected") {
        Rng rng(31);
        for (int rep = 0; rep < 200; ++rep) {
            auto bad = buf;
            size_t pos = rng.below(bad.size());
            bad[pos] = char(bad[pos] ^ (1 + rng.below(255)));
            CHECK_THROWS_AS(deserialize_checkpoint<float>(bad), CorruptCheckpoint);
        }
    }
    SUBCASE("truncation is detected") {
        for (size_t keep : {size_t(0), size_t(3), buf.size() / 2, buf.size() - 1})
            CHECK_THROWS_AS(deserialize_checkpoint<float>(buf.substr(0, keep)),
                            CorruptCheckpoint);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_checkpoint<float>("/nonexistent_dir/ckpt.bin"), IoFailure);
    }
}
