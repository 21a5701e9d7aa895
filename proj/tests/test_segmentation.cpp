#include "doctest.h"
#include "hsr/segmentation.hpp"

using namespace hsr;

namespace {

Hypercube plane_cube(int H, int W, const std::vector<float>& plane700) {
    // two-band cube whose second band sits at 700 nm
    Hypercube c;
    c.height = H;
    c.width = W;
    c.bands = 2;
    c.wavelengths = {500, 700};
    c.data.resize(c.size());
    for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) {
            c.at(h, w, 0) = 0.5f;
            c.at(h, w, 1) = plane700[size_t(h) * W + w];
        }
    return c;
}

Mask make_mask(int H, int W, const std::vector<uint8_t>& bits) {
    Mask m;
    m.height = H;
    m.width = W;
    m.bits = bits;
    for (auto b : bits) m.count += b;
    return m;
}

}  // namespace

TEST_CASE("threshold_mask picks the disk, leaves the background") {
    const int H = 8, W = 8;
    std::vector<float> plane(H * W, 0.01f);
    std::vector<uint8_t> disk(H * W, 0);
    for (int h = 2; h < 6; ++h)
        for (int w = 2; w < 6; ++w) {
            plane[h * W + w] = 0.5f;
            disk[h * W + w] = 1;
        }
    auto mask = threshold_mask(plane_cube(H, W, plane), 700, 0.02);
    CHECK(mask.bits == disk);
    CHECK(mask.count == 16);
}

TEST_CASE("threshold_mask throws when nothing clears the threshold") {
    std::vector<float> plane(16, 0.01f);
    CHECK_THROWS_AS(threshold_mask(plane_cube(4, 4, plane), 700, 0.02), EmptyMask);
}

TEST_CASE("threshold_mask matches the per-pixel oracle on random planes") {
    Rng rng(23);
    const int H = 13, W = 9;
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<float> plane(H * W);
        for (auto& v : plane) v = float(rng.uniform());
        double thr = rng.uniform(0.1, 0.9);
        auto mask = threshold_mask(plane_cube(H, W, plane), 700, thr);
        for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w)
                CHECK(mask.at(h, w) == (plane[size_t(h) * W + w] > thr));
    }
}

TEST_CASE("shrinking the threshold never shrinks the mask") {
    Rng rng(31);
    const int H = 10, W = 10;
    std::vector<float> plane(H * W);
    for (auto& v : plane) v = float(rng.uniform());
    auto cube = plane_cube(H, W, plane);
    auto loose = threshold_mask(cube, 700, 0.2);
    auto tight = threshold_mask(cube, 700, 0.6);
    CHECK(loose.count >= tight.count);
    for (size_t i = 0; i < loose.bits.size(); ++i)
        if (tight.bits[i]) CHECK(loose.bits[i]);
}

TEST_CASE("largest_component keeps the blob, drops the speck") {
    const int H = 10, W = 12;
    std::vector<uint8_t> bits(H * W, 0);
    for (int h = 1; h < 6; ++h)
        for (int w = 1; w < 11; ++w) bits[h * W + w] = 1;  // 50 px blob
    bits[8 * W + 2] = bits[8 * W + 3] = 1;                 // 2 px speck
    auto out = largest_component(make_mask(H, W, bits));
    CHECK(out.count == 50);
    CHECK_FALSE(out.at(8, 2));
    CHECK(out.at(3, 5));

    // single blob unchanged
    std::vector<uint8_t> solo(H * W, 0);
    for (int w = 4; w < 8; ++w) solo[5 * W + w] = 1;
    auto kept = largest_component(make_mask(H, W, solo));
    CHECK(kept.bits == solo);
}

TEST_CASE("largest_component tie goes to the earlier row-major region") {
    const int H = 5, W = 7;
    std::vector<uint8_t> bits(H * W, 0);
    // two 3-pixel regions; region A starts at (0,1), region B at (3,4)
    bits[0 * W + 1] = bits[1 * W + 1] = bits[2 * W + 1] = 1;
    bits[3 * W + 4] = bits[3 * W + 5] = bits[4 * W + 4] = 1;
    auto out = largest_component(make_mask(H, W, bits));
    CHECK(out.count == 3);
    CHECK(out.at(0, 1));
    CHECK_FALSE(out.at(3, 4));
}

TEST_CASE("largest_component agrees with a flood-fill oracle on random masks") {
    Rng rng(47);
    const int H = 12, W = 15;
    for (int rep = 0; rep < 8; ++rep) {
        std::vector<uint8_t> bits(H * W, 0);
        for (auto& b : bits) b = rng.uniform() < 0.45 ? 1 : 0;
        bits[0] = 1;  // guarantee non-empty
        auto out = largest_component(make_mask(H, W, bits));

        // oracle: label every component by BFS, pick max size with earliest seed
        std::vector<int> label(H * W, -1);
        std::vector<size_t> sizes;
        std::vector<size_t> seeds;
        for (int p = 0; p < H * W; ++p) {
            if (!bits[p] || label[p] >= 0) continue;
            int id = int(sizes.size());
            std::vector<int> queue{p};
            label[p] = id;
            size_t sz = 0;
            while (!queue.empty()) {
                int q = queue.back();
                queue.pop_back();
                ++sz;
                int qh = q / W, qw = q % W;
                auto visit = [&](int nh, int nw) {
                    if (nh < 0 || nh >= H || nw < 0 || nw >= W) return;
                    int np = nh * W + nw;
                    if (bits[np] && label[np] < 0) {
                        label[np] = id;
                        queue.push_back(np);
                    }
                };
                visit(qh - 1, qw);
                visit(qh + 1, qw);
                visit(qh, qw - 1);
                visit(qh, qw + 1);
            }
            sizes.push_back(sz);
            seeds.push_back(size_t(p));
        }
        int best = 0;
        for (int i = 1; i < int(sizes.size()); ++i)
            if (sizes[i] > sizes[best] || (sizes[i] == sizes[best] && seeds[i] < seeds[best]))
                best = i;
        for (int p = 0; p < H * W; ++p)
            CHECK(bool(out.bits[p]) == (label[p] == best));
    }
}

TEST_CASE("mean_spectrum basics") {
    Hypercube c;
    c.height = 1;
    c.width = 2;
    c.bands = 2;
    c.wavelengths = {500, 700};
    c.data = {0, 1, 1, 0};  // spectra [0,1] and [1,0]
    auto m = make_mask(1, 2, {1, 1});
    auto s = mean_spectrum(c, m);
    CHECK(s.values[0] == doctest::Approx(0.5));
    CHECK(s.values[1] == doctest::Approx(0.5));

    // single pixel -> its own spectrum
    auto one = make_mask(1, 2, {0, 1});
    auto s1 = mean_spectrum(c, one);
    CHECK(s1.values[0] == doctest::Approx(1.0));
    CHECK(s1.values[1] == doctest::Approx(0.0));

    Mask wrong = make_mask(2, 2, {1, 0, 0, 0});
    CHECK_THROWS_AS(mean_spectrum(c, wrong), DimensionMismatch);
}

TEST_CASE("mean_spectrum matches the double-loop oracle within 1e-12") {
    Rng rng(53);
    const int H = 9, W = 7, B = 5;
    Hypercube c;
    c.height = H;
    c.width = W;
    c.bands = B;
    for (int b = 0; b < B; ++b) c.wavelengths.push_back(400 + 10 * b);
    c.data.resize(c.size());
    for (auto& v : c.data) v = float(rng.uniform());
    std::vector<uint8_t> bits(H * W, 0);
    for (auto& b : bits) b = rng.uniform() < 0.5 ? 1 : 0;
    bits[5] = 1;
    auto mask = make_mask(H, W, bits);
    auto s = mean_spectrum(c, mask);
    for (int b = 0; b < B; ++b) {
        double acc = 0;
        size_t n = 0;
        double lo = 1e300, hi = -1e300;
        for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w)
                if (mask.at(h, w)) {
                    double v = c.at(h, w, b);
                    acc += v;
                    ++n;
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                }
        CHECK(s.values[b] == doctest::Approx(acc / double(n)).epsilon(1e-12));
        CHECK(s.values[b] >= lo);
        CHECK(s.values[b] <= hi);
    }
}

TEST_CASE("mean_spectrum of a constant cube is that constant for any mask") {
    Hypercube c;
    c.height = 4;
    c.width = 4;
    c.bands = 3;
    c.wavelengths = {500, 600, 700};
    c.data.assign(c.size(), 0.375f);
    Rng rng(59);
    for (int rep = 0; rep < 5; ++rep) {
        std::vector<uint8_t> bits(16, 0);
        for (auto& b : bits) b = rng.uniform() < 0.5 ? 1 : 0;
        bits[rep] = 1;
        auto s = mean_spectrum(c, make_mask(4, 4, bits));
        for (double v : s.values) CHECK(v == doctest::Approx(0.375));
    }
}

TEST_CASE("spectra table CSV round-trips") {
    std::vector<Spectrum> spectra(2);
    spectra[0] = {"egg_000", 0, {520, 583}, {0.123456789, 0.5}};
    spectra[1] = {"egg_001", 1, {520, 583}, {0.25, 0.75}};
    auto path = (std::filesystem::temp_directory_path() / "hsr_spectra.csv").string();
    write_spectra_csv(spectra, path);

    std::ifstream f(path);
    std::string header;
    std::getline(f, header);
    CHECK(header == "sample_id,label,w520,w583");

    auto back = read_spectra_csv(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].sample_id == "egg_000");
    CHECK(back[0].label == 0);
    CHECK(back[1].label == 1);
    CHECK(back[0].values[0] == doctest::Approx(0.123456789).epsilon(1e-9));
    CHECK(back[0].wavelengths == std::vector<double>{520, 583});
}
