#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "hsr/phantom.hpp"

using namespace hsr;

namespace {

PhantomConfig small_config(int n = 12, uint64_t seed = 42) {
    PhantomConfig c;
    c.n_samples = n;
    c.height = 40;
    c.width = 44;
    c.seed = seed;
    return c;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

double mask_iou(const Mask& a, const Mask& b) {
    REQUIRE(a.bits.size() == b.bits.size());
    size_t inter = 0, uni = 0;
    for (size_t i = 0; i < a.bits.size(); ++i) {
        inter += a.bits[i] && b.bits[i];
        uni += a.bits[i] || b.bits[i];
    }
    return uni ? double(inter) / double(uni) : 1.0;
}

}  // namespace

TEST_CASE("config validation") {
    CHECK_NOTHROW(validate_phantom_config(PhantomConfig{}));
    PhantomConfig c;
    c.bands = 9;
    CHECK_THROWS_AS(validate_phantom_config(c), InvalidConfig);
    c = PhantomConfig{};
    c.dead_fraction = 0.6;
    CHECK_THROWS_AS(validate_phantom_config(c), InvalidConfig);
    c = PhantomConfig{};
    c.noise_sigma = -0.1;
    CHECK_THROWS_AS(validate_phantom_config(c), InvalidConfig);
}

TEST_CASE("default dataset shape mirrors 102 samples with 9 dead") {
    PhantomConfig c;
    CHECK(c.n_samples == 102);
    CHECK(phantom_dead_count(c) == 9);
    auto labels = phantom_labels(c);
    CHECK(labels.size() == 102);
    CHECK(std::count(labels.begin(), labels.end(), 1) == 9);
    CHECK(phantom_labels(c) == labels);  // deterministic
}

TEST_CASE("phantom cubes are clamped, wavelength-ordered, and cover 700 nm") {
    auto data = make_phantom_dataset(small_config());
    for (const auto& s : data) {
        for (float v : s.cube.data) {
            CHECK(v >= 1e-3f);
            CHECK(v <= 1.f);
        }
        for (size_t b = 1; b < s.cube.wavelengths.size(); ++b)
            CHECK(s.cube.wavelengths[b] > s.cube.wavelengths[b - 1]);
        CHECK(s.cube.wavelengths[size_t(nearest_band(s.cube, 700.0))] == 700.0);
        for (float v : s.rgb.data) {
            CHECK(v >= 0.f);
            CHECK(v <= 1.f);
        }
        CHECK(s.truth_mask.count > 0);
    }
}

TEST_CASE("threshold mask at 700 nm recovers the generator ellipse") {
    auto data = make_phantom_dataset(small_config(20, 7));
    for (const auto& s : data) {
        auto norm = normalize(s.cube);
        auto mask = threshold_mask(norm, 700.0, 0.02);
        CHECK(mask_iou(mask, s.truth_mask) >= 0.99);
        // background pixels sit below the threshold after normalization
        for (int h = 0; h < norm.height; ++h)
            for (int w = 0; w < norm.width; ++w)
                if (!s.truth_mask.bits[size_t(h) * norm.width + w])
                    CHECK(norm.at(h, w, nearest_band(norm, 700.0)) <= 0.02f);
    }
}

TEST_CASE("class mean spectra separate by far more than the rgb noise floor") {
    PhantomConfig c = small_config(30, 9);
    auto data = make_phantom_dataset(c);
    int peak = -1;
    std::vector<double> live, dead;
    for (const auto& s : data) {
        if (peak < 0) peak = nearest_band(s.cube, 680.0);
        auto sp = mean_spectrum(s.cube, s.truth_mask);
        (s.label ? dead : live).push_back(sp.values[size_t(peak)]);
    }
    REQUIRE(!live.empty());
    REQUIRE(!dead.empty());
    auto mean_of = [](const std::vector<double>& v) {
        double acc = 0;
        for (double x : v) acc += x;
        return acc / double(v.size());
    };
    CHECK(mean_of(dead) - mean_of(live) > 5 * c.noise_sigma);
}

TEST_CASE("same config writes a byte-identical dataset") {
    namespace fs = std::filesystem;
    auto c = small_config();
    auto d1 = fs::temp_directory_path() / "hsr_phantom_a";
    auto d2 = fs::temp_directory_path() / "hsr_phantom_b";
    fs::remove_all(d1);
    fs::remove_all(d2);
    write_phantom_dataset(c, d1.string());
    write_phantom_dataset(c, d2.string());

    size_t files = 0;
    for (auto& entry : fs::recursive_directory_iterator(d1)) {
        if (!entry.is_regular_file()) continue;
        ++files;
        auto rel = fs::relative(entry.path(), d1);
        CHECK(slurp(entry.path()) == slurp(d2 / rel));
    }
    CHECK(files == size_t(3 * c.n_samples + 1));  // hdr + raw + pfr per sample, manifest

    auto rows = read_manifest(d1.string());
    REQUIRE(rows.size() == size_t(c.n_samples));
    int train = 0, val = 0, test = 0;
    for (auto& r : rows) {
        if (r.split == "train") ++train;
        if (r.split == "val") ++val;
        if (r.split == "test") ++test;
    }
    CHECK(train == 10);
    CHECK(val == 1);
    CHECK(test == 1);

    // cubes on disk round-trip to the in-memory dataset
    auto data = make_phantom_dataset(c);
    auto cube = read_cube((d1 / "cubes" / "sample_000.hdr").string(),
                          (d1 / "cubes" / "sample_000.raw").string());
    CHECK(cube.data == data[0].cube.data);
    auto rgb = read_rgb_raw((d1 / "rgb" / "sample_000.pfr").string());
    CHECK(rgb.data == data[0].rgb.data);

    fs::remove_all(d1);
    fs::remove_all(d2);
}

TEST_CASE("different seeds give different data") {
    auto a = make_phantom_dataset(small_config(4, 1));
    auto b = make_phantom_dataset(small_config(4, 2));
    bool diff = false;
    for (size_t i = 0; i < a.size(); ++i)
        if (a[i].cube.data != b[i].cube.data) diff = true;
    CHECK(diff);
}
