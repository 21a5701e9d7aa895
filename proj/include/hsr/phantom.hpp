#pragma once

// Synthetic egg-phantom dataset: elliptical foreground with a smooth 3-basis
// spectrum on a dark background, class-dependent coefficient shift, and RGB
// derived from the coefficients through a fixed full-rank mixing matrix so the
// RGB -> spectrum mapping is learnable.

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "hsr/common.hpp"
#include "hsr/hypercube.hpp"
#include "hsr/segmentation.hpp"
#include "hsr/training.hpp"

namespace hsr {

struct PhantomConfig {
    int n_samples = 102;
    int height = 64;
    int width = 72;
    int bands = 31;
    double wl_min = 400.0, wl_max = 1000.0;
    double dead_fraction = 0.09;
    double noise_sigma = 0.01;
    uint64_t seed = 42;
};

inline void validate_phantom_config(const PhantomConfig& c) {
    if (c.n_samples < 1 || c.height < 8 || c.width < 8)
        throw InvalidConfig("phantom needs >= 1 sample and >= 8x8 images");
    if (c.bands < 10) throw InvalidConfig("phantom needs >= 10 bands");
    if (!(c.dead_fraction > 0) || c.dead_fraction > 0.5)
        throw InvalidConfig("dead_fraction must be in (0, 0.5]");
    if (c.noise_sigma < 0) throw InvalidConfig("noise_sigma must be >= 0");
    if (!(c.wl_max > c.wl_min)) throw InvalidConfig("wavelength range is empty");
}

struct PhantomSample {
    Hypercube cube;  // values in [1e-3, 1]
    RgbImage rgb;
    Mask truth_mask;
    int label = 0;  // 1 = dead embryo
};

namespace phantom_detail {

constexpr double kBackground = 0.05;
constexpr std::array<double, 3> kBasisCenter = {480.0, 680.0, 860.0};
constexpr double kBasisSigma = 70.0;
// fixed full-rank mixing from basis coefficients to RGB
constexpr double kMix[3][3] = {{0.70, 0.15, 0.10},
                               {0.20, 0.65, 0.15},
                               {0.10, 0.25, 0.70}};

inline double basis(int k, double nm) {
    double d = (nm - kBasisCenter[size_t(k)]) / kBasisSigma;
    return std::exp(-d * d);
}

}  // namespace phantom_detail

/// Number of dead-class samples implied by the config.
inline int phantom_dead_count(const PhantomConfig& c) {
    int n = int(std::lround(c.n_samples * c.dead_fraction));
    return std::max(1, n);
}

/// Deterministic per-sample class labels: dead count from dead_fraction,
/// positions shuffled by the config seed.
inline std::vector<int> phantom_labels(const PhantomConfig& c) {
    validate_phantom_config(c);
    std::vector<int> labels(size_t(c.n_samples), 0);
    for (int i = 0; i < phantom_dead_count(c); ++i) labels[size_t(i)] = 1;
    Rng rng(c.seed ^ 0x6c6162656c73ull);  // independent of the pixel streams
    rng.shuffle(labels.begin(), labels.end());
    return labels;
}

/// Generates one phantom from its own seeded stream.
inline PhantomSample make_phantom(const PhantomConfig& c, int label, uint64_t sample_seed) {
    using namespace phantom_detail;
    validate_phantom_config(c);
    Rng rng(sample_seed);
    const int H = c.height, W = c.width, B = c.bands;

    std::vector<double> wl(static_cast<size_t>(B));
    for (int b = 0; b < B; ++b)
        wl[size_t(b)] = c.wl_min + (c.wl_max - c.wl_min) * b / double(B - 1);

    // jittered ellipse well inside the frame
    double cy = H * rng.uniform(0.45, 0.55), cx = W * rng.uniform(0.45, 0.55);
    double ry = H * rng.uniform(0.28, 0.36), rx = W * rng.uniform(0.28, 0.36);

    // per-sample basis coefficients; the dead class shifts a2 upward
    std::array<double, 3> a;
    a[0] = rng.uniform(0.35, 0.55);
    a[1] = std::clamp((label ? 0.75 : 0.45) + 0.05 * rng.normal(), 0.10, 0.90);
    a[2] = rng.uniform(0.30, 0.50);

    PhantomSample s;
    s.label = label;
    s.cube.height = H;
    s.cube.width = W;
    s.cube.bands = B;
    s.cube.wavelengths = wl;
    s.cube.data.assign(size_t(H) * W * B, float(kBackground));
    s.rgb.height = H;
    s.rgb.width = W;
    s.rgb.data.assign(size_t(H) * W * 3, 0.f);
    s.truth_mask.height = H;
    s.truth_mask.width = W;
    s.truth_mask.bits.assign(size_t(H) * W, 0);

    for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) {
            double dy = (h - cy) / ry, dx = (w - cx) / rx;
            double d2 = dy * dy + dx * dx;
            bool inside = d2 < 1.0;
            double shade = inside ? 1.0 - 0.25 * d2 : 0.0;  // gentle radial falloff
            if (inside) {
                s.truth_mask.bits[size_t(h) * W + w] = 1;
                ++s.truth_mask.count;
                for (int b = 0; b < B; ++b) {
                    double v = kBackground;
                    for (int k = 0; k < 3; ++k) v += a[size_t(k)] * shade * basis(k, wl[size_t(b)]);
                    s.cube.at(h, w, b) = float(std::clamp(v, 1e-3, 1.0));
                }
            }
            for (int ch = 0; ch < 3; ++ch) {
                double v = c.noise_sigma * rng.normal();
                for (int k = 0; k < 3; ++k) v += kMix[ch][k] * a[size_t(k)] * shade;
                s.rgb.at(h, w, ch) = float(std::clamp(v, 0.0, 1.0));
            }
        }
    s.cube.value_range = {1e-3f, 1.f};
    return s;
}

/// All samples of a dataset, reproducible from the config alone.
inline std::vector<PhantomSample> make_phantom_dataset(const PhantomConfig& c) {
    auto labels = phantom_labels(c);
    Rng root(c.seed);
    std::vector<PhantomSample> out;
    out.reserve(size_t(c.n_samples));
    for (int i = 0; i < c.n_samples; ++i)
        out.push_back(make_phantom(c, labels[size_t(i)], root.next_u64()));
    return out;
}

inline std::string phantom_sample_id(int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "sample_%03d", index);
    return buf;
}

/// Writes cubes/, rgb/, and manifest.csv (sample_id,label,split) under root.
inline void write_phantom_dataset(const PhantomConfig& c, const std::string& root_dir) {
    namespace fs = std::filesystem;
    auto samples = make_phantom_dataset(c);
    auto split = split_dataset(size_t(c.n_samples), c.seed);
    std::vector<std::string> split_of(size_t(c.n_samples));
    for (size_t i : split.train) split_of[i] = "train";
    for (size_t i : split.val) split_of[i] = "val";
    for (size_t i : split.test) split_of[i] = "test";

    std::error_code ec;
    fs::create_directories(fs::path(root_dir) / "cubes", ec);
    fs::create_directories(fs::path(root_dir) / "rgb", ec);
    if (ec) throw IoFailure("cannot create dataset directories under " + root_dir);

    std::ofstream manifest(fs::path(root_dir) / "manifest.csv");
    if (!manifest) throw IoFailure("cannot write manifest in " + root_dir);
    manifest << "sample_id,label,split\n";
    for (int i = 0; i < c.n_samples; ++i) {
        auto id = phantom_sample_id(i);
        auto cube_base = (fs::path(root_dir) / "cubes" / id).string();
        write_cube(samples[size_t(i)].cube, Interleave::bil, cube_base + ".hdr",
                   cube_base + ".raw");
        write_rgb_raw(samples[size_t(i)].rgb, (fs::path(root_dir) / "rgb" / (id + ".pfr")).string());
        manifest << id << "," << samples[size_t(i)].label << "," << split_of[size_t(i)] << "\n";
    }
    if (!manifest) throw IoFailure("short write to manifest in " + root_dir);
}

struct ManifestRow {
    std::string sample_id;
    int label = 0;
    std::string split;
};

inline std::vector<ManifestRow> read_manifest(const std::string& root_dir) {
    std::ifstream in(std::filesystem::path(root_dir) / "manifest.csv");
    if (!in) throw IoFailure("cannot open manifest in " + root_dir);
    std::string line;
    std::getline(in, line);
    if (line != "sample_id,label,split") throw MalformedHeader("bad manifest header: " + line);
    std::vector<ManifestRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto c1 = line.find(','), c2 = line.find(',', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos)
            throw MalformedHeader("bad manifest row: " + line);
        ManifestRow r;
        r.sample_id = line.substr(0, c1);
        r.label = std::stoi(line.substr(c1 + 1, c2 - c1 - 1));
        r.split = line.substr(c2 + 1);
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace hsr
