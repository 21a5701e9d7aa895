#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "hsr/common.hpp"
#include "hsr/hypercube.hpp"

namespace hsr {

struct Mask {
    int height = 0;
    int width = 0;
    std::vector<uint8_t> bits;  // H*W, row-major
    size_t count = 0;

    bool at(int h, int w) const { return bits[size_t(h) * width + w] != 0; }
    void set(int h, int w, bool v) {
        auto& cell = bits[size_t(h) * width + w];
        if (cell != uint8_t(v)) count += v ? 1 : -1;
        cell = uint8_t(v);
    }
};

struct Spectrum {
    std::string sample_id;
    int label = -1;  // -1 when unlabeled
    std::vector<double> wavelengths;
    std::vector<double> values;
};

/// Foreground = pixels whose intensity at the band nearest ref_nm is strictly
/// above the threshold. The cube must be normalized to [0,1].
inline Mask threshold_mask(const Hypercube& cube, double ref_nm = 700.0, double threshold = 0.02) {
    if (!is_normalized(cube)) throw NotNormalized("threshold_mask requires a normalized cube");
    int band = nearest_band(cube, ref_nm);
    Mask m;
    m.height = cube.height;
    m.width = cube.width;
    m.bits.assign(size_t(m.height) * m.width, 0);
    for (int h = 0; h < cube.height; ++h)
        for (int w = 0; w < cube.width; ++w)
            if (cube.at(h, w, band) > threshold) {
                m.bits[size_t(h) * m.width + w] = 1;
                ++m.count;
            }
    if (m.count == 0)
        throw EmptyMask("no pixel above " + std::to_string(threshold) + " at " +
                        std::to_string(ref_nm) + " nm");
    return m;
}

/// Keep only the largest 4-connected region; size ties go to the region whose
/// first pixel comes earlier in row-major order (that is the first region the
/// scan reaches, since strict '>' never replaces an equal-sized earlier one).
inline Mask largest_component(const Mask& mask) {
    const int H = mask.height, W = mask.width;
    std::vector<int32_t> comp(size_t(H) * W, -1);
    std::vector<size_t> sizes;
    std::vector<size_t> stack;
    for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) {
            size_t p = size_t(h) * W + w;
            if (!mask.bits[p] || comp[p] >= 0) continue;
            int32_t id = int32_t(sizes.size());
            size_t sz = 0;
            stack.push_back(p);
            comp[p] = id;
            while (!stack.empty()) {
                size_t q = stack.back();
                stack.pop_back();
                ++sz;
                int qh = int(q / W), qw = int(q % W);
                const int dh[4] = {-1, 1, 0, 0}, dw[4] = {0, 0, -1, 1};
                for (int k = 0; k < 4; ++k) {
                    int nh = qh + dh[k], nw = qw + dw[k];
                    if (nh < 0 || nh >= H || nw < 0 || nw >= W) continue;
                    size_t np = size_t(nh) * W + nw;
                    if (mask.bits[np] && comp[np] < 0) {
                        comp[np] = id;
                        stack.push_back(np);
                    }
                }
            }
            sizes.push_back(sz);
        }

    int32_t best = 0;
    for (int32_t i = 1; i < int32_t(sizes.size()); ++i)
        if (sizes[i] > sizes[best]) best = i;

    Mask out;
    out.height = H;
    out.width = W;
    out.bits.assign(size_t(H) * W, 0);
    for (size_t p = 0; p < comp.size(); ++p)
        if (comp[p] == best) {
            out.bits[p] = 1;
            ++out.count;
        }
    return out;
}

/// Per-band mean over the masked pixels. Accumulates in double.
inline Spectrum mean_spectrum(const Hypercube& cube, const Mask& mask) {
    if (mask.height != cube.height || mask.width != cube.width)
        throw DimensionMismatch("mask is " + std::to_string(mask.height) + "x" +
                                std::to_string(mask.width) + ", cube is " +
                                std::to_string(cube.height) + "x" + std::to_string(cube.width));
    if (mask.count == 0) throw EmptyMask("mean_spectrum of an empty mask");
    Spectrum s;
    s.wavelengths = cube.wavelengths;
    std::vector<double> acc(cube.bands, 0.0);
    for (int h = 0; h < cube.height; ++h)
        for (int w = 0; w < cube.width; ++w)
            if (mask.at(h, w))
                for (int b = 0; b < cube.bands; ++b) acc[b] += cube.at(h, w, b);
    s.values.resize(cube.bands);
    for (int b = 0; b < cube.bands; ++b) s.values[b] = acc[b] / double(mask.count);
    return s;
}

/// CSV header `sample_id,label,w<λ1>,…,w<λB>`, floats with 9 significant
/// digits, one row per sample.
inline void write_spectra_csv(const std::vector<Spectrum>& spectra, const std::string& path) {
    if (spectra.empty()) throw IoFailure("no spectra to write");
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoFailure("cannot write " + path);
    char buf[48];
    f << "sample_id,label";
    for (double wl : spectra.front().wavelengths) {
        std::snprintf(buf, sizeof buf, "%.9g", wl);
        f << ",w" << buf;
    }
    f << "\n";
    for (const auto& s : spectra) {
        f << s.sample_id << "," << s.label;
        for (double v : s.values) {
            std::snprintf(buf, sizeof buf, "%.9g", v);
            f << "," << buf;
        }
        f << "\n";
    }
    if (!f.flush()) throw IoFailure("write failed on " + path);
}

inline std::vector<Spectrum> read_spectra_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoFailure("cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw IoFailure("empty spectra file " + path);
    std::vector<double> wavelengths;
    {
        std::istringstream hs(line);
        std::string tok;
        int col = 0;
        while (std::getline(hs, tok, ',')) {
            if (col >= 2) {
                if (tok.empty() || tok[0] != 'w')
                    throw IoFailure("bad spectra header column '" + tok + "'");
                wavelengths.push_back(std::stod(tok.substr(1)));
            }
            ++col;
        }
    }
    std::vector<Spectrum> out;
    while (std::getline(f, line)) {
        if (detail::trim(line).empty()) continue;
        std::istringstream ls(line);
        std::string tok;
        Spectrum s;
        s.wavelengths = wavelengths;
        std::getline(ls, tok, ',');
        s.sample_id = tok;
        std::getline(ls, tok, ',');
        s.label = std::stoi(tok);
        while (std::getline(ls, tok, ',')) s.values.push_back(std::stod(tok));
        if (s.values.size() != wavelengths.size())
            throw IoFailure("row for " + s.sample_id + " has " + std::to_string(s.values.size()) +
                            " values, expected " + std::to_string(wavelengths.size()));
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace hsr
