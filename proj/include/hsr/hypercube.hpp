#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hsr/common.hpp"

namespace hsr {

enum class Interleave { bil, bsq, bip };
enum class CubeDataType { float32, uint16 };

inline std::string to_string(Interleave il) {
    switch (il) {
        case Interleave::bil: return "bil";
        case Interleave::bsq: return "bsq";
        case Interleave::bip: return "bip";
    }
    return "?";
}

inline std::string to_string(CubeDataType dt) {
    return dt == CubeDataType::float32 ? "float32" : "uint16";
}

/// H x W x B cube of digital numbers, canonical (H, W, B) row-major layout.
struct Hypercube {
    int height = 0;
    int width = 0;
    int bands = 0;
    std::vector<double> wavelengths;  // nm, strictly increasing
    std::vector<float> data;          // size H*W*B, index (h*W + w)*B + b
    std::pair<float, float> value_range{0.f, 0.f};  // range of the original data

    size_t size() const { return size_t(height) * width * bands; }
    float& at(int h, int w, int b) { return data[(size_t(h) * width + w) * bands + b]; }
    float at(int h, int w, int b) const { return data[(size_t(h) * width + w) * bands + b]; }
};

struct RgbImage {
    int height = 0;
    int width = 0;
    std::vector<float> data;  // H*W*3, values in [0,1]

    float& at(int h, int w, int c) { return data[(size_t(h) * width + w) * 3 + c]; }
    float at(int h, int w, int c) const { return data[(size_t(h) * width + w) * 3 + c]; }
};

struct CubeHeader {
    int samples = 0;  // W
    int lines = 0;    // H
    int bands = 0;
    Interleave interleave = Interleave::bil;
    CubeDataType data_type = CubeDataType::float32;
    bool little_endian = true;
    std::vector<double> wavelengths;
};

namespace detail {

inline std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

// raw-file element index for a given (h, w, b) under each interleave
inline size_t raw_index(Interleave il, int H, int W, int B, int h, int w, int b) {
    switch (il) {
        case Interleave::bil: return (size_t(h) * B + b) * W + w;
        case Interleave::bsq: return (size_t(b) * H + h) * W + w;
        case Interleave::bip: return (size_t(h) * W + w) * B + b;
    }
    return 0;
}

}  // namespace detail

inline CubeHeader parse_header(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    std::string pending_key;  // multi-line { ... } value being collected
    std::string pending_val;
    auto commit = [&](const std::string& key, const std::string& val) {
        if (kv.count(key)) throw MalformedHeader("duplicate field '" + key + "'");
        kv[key] = val;
    };
    while (std::getline(in, line)) {
        if (!pending_key.empty()) {
            pending_val += " " + line;
            if (line.find('}') != std::string::npos) {
                commit(pending_key, pending_val);
                pending_key.clear();
            }
            continue;
        }
        line = detail::trim(line);
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw MalformedHeader("line without '=': " + line);
        std::string key = detail::trim(line.substr(0, eq));
        std::string val = detail::trim(line.substr(eq + 1));
        if (!val.empty() && val.front() == '{' && val.find('}') == std::string::npos) {
            pending_key = key;
            pending_val = val;
            continue;
        }
        commit(key, val);
    }
    if (!pending_key.empty()) throw MalformedHeader("unterminated '{' in field '" + pending_key + "'");

    auto require = [&](const std::string& key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) throw MalformedHeader("missing field '" + key + "'");
        return it->second;
    };
    auto to_int = [](const std::string& key, const std::string& v) {
        try {
            size_t pos = 0;
            int n = std::stoi(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return n;
        } catch (const std::exception&) {
            throw MalformedHeader("field '" + key + "' is not an integer: " + v);
        }
    };

    CubeHeader hdr;
    hdr.samples = to_int("samples", require("samples"));
    hdr.lines = to_int("lines", require("lines"));
    hdr.bands = to_int("bands", require("bands"));
    if (hdr.samples <= 0 || hdr.lines <= 0 || hdr.bands <= 0)
        throw MalformedHeader("counts must be positive");

    const std::string& il = require("interleave");
    if (il == "bil") hdr.interleave = Interleave::bil;
    else if (il == "bsq") hdr.interleave = Interleave::bsq;
    else if (il == "bip") hdr.interleave = Interleave::bip;
    else throw MalformedHeader("unknown interleave '" + il + "'");

    const std::string& dt = require("data type");
    if (dt == "float32") hdr.data_type = CubeDataType::float32;
    else if (dt == "uint16") hdr.data_type = CubeDataType::uint16;
    else throw UnsupportedDataType("data type '" + dt + "'");

    const std::string& bo = require("byte order");
    if (bo == "0") hdr.little_endian = true;
    else if (bo == "1") throw UnsupportedDataType("big-endian cubes are not supported");
    else throw MalformedHeader("byte order must be 0 or 1, got '" + bo + "'");

    std::string wl = require("wavelength");
    auto open = wl.find('{');
    auto close = wl.find('}');
    if (open == std::string::npos || close == std::string::npos || close < open)
        throw MalformedHeader("wavelength must be a { comma list }");
    wl = wl.substr(open + 1, close - open - 1);
    std::istringstream ws(wl);
    std::string tok;
    while (std::getline(ws, tok, ',')) {
        tok = detail::trim(tok);
        if (tok.empty()) continue;
        try {
            hdr.wavelengths.push_back(std::stod(tok));
        } catch (const std::exception&) {
            throw MalformedHeader("bad wavelength '" + tok + "'");
        }
    }
    if (int(hdr.wavelengths.size()) != hdr.bands)
        throw MalformedHeader("wavelength count " + std::to_string(hdr.wavelengths.size()) +
                              " != bands " + std::to_string(hdr.bands));
    for (size_t i = 1; i < hdr.wavelengths.size(); ++i)
        if (hdr.wavelengths[i] <= hdr.wavelengths[i - 1])
            throw MalformedHeader("wavelengths must be strictly increasing");
    return hdr;
}

inline Hypercube read_cube(const std::string& header_path, const std::string& raw_path) {
    std::ifstream hf(header_path);
    if (!hf) throw IoFailure("cannot open header " + header_path);
    std::stringstream ss;
    ss << hf.rdbuf();
    CubeHeader hdr = parse_header(ss.str());

    const int H = hdr.lines, W = hdr.samples, B = hdr.bands;
    const size_t n = size_t(H) * W * B;
    const size_t bytes_per = hdr.data_type == CubeDataType::float32 ? 4 : 2;

    std::ifstream rf(raw_path, std::ios::binary);
    if (!rf) throw IoFailure("cannot open raw " + raw_path);
    rf.seekg(0, std::ios::end);
    size_t file_size = size_t(rf.tellg());
    if (file_size != n * bytes_per)
        throw SizeMismatch("raw file is " + std::to_string(file_size) + " bytes, expected " +
                           std::to_string(n * bytes_per));
    rf.seekg(0);

    Hypercube cube;
    cube.height = H;
    cube.width = W;
    cube.bands = B;
    cube.wavelengths = hdr.wavelengths;
    cube.data.resize(n);

    std::vector<char> raw(n * bytes_per);
    rf.read(raw.data(), std::streamsize(raw.size()));
    if (!rf) throw IoFailure("short read on " + raw_path);

    for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w)
            for (int b = 0; b < B; ++b) {
                size_t src = detail::raw_index(hdr.interleave, H, W, B, h, w, b);
                float v;
                if (hdr.data_type == CubeDataType::float32) {
                    std::memcpy(&v, raw.data() + src * 4, 4);
                } else {
                    uint16_t u;
                    std::memcpy(&u, raw.data() + src * 2, 2);
                    v = float(u);
                }
                cube.at(h, w, b) = v;
            }

    auto [mn, mx] = std::minmax_element(cube.data.begin(), cube.data.end());
    cube.value_range = {*mn, *mx};
    for (float v : cube.data)
        if (!std::isfinite(v)) throw SizeMismatch("non-finite value in cube");
    return cube;
}

inline void write_cube(const Hypercube& cube, Interleave interleave,
                       const std::string& header_path, const std::string& raw_path,
                       CubeDataType data_type = CubeDataType::float32) {
    const int H = cube.height, W = cube.width, B = cube.bands;
    const size_t n = cube.size();
    const size_t bytes_per = data_type == CubeDataType::float32 ? 4 : 2;

    std::vector<char> raw(n * bytes_per);
    for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w)
            for (int b = 0; b < B; ++b) {
                size_t dst = detail::raw_index(interleave, H, W, B, h, w, b);
                float v = cube.at(h, w, b);
                if (data_type == CubeDataType::float32) {
                    std::memcpy(raw.data() + dst * 4, &v, 4);
                } else {
                    auto u = uint16_t(std::clamp(std::lround(double(v)), 0l, 65535l));
                    std::memcpy(raw.data() + dst * 2, &u, 2);
                }
            }

    std::ostringstream hdr;
    hdr << "samples = " << W << "\n"
        << "lines = " << H << "\n"
        << "bands = " << B << "\n"
        << "interleave = " << to_string(interleave) << "\n"
        << "data type = " << to_string(data_type) << "\n"
        << "byte order = 0\n"
        << "wavelength = { ";
    for (int b = 0; b < B; ++b) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.9g", cube.wavelengths[b]);
        hdr << (b ? ", " : "") << buf;
    }
    hdr << " }\n";

    std::ofstream hf(header_path, std::ios::trunc);
    if (!hf) throw IoFailure("cannot write header " + header_path);
    hf << hdr.str();
    if (!hf.flush()) throw IoFailure("write failed on " + header_path);

    std::ofstream rf(raw_path, std::ios::binary | std::ios::trunc);
    if (!rf) throw IoFailure("cannot write raw " + raw_path);
    rf.write(raw.data(), std::streamsize(raw.size()));
    if (!rf.flush()) throw IoFailure("write failed on " + raw_path);
}

/// Index of the band closest to target_nm; ties break to the lower index.
inline int nearest_band(const Hypercube& cube, double target_nm) {
    int best = 0;
    double best_d = std::abs(cube.wavelengths[0] - target_nm);
    for (int i = 1; i < cube.bands; ++i) {
        double d = std::abs(cube.wavelengths[i] - target_nm);
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return best;
}

inline Hypercube select_bands(const Hypercube& cube, const std::vector<double>& targets) {
    std::vector<int> idx;
    idx.reserve(targets.size());
    for (double t : targets) {
        int i = nearest_band(cube, t);
        if (std::find(idx.begin(), idx.end(), i) != idx.end())
            throw DuplicateMatch("targets " + std::to_string(t) + " nm maps to already-used band " +
                                 std::to_string(cube.wavelengths[i]) + " nm");
        idx.push_back(i);
    }
    Hypercube out;
    out.height = cube.height;
    out.width = cube.width;
    out.bands = int(idx.size());
    for (int i : idx) out.wavelengths.push_back(cube.wavelengths[i]);
    out.data.resize(out.size());
    for (int h = 0; h < cube.height; ++h)
        for (int w = 0; w < cube.width; ++w)
            for (size_t k = 0; k < idx.size(); ++k)
                out.at(h, w, int(k)) = cube.at(h, w, idx[k]);
    auto [mn, mx] = std::minmax_element(out.data.begin(), out.data.end());
    out.value_range = {*mn, *mx};
    return out;
}

/// Global min-max scaling of the whole cube to [0,1]; the original range is
/// kept in value_range.
inline Hypercube normalize(const Hypercube& cube) {
    auto [mn_it, mx_it] = std::minmax_element(cube.data.begin(), cube.data.end());
    float mn = *mn_it, mx = *mx_it;
    if (!(mx > mn)) throw ConstantCube("cube min equals max (" + std::to_string(mn) + ")");
    Hypercube out = cube;
    float inv = 1.0f / (mx - mn);
    for (float& v : out.data) v = (v - mn) * inv;
    out.value_range = {mn, mx};
    return out;
}

inline bool is_normalized(const Hypercube& cube) {
    for (float v : cube.data)
        if (v < 0.0f || v > 1.0f) return false;
    return true;
}

/// Channels 0/1/2 = nearest bands to 600/549/450 nm, copied linearly.
inline RgbImage pseudo_rgb(const Hypercube& cube) {
    if (!is_normalized(cube)) throw NotNormalized("pseudo_rgb requires values in [0,1]");
    const double targets[3] = {600.0, 549.0, 450.0};
    int band[3];
    for (int c = 0; c < 3; ++c) band[c] = nearest_band(cube, targets[c]);
    RgbImage img;
    img.height = cube.height;
    img.width = cube.width;
    img.data.resize(size_t(cube.height) * cube.width * 3);
    for (int h = 0; h < cube.height; ++h)
        for (int w = 0; w < cube.width; ++w)
            for (int c = 0; c < 3; ++c)
                img.at(h, w, c) = cube.at(h, w, band[c]);
    return img;
}

/// Lossless 8-bit binary PPM. Deliberately not JPEG: the pipeline's tests are
/// bit-exact.
inline void write_ppm(const RgbImage& img, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoFailure("cannot write " + path);
    f << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> row(size_t(img.width) * 3);
    for (int h = 0; h < img.height; ++h) {
        for (int w = 0; w < img.width; ++w)
            for (int c = 0; c < 3; ++c) {
                float v = std::clamp(img.at(h, w, c), 0.0f, 1.0f);
                row[size_t(w) * 3 + c] = (unsigned char)std::lround(v * 255.0);
            }
        f.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size()));
    }
    if (!f.flush()) throw IoFailure("write failed on " + path);
}

inline RgbImage read_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoFailure("cannot open " + path);
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    f >> magic >> w >> h >> maxval;
    if (magic != "P6" || maxval != 255 || w <= 0 || h <= 0)
        throw IoFailure("not an 8-bit P6 PPM: " + path);
    f.get();  // single whitespace after maxval
    RgbImage img;
    img.height = h;
    img.width = w;
    img.data.resize(size_t(h) * w * 3);
    std::vector<unsigned char> raw(size_t(h) * w * 3);
    f.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
    if (!f) throw IoFailure("short read on " + path);
    for (size_t i = 0; i < raw.size(); ++i) img.data[i] = float(raw[i]) / 255.0f;
    return img;
}

/// Float RGB image stored exactly: "PFR" magic + dims + float32 LE payload.
/// Used alongside PPM where the pipeline needs bit-exact round trips.
inline void write_rgb_raw(const RgbImage& img, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoFailure("cannot write " + path);
    f.write("PFR1", 4);
    uint32_t dims[2] = {uint32_t(img.height), uint32_t(img.width)};
    f.write(reinterpret_cast<const char*>(dims), 8);
    f.write(reinterpret_cast<const char*>(img.data.data()),
            std::streamsize(img.data.size() * sizeof(float)));
    if (!f.flush()) throw IoFailure("write failed on " + path);
}

inline RgbImage read_rgb_raw(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoFailure("cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "PFR1", 4) != 0) throw IoFailure("not a PFR1 file: " + path);
    uint32_t dims[2];
    f.read(reinterpret_cast<char*>(dims), 8);
    RgbImage img;
    img.height = int(dims[0]);
    img.width = int(dims[1]);
    img.data.resize(size_t(img.height) * img.width * 3);
    f.read(reinterpret_cast<char*>(img.data.data()),
           std::streamsize(img.data.size() * sizeof(float)));
    if (!f) throw IoFailure("short read on " + path);
    return img;
}

}  // namespace hsr
