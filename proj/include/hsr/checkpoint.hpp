#pragma once

// Binary model checkpoints. Layout, all little-endian:
//   "HSC1" | u32 config_len | config text | u32 n_tensors |
//   per tensor: u32 name_len | name | u32 rank | u32 dims[rank] | f32 values |
//   u32 crc32 of everything before it
// The config text is `key = value` lines with keys sorted alphabetically, so
// identical configs serialize identically.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "hsr/common.hpp"
#include "hsr/models.hpp"

namespace hsr {

namespace detail {

inline void put_u32(std::string& buf, uint32_t v) {
    char b[4];
    std::memcpy(b, &v, 4);
    buf.append(b, 4);
}

struct ByteReader {
    const std::string& buf;
    size_t pos = 0;

    uint32_t u32() {
        if (pos + 4 > buf.size()) throw CorruptCheckpoint("truncated checkpoint");
        uint32_t v;
        std::memcpy(&v, buf.data() + pos, 4);
        pos += 4;
        return v;
    }
    std::string bytes(size_t n) {
        if (pos + n > buf.size()) throw CorruptCheckpoint("truncated checkpoint");
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace detail

inline std::string config_text(const ModelConfig& c) {
    std::map<std::string, std::string> kv = {
        {"arch", to_string(c.arch)},
        {"base_width", std::to_string(c.base_width)},
        {"depth", std::to_string(c.depth)},
        {"ffn_expansion", std::to_string(c.ffn_expansion)},
        {"heads", std::to_string(c.heads)},
        {"levels", std::to_string(c.levels)},
        {"out_bands", std::to_string(c.out_bands)},
        {"seed", std::to_string(c.seed)},
    };
    std::string out;
    for (auto& [k, v] : kv) out += k + " = " + v + "\n";
    return out;
}

inline ModelConfig config_from_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        auto eq = line.find(" = ");
        if (eq == std::string::npos) throw CorruptCheckpoint("bad config line: " + line);
        kv[line.substr(0, eq)] = line.substr(eq + 3);
    }
    auto get = [&](const std::string& k) {
        auto it = kv.find(k);
        if (it == kv.end()) throw CorruptCheckpoint("config missing key " + k);
        return it->second;
    };
    ModelConfig c;
    try {
        c.arch = arch_from_string(get("arch"));
        c.base_width = std::stoi(get("base_width"));
        c.depth = std::stoi(get("depth"));
        c.ffn_expansion = std::stoi(get("ffn_expansion"));
        c.heads = std::stoi(get("heads"));
        c.levels = std::stoi(get("levels"));
        c.out_bands = std::stoi(get("out_bands"));
        c.seed = std::stoull(get("seed"));
    } catch (const InvalidConfig& e) {
        throw CorruptCheckpoint(e.what());
    } catch (const std::exception&) {
        throw CorruptCheckpoint("non-numeric config value");
    }
    return c;
}

template <class T>
std::string serialize_checkpoint(const Model<T>& model) {
    std::string buf = "HSC1";
    std::string cfg = config_text(model.config());
    detail::put_u32(buf, uint32_t(cfg.size()));
    buf += cfg;
    detail::put_u32(buf, uint32_t(model.params().size()));
    for (const auto& [name, t] : model.params()) {
        detail::put_u32(buf, uint32_t(name.size()));
        buf += name;
        detail::put_u32(buf, uint32_t(t->shape.size()));
        for (int d : t->shape) detail::put_u32(buf, uint32_t(d));
        for (T v : t->v) {
            float f = float(v);
            char b[4];
            std::memcpy(b, &f, 4);
            buf.append(b, 4);
        }
    }
    detail::put_u32(buf, crc32(buf.data(), buf.size()));
    return buf;
}

template <class T>
void save_checkpoint(const Model<T>& model, const std::string& path) {
    std::string buf = serialize_checkpoint(model);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoFailure("cannot open " + path + " for writing");
    out.write(buf.data(), std::streamsize(buf.size()));
    if (!out) throw IoFailure("short write to " + path);
}

/// Rebuilds a model from checkpoint bytes. If `expected` is non-empty the
/// stored architecture name must match it.
template <class T = float>
Model<T> deserialize_checkpoint(const std::string& buf, const std::string& expected = "") {
    if (buf.size() < 8 || buf.compare(0, 4, "HSC1") != 0)
        throw CorruptCheckpoint("missing HSC1 magic");
    uint32_t stored_crc;
    std::memcpy(&stored_crc, buf.data() + buf.size() - 4, 4);
    if (crc32(buf.data(), buf.size() - 4) != stored_crc)
        throw CorruptCheckpoint("crc mismatch");

    detail::ByteReader r{buf, 4};
    ModelConfig cfg = config_from_text(r.bytes(r.u32()));
    if (!expected.empty() && to_string(cfg.arch) != expected)
        throw ArchMismatch("checkpoint holds " + to_string(cfg.arch) + ", expected " + expected);

    Model<T> model(cfg);
    uint32_t n = r.u32();
    if (n != model.params().size())
        throw CorruptCheckpoint("tensor count " + std::to_string(n) + " does not match config");
    for (const auto& [name, t] : model.params()) {
        if (r.bytes(r.u32()) != name) throw CorruptCheckpoint("unexpected tensor name order");
        uint32_t rank = r.u32();
        if (rank != t->shape.size()) throw CorruptCheckpoint("rank mismatch for " + name);
        for (int d : t->shape)
            if (r.u32() != uint32_t(d)) throw CorruptCheckpoint("shape mismatch for " + name);
        for (auto& v : t->v) {
            float f;
            std::string b = r.bytes(4);
            std::memcpy(&f, b.data(), 4);
            v = T(f);
        }
    }
    if (r.pos != buf.size() - 4) throw CorruptCheckpoint("trailing bytes in checkpoint");
    return model;
}

template <class T = float>
Model<T> load_checkpoint(const std::string& path, const std::string& expected = "") {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoFailure("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return deserialize_checkpoint<T>(ss.str(), expected);
}

}  // namespace hsr
