#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

namespace hsr {

inline constexpr const char* kToolName = "hsr";
inline constexpr const char* kToolVersion = "0.1.0";

// Every failure mode in the library is a named Error subclass; the CLI maps
// the kind string into its machine-readable error output.
struct Error : std::runtime_error {
    Error(std::string kind, const std::string& msg)
        : std::runtime_error(kind + ": " + msg), kind_(std::move(kind)) {}
    const std::string& kind() const { return kind_; }

private:
    std::string kind_;
};

#define HSR_DEFINE_ERROR(Name)                                              \
    struct Name : ::hsr::Error {                                            \
        explicit Name(const std::string& msg) : Error(#Name, msg) {}        \
    }

// hypercube
HSR_DEFINE_ERROR(MalformedHeader);
HSR_DEFINE_ERROR(SizeMismatch);
HSR_DEFINE_ERROR(UnsupportedDataType);
HSR_DEFINE_ERROR(IoFailure);
HSR_DEFINE_ERROR(DuplicateMatch);
HSR_DEFINE_ERROR(NotNormalized);
HSR_DEFINE_ERROR(ConstantCube);
// segmentation
HSR_DEFINE_ERROR(EmptyMask);
HSR_DEFINE_ERROR(DimensionMismatch);
// autodiff
HSR_DEFINE_ERROR(ShapeMismatch);
HSR_DEFINE_ERROR(NonIntegralOutput);
HSR_DEFINE_ERROR(IndivisibleDims);
HSR_DEFINE_ERROR(NonScalarLoss);
// models
HSR_DEFINE_ERROR(InvalidConfig);
// training
HSR_DEFINE_ERROR(TooFewItems);
HSR_DEFINE_ERROR(PatchTooLarge);
HSR_DEFINE_ERROR(NonFiniteLoss);
HSR_DEFINE_ERROR(CorruptCheckpoint);
HSR_DEFINE_ERROR(ArchMismatch);
// metrics
HSR_DEFINE_ERROR(LengthMismatch);
HSR_DEFINE_ERROR(NonBinaryLabels);
HSR_DEFINE_ERROR(EmptyConfusion);
// classify
HSR_DEFINE_ERROR(SingletonMinority);
HSR_DEFINE_ERROR(ClassTooSmall);
HSR_DEFINE_ERROR(DegenerateLabels);
HSR_DEFINE_ERROR(FeatureCountMismatch);

// Deterministic RNG used everywhere instead of <random> distributions, whose
// output is implementation-defined. splitmix64 core.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // [0, 1)
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // unbiased integer in [0, n)
    uint64_t below(uint64_t n) {
        uint64_t threshold = (0 - n) % n;
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Box-Muller; one value per call, no caching, so call order alone
    // determines the stream.
    double normal() {
        double u1, u2;
        do { u1 = uniform(); } while (u1 <= 0.0);
        u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    template <class It>
    void shuffle(It first, It last) {
        auto n = static_cast<uint64_t>(last - first);
        for (uint64_t i = n; i > 1; --i) {
            uint64_t j = below(i);
            std::swap(first[i - 1], first[j]);
        }
    }

private:
    uint64_t state_;
};

namespace detail {
inline const uint32_t* crc32_table() {
    static const auto table = [] {
        static uint32_t t[256];
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k)
                c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    return table;
}
}  // namespace detail

inline uint32_t crc32(const void* data, size_t len, uint32_t crc = 0) {
    const uint32_t* table = detail::crc32_table();
    const auto* p = static_cast<const unsigned char*>(data);
    crc = ~crc;
    for (size_t i = 0; i < len; ++i)
        crc = table[(crc ^ p[i]) & 0xff] ^ (crc >> 8);
    return ~crc;
}

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian and assume a little-endian host");

}  // namespace hsr
