#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace geomm {

// Error hierarchy. Precondition violations throw std::invalid_argument
// directly; everything else derives from geomm::error so callers can catch
// the library's failures in one place.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct corrupt_dataset_error : error {
    using error::error;
};
struct incomplete_dataset_error : error {
    using error::error;
};
struct version_error : error {
    using error::error;
};
struct training_diverged_error : error {
    using error::error;
};
struct budget_overflow_error : error {
    using error::error;
};
struct missing_input_error : error {
    using error::error;
};

inline std::uint64_t fnv1a64(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// One global seed drives every module: the per-module stream is
// splitmix64(seed ^ fnv1a64(name)). Names are documented at each call site
// and in the README so runs are reproducible across processes.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view name) {
    return splitmix64(seed ^ fnv1a64(name));
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[i] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

}  // namespace geomm
