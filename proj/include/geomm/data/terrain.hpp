#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "geomm/common.hpp"
#include "geomm/raster.hpp"

namespace geomm::data {

struct TerrainParams {
    int octaves = 4;
    double base_frequency = 3.0;  // lattice cells across the tile at octave 0
    double persistence = 0.5;
    double contrast = 1.9;  // stretch around mid-level so extremes occur
    double min_elevation = 0.0;
    double max_elevation = 3000.0;
};

namespace detail {

// Lattice value in [0, 1) at integer coordinates, keyed by (seed, octave).
inline double lattice_value(std::uint64_t seed, int octave, int ix, int iy) {
    std::uint64_t h = seed;
    h = splitmix64(h ^ (0x9e37ull + static_cast<std::uint64_t>(octave)));
    h = splitmix64(h ^ static_cast<std::uint64_t>(static_cast<std::int64_t>(ix)));
    h = splitmix64(h ^ static_cast<std::uint64_t>(static_cast<std::int64_t>(iy)));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

inline double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

// Smooth value noise in [0, 1).
inline double value_noise(std::uint64_t seed, int octave, double x, double y) {
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const double tx = fade(x - x0), ty = fade(y - y0);
    const double v00 = lattice_value(seed, octave, x0, y0);
    const double v10 = lattice_value(seed, octave, x0 + 1, y0);
    const double v01 = lattice_value(seed, octave, x0, y0 + 1);
    const double v11 = lattice_value(seed, octave, x0 + 1, y0 + 1);
    const double a = v00 + (v10 - v00) * tx;
    const double b = v01 + (v11 - v01) * tx;
    return a + (b - a) * ty;
}

}  // namespace detail

// Multi-octave fractal noise field in [0, 1]; octaves == 0 gives a constant
// 0.5 field (flat terrain).
inline Raster fractal_noise(std::uint64_t seed, int height, int width,
                            int octaves, double base_frequency, double persistence) {
    Raster out(1, height, width, 0.5);
    if (octaves <= 0) return out;
    double amp_sum = 0.0, amp = 1.0;
    for (int o = 0; o < octaves; ++o, amp *= persistence) amp_sum += amp;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            double v = 0.0;
            double freq = base_frequency;
            amp = 1.0;
            for (int o = 0; o < octaves; ++o) {
                v += amp * detail::value_noise(seed, o, freq * x / width, freq * y / height);
                freq *= 2.0;
                amp *= persistence;
            }
            out.at(0, y, x) = v / amp_sum;
        }
    }
    return out;
}

// Elevation raster in meters. Deterministic given (seed, size, params).
inline Raster generate_terrain(std::uint64_t seed, int height, int width,
                               const TerrainParams& params = {}) {
    if (height % 16 != 0 || width % 16 != 0)
        throw std::invalid_argument("generate_terrain: size must be divisible by 16");
    Raster r = fractal_noise(seed, height, width, params.octaves, params.base_frequency,
                             params.persistence);
    const double span = params.max_elevation - params.min_elevation;
    for (auto& v : r.v) {
        const double stretched = std::clamp(0.5 + params.contrast * (v - 0.5), 0.0, 1.0);
        v = params.min_elevation + span * stretched;
    }
    r.round_to_float();
    return r;
}

}  // namespace geomm::data
