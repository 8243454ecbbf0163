#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace geomm {

// Channel-major raster: v[c][y][x] flattened. Values are doubles in memory
// but every raster produced by the library is rounded through float so the
// float32 on-disk format round-trips bit-exactly.
struct Raster {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> v;

    Raster() = default;
    Raster(int c, int h, int w, double fill = 0.0)
        : channels(c), height(h), width(w),
          v(static_cast<std::size_t>(c) * h * w, fill) {}

    double& at(int c, int y, int x) {
        return v[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    double at(int c, int y, int x) const {
        return v[(static_cast<std::size_t>(c) * height + y) * width + x];
    }

    std::size_t size() const { return v.size(); }
    bool same_shape(const Raster& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }

    void round_to_float() {
        for (auto& x : v) x = static_cast<double>(static_cast<float>(x));
    }

    double min() const {
        double m = v.empty() ? 0.0 : v[0];
        for (double x : v) m = std::min(m, x);
        return m;
    }
    double max() const {
        double m = v.empty() ? 0.0 : v[0];
        for (double x : v) m = std::max(m, x);
        return m;
    }
};

}  // namespace geomm
