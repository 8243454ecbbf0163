#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "geomm/raster.hpp"

namespace geomm::eval {

inline void check_same_shape(const Raster& a, const Raster& b, const char* who) {
    if (!a.same_shape(b)) throw std::invalid_argument(std::string(who) + ": shape mismatch");
}

inline double mae(const Raster& pred, const Raster& ref) {
    check_same_shape(pred, ref, "mae");
    if (pred.size() == 0) throw std::invalid_argument("mae: empty raster");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.v.size(); ++i) s += std::abs(pred.v[i] - ref.v[i]);
    return s / static_cast<double>(pred.v.size());
}

inline double mse(const Raster& pred, const Raster& ref) {
    check_same_shape(pred, ref, "mse");
    if (pred.size() == 0) throw std::invalid_argument("mse: empty raster");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.v.size(); ++i) {
        const double d = pred.v[i] - ref.v[i];
        s += d * d;
    }
    return s / static_cast<double>(pred.v.size());
}

inline double rmse(const Raster& pred, const Raster& ref) { return std::sqrt(mse(pred, ref)); }

// 10 log10(range^2 / MSE); +inf when the images are identical.
inline double psnr(const Raster& pred, const Raster& ref, double data_range) {
    if (data_range <= 0.0) throw std::invalid_argument("psnr: data_range must be positive");
    const double m = mse(pred, ref);
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(data_range * data_range / m);
}

namespace detail {

inline std::vector<double> gaussian_kernel_11(double sigma = 1.5) {
    std::vector<double> k(11);
    double sum = 0.0;
    for (int i = 0; i < 11; ++i) {
        const double x = i - 5;
        k[static_cast<std::size_t>(i)] = std::exp(-x * x / (2.0 * sigma * sigma));
        sum += k[static_cast<std::size_t>(i)];
    }
    for (auto& v : k) v /= sum;
    return k;
}

// Separable valid-mode blur of one channel plane.
inline std::vector<double> blur_valid(const std::vector<double>& img, int h, int w,
                                      const std::vector<double>& k) {
    const int r = static_cast<int>(k.size()) / 2;
    const int oh = h - 2 * r, ow = w - 2 * r;
    std::vector<double> tmp(static_cast<std::size_t>(h) * ow, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < static_cast<int>(k.size()); ++i)
                s += k[static_cast<std::size_t>(i)] * img[static_cast<std::size_t>(y) * w + x + i];
            tmp[static_cast<std::size_t>(y) * ow + x] = s;
        }
    std::vector<double> out(static_cast<std::size_t>(oh) * ow, 0.0);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < static_cast<int>(k.size()); ++i)
                s += k[static_cast<std::size_t>(i)] * tmp[static_cast<std::size_t>(y + i) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = s;
        }
    return out;
}

}  // namespace detail

// Standard SSIM: 11x11 Gaussian window (sigma 1.5), C1=(0.01 r)^2,
// C2=(0.03 r)^2, valid-mode windows, channel-averaged.
inline double ssim(const Raster& pred, const Raster& ref, double data_range) {
    check_same_shape(pred, ref, "ssim");
    if (data_range <= 0.0) throw std::invalid_argument("ssim: data_range must be positive");
    if (pred.height < 11 || pred.width < 11)
        throw std::invalid_argument("ssim: image smaller than the 11x11 window");
    const auto k = detail::gaussian_kernel_11();
    const double c1 = std::pow(0.01 * data_range, 2.0);
    const double c2 = std::pow(0.03 * data_range, 2.0);
    const int h = pred.height, w = pred.width;
    double total = 0.0;
    for (int c = 0; c < pred.channels; ++c) {
        const std::size_t off = static_cast<std::size_t>(c) * h * w;
        std::vector<double> x(pred.v.begin() + off, pred.v.begin() + off + static_cast<std::size_t>(h) * w);
        std::vector<double> y(ref.v.begin() + off, ref.v.begin() + off + static_cast<std::size_t>(h) * w);
        std::vector<double> xx(x.size()), yy(y.size()), xy(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        const auto mx = detail::blur_valid(x, h, w, k);
        const auto my = detail::blur_valid(y, h, w, k);
        const auto mxx = detail::blur_valid(xx, h, w, k);
        const auto myy = detail::blur_valid(yy, h, w, k);
        const auto mxy = detail::blur_valid(xy, h, w, k);
        double s = 0.0;
        for (std::size_t i = 0; i < mx.size(); ++i) {
            const double vx = mxx[i] - mx[i] * mx[i];
            const double vy = myy[i] - my[i] * my[i];
            const double cxy = mxy[i] - mx[i] * my[i];
            s += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cxy + c2)) /
                 ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
        }
        total += s / static_cast<double>(mx.size());
    }
    return total / pred.channels;
}

struct MetricRow {
    double mae = 0.0, rmse = 0.0, ssim = 0.0, psnr = 0.0;
};

// Per-modality metric table; units follow each modality's physical range.
struct MetricReport {
    std::map<std::string, MetricRow> rows;
    std::map<std::string, std::string> units;
};

inline MetricRow metric_row(const Raster& pred, const Raster& ref, double data_range) {
    return {mae(pred, ref), rmse(pred, ref), ssim(pred, ref, data_range),
            psnr(pred, ref, data_range)};
}

}  // namespace geomm::eval
