#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "geomm/data/modality.hpp"
#include "geomm/data/terrain.hpp"
#include "geomm/rng.hpp"

namespace geomm::data {

// A climate region couples geolocation to surface statistics, so location is
// learnable from content (and vice versa).
struct Region {
    std::string name;
    double lat_min, lat_max, lon_min, lon_max;
    double moisture_bias;
    double snow_line_offset;  // meters, added to the global snow line
};

inline std::vector<Region> default_regions() {
    return {
        {"arid", 12.0, 32.0, -12.0, 38.0, -0.42, 600.0},
        {"temperate", 38.0, 58.0, -8.0, 28.0, 0.12, 150.0},
        {"tropical", -8.0, 8.0, 95.0, 140.0, 0.38, 700.0},
        {"alpine", 28.0, 44.0, 62.0, 98.0, -0.10, -650.0},
    };
}

struct DeriveParams {
    TerrainParams terrain;
    std::vector<Region> regions = default_regions();
    int region_index = 0;       // chosen by the caller per sample
    double sea_level = 600.0;   // meters
    double snow_line = 2250.0;  // meters
    int speckle_looks = 4;
    double texture_amplitude = 0.02;
};

namespace detail {

struct Fields {
    Raster moisture;    // [0,1]
    Raster water;       // [0,1] soft open-water mask
    Raster vegetation;  // [0,1]
    Raster slope;       // [0,1] normalized
    Raster urban;       // [0,1] patchy
};

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// Everything below is a pure function of (terrain, params): auxiliary noise
// fields are seeded from a hash of the terrain bytes, so identical terrain
// gives identical fields.
inline Fields derive_fields(const Raster& terrain, const DeriveParams& p) {
    const int h = terrain.height, w = terrain.width;
    const std::uint64_t tseed =
        fnv1a64(terrain.v.data(), terrain.v.size() * sizeof(double));
    const Region& region = p.regions.at(static_cast<std::size_t>(p.region_index));
    const double span = p.terrain.max_elevation - p.terrain.min_elevation;

    Fields f{Raster(1, h, w), Raster(1, h, w), Raster(1, h, w), Raster(1, h, w),
             Raster(1, h, w)};
    Raster mnoise = fractal_noise(splitmix64(tseed ^ 0x11), h, w, 3, 4.0, 0.5);
    Raster unoise = fractal_noise(splitmix64(tseed ^ 0x22), h, w, 2, 5.0, 0.5);
    const double sea_norm = (p.sea_level - p.terrain.min_elevation) / span;

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double elev = terrain.at(0, y, x);
            const double en = (elev - p.terrain.min_elevation) / span;
            const double dx = terrain.at(0, y, std::min(x + 1, w - 1)) -
                              terrain.at(0, y, std::max(x - 1, 0));
            const double dy = terrain.at(0, std::min(y + 1, h - 1), x) -
                              terrain.at(0, std::max(y - 1, 0), x);
            const double slope = clamp01(std::sqrt(dx * dx + dy * dy) / (0.12 * span));
            f.slope.at(0, y, x) = slope;

            const double moist = clamp01(0.66 - 0.50 * en + 0.38 * (mnoise.at(0, y, x) - 0.5) * 2.0 -
                                         0.15 * slope + region.moisture_bias);
            f.moisture.at(0, y, x) = moist;

            // open water needs both wetness and low-lying ground
            const double low = clamp01(1.5 * (sea_norm - en) + 0.35);
            const double water = clamp01(6.0 * (moist - 0.55) * low);
            f.water.at(0, y, x) = water;

            // vegetation prefers wet, low-to-mid elevation, gentle slopes; the
            // open-water mask caps it so spectra and classes stay consistent
            const double band = std::exp(-std::pow((en - 0.28) / 0.40, 2.0));
            const double veg = moist * band * (1.0 - 0.45 * slope) * 1.40;
            f.vegetation.at(0, y, x) = clamp01(std::min(veg, 0.9 * (1.0 - water)));

            f.urban.at(0, y, x) = clamp01((unoise.at(0, y, x) - 0.5) * 3.5);
        }
    }
    return f;
}

inline int lulc_argmax(double elev_norm, double sea_norm, double snow_norm, double moist,
                       double water, double veg, double slope, double urban) {
    double score[kNumLulcClasses];
    score[kWater] = 10.0 * (water - 0.62);
    score[kForest] = 6.0 * (veg - 0.52);
    score[kGrassland] = 3.5 - 11.0 * std::abs(veg - 0.34) - 2.0 * std::max(0.0, moist - 0.75);
    score[kBare] = 2.2 - 6.5 * veg - 3.0 * std::max(0.0, moist - 0.5);
    score[kSnow] = 14.0 * (elev_norm - snow_norm);
    score[kUrban] = 9.0 * (urban - 0.74) - 4.0 * slope - 6.0 * std::max(0.0, veg - 0.45) +
                    1.0 - 8.0 * water;
    int best = 0;
    for (int c = 1; c < kNumLulcClasses; ++c)
        if (score[c] > score[best]) best = c;
    return best;
}

// Unit-mean multiplicative speckle: Gamma(L, 1/L).
inline double speckle_factor(Rng& rng, int looks) {
    return rng.gamma(static_cast<double>(looks)) / static_cast<double>(looks);
}

}  // namespace detail

using detail::speckle_factor;

inline std::string caption_for(const std::vector<double>& class_fraction, double mean_elev_norm,
                               const std::string& region_name, double secondary_row_frac,
                               double secondary_col_frac) {
    int primary = 0, secondary = -1;
    for (int c = 1; c < kNumLulcClasses; ++c)
        if (class_fraction[c] > class_fraction[primary]) primary = c;
    double best2 = 0.12;
    for (int c = 0; c < kNumLulcClasses; ++c) {
        if (c == primary) continue;
        if (class_fraction[c] > best2) {
            best2 = class_fraction[c];
            secondary = c;
        }
    }
    const char* relief = mean_elev_norm < 0.33 ? "lowland" : (mean_elev_norm < 0.66 ? "upland" : "mountain");
    std::string s = "a ";
    s += relief;
    s += " tile in a ";
    s += region_name;
    s += " region showing mostly ";
    s += lulc_class_name(primary);
    if (secondary >= 0) {
        const char* ns = secondary_row_frac < 0.4 ? "north" : (secondary_row_frac > 0.6 ? "south" : "");
        const char* ew = secondary_col_frac < 0.4 ? "west" : (secondary_col_frac > 0.6 ? "east" : "");
        s += " with some ";
        s += lulc_class_name(secondary);
        if (*ns || *ew) {
            s += " in the ";
            s += ns;
            s += ew;
        } else {
            s += " near the center";
        }
    }
    return s;
}

// Derives the full co-registered modality stack from one elevation raster.
// Only the radar speckle and geolocation jitter consume rng; lulc, ndvi,
// optical, and dem are deterministic given (terrain, params).
inline AlignedSample derive_modalities(const Raster& terrain, const DeriveParams& p, Rng& rng,
                                       const std::string& sample_id = "") {
    if (terrain.channels != 1 || terrain.height % 16 != 0 || terrain.width % 16 != 0)
        throw std::invalid_argument("derive_modalities: terrain must be 1 x H x W, H,W % 16 == 0");
    const int h = terrain.height, w = terrain.width;
    const auto f = detail::derive_fields(terrain, p);
    const double span = p.terrain.max_elevation - p.terrain.min_elevation;
    const double sea_norm = (p.sea_level - p.terrain.min_elevation) / span;
    const double snow_norm =
        (p.snow_line + p.regions.at(static_cast<std::size_t>(p.region_index)).snow_line_offset -
         p.terrain.min_elevation) /
        span;
    const std::uint64_t tseed = fnv1a64(terrain.v.data(), terrain.v.size() * sizeof(double));
    Raster texture = fractal_noise(splitmix64(tseed ^ 0x33), h, w, 2, 8.0, 0.5);

    AlignedSample s;
    s.sample_id = sample_id;
    Raster optical(4, h, w), radar(2, h, w), lulc(1, h, w), ndvi(1, h, w);
    std::vector<double> class_fraction(kNumLulcClasses, 0.0);
    std::vector<double> class_row(kNumLulcClasses, 0.0), class_col(kNumLulcClasses, 0.0);

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double elev = terrain.at(0, y, x);
            const double en = (elev - p.terrain.min_elevation) / span;
            const double moist = f.moisture.at(0, y, x);
            const double w_water = f.water.at(0, y, x);
            const double veg = f.vegetation.at(0, y, x);
            const double slope = f.slope.at(0, y, x);
            const double urban = f.urban.at(0, y, x);

            const int cls = detail::lulc_argmax(en, sea_norm, snow_norm, moist, w_water, veg,
                                                slope, urban);
            lulc.at(0, y, x) = static_cast<double>(cls);
            class_fraction[cls] += 1.0;
            class_row[cls] += y;
            class_col[cls] += x;

            // continuous masks so optical is correlated with but not equal to lulc
            const double w_snow = detail::clamp01(8.0 * (en - snow_norm));
            const double w_urb = cls == kUrban ? 1.0 : 0.0;
            const double soil = 0.26 + 0.20 * texture.at(0, y, x);
            const double land = detail::clamp01(1.0 - w_water - w_snow);

            double blue = w_water * 0.11 + w_snow * 0.82 + w_urb * 0.10 +
                          land * (1.0 - w_urb) * (0.08 + 0.35 * soil * (1.0 - 0.6 * veg));
            double green = w_water * 0.09 + w_snow * 0.84 + w_urb * 0.12 +
                           land * (1.0 - w_urb) * (0.10 + 0.32 * soil + 0.10 * veg);
            double red = w_water * 0.06 + w_snow * 0.86 + w_urb * 0.14 +
                         land * (1.0 - w_urb) * (0.055 + (soil + 0.05) * (1.0 - 0.82 * veg));
            double nir = w_water * 0.01 + w_snow * 0.72 + w_urb * 0.11 +
                         land * (1.0 - w_urb) * (0.11 + 0.52 * veg + 0.14 * soil * (1.0 - veg));
            const double tex = p.texture_amplitude * (texture.at(0, y, x) - 0.5);
            blue = detail::clamp01(blue + tex);
            green = detail::clamp01(green + tex);
            red = detail::clamp01(red + tex);
            nir = detail::clamp01(nir + tex);
            optical.at(0, y, x) = blue;
            optical.at(1, y, x) = green;
            optical.at(2, y, x) = red;
            optical.at(3, y, x) = nir;

            const double denom = nir + red;
            ndvi.at(0, y, x) = denom > 0.0 ? (nir - red) / denom : 0.0;

            // linear-power backscatter, then multiplicative speckle, then dB
            const double vv_det = 0.004 * w_water + (1.0 - w_water) *
                                  (0.045 + 0.16 * veg + 0.40 * slope + 0.55 * w_urb +
                                   0.02 * w_snow);
            const double vh_det = std::max(1e-4, vv_det * (0.12 + 0.30 * veg));
            const double vv = vv_det * speckle_factor(rng, p.speckle_looks);
            const double vh = vh_det * speckle_factor(rng, p.speckle_looks);
            radar.at(0, y, x) = std::clamp(10.0 * std::log10(std::max(vv, 1e-9)), -30.0, 5.0);
            radar.at(1, y, x) = std::clamp(10.0 * std::log10(std::max(vh, 1e-9)), -30.0, 5.0);
        }
    }

    const double npx = static_cast<double>(h) * w;
    double mean_en = 0.0;
    for (const auto& v : terrain.v) mean_en += (v - p.terrain.min_elevation) / span;
    mean_en /= npx;
    int secondary = -1;
    {
        int primary = 0;
        for (int c = 1; c < kNumLulcClasses; ++c)
            if (class_fraction[c] > class_fraction[primary]) primary = c;
        double best2 = 0.12 * npx;
        for (int c = 0; c < kNumLulcClasses; ++c)
            if (c != primary && class_fraction[c] > best2) {
                best2 = class_fraction[c];
                secondary = c;
            }
    }
    const double srow = secondary >= 0 ? class_row[secondary] / (class_fraction[secondary] * h) : 0.5;
    const double scol = secondary >= 0 ? class_col[secondary] / (class_fraction[secondary] * w) : 0.5;
    std::vector<double> fracs = class_fraction;
    for (auto& v : fracs) v /= npx;

    const Region& region = p.regions.at(static_cast<std::size_t>(p.region_index));
    s.caption = caption_for(fracs, mean_en, region.name, srow, scol);
    s.lat = rng.uniform(region.lat_min, region.lat_max);
    s.lon = rng.uniform(region.lon_min, region.lon_max);

    Raster dem = terrain;
    for (auto* r : {&optical, &radar, &lulc, &ndvi, &dem}) r->round_to_float();
    s.rasters["optical"] = std::move(optical);
    s.rasters["radar"] = std::move(radar);
    s.rasters["lulc"] = std::move(lulc);
    s.rasters["ndvi"] = std::move(ndvi);
    s.rasters["dem"] = std::move(dem);
    s.validate();
    return s;
}

// Convenience: one fully seeded sample. Terrain seed, region choice, and the
// speckle stream all derive from (seed, index) so generation is independent
// per sample and parallelizable.
inline AlignedSample make_sample(std::uint64_t dataset_seed, long index, int height, int width,
                                 DeriveParams params = {}) {
    const std::uint64_t sample_seed = splitmix64(dataset_seed + 0x5eedull * (index + 1));
    Rng rng(sample_seed);
    params.region_index = rng.uniform_int(static_cast<int>(params.regions.size()));
    Raster terrain = generate_terrain(splitmix64(sample_seed ^ 0xA17), height, width, params.terrain);
    char id[32];
    std::snprintf(id, sizeof(id), "s%06ld", index);
    return derive_modalities(terrain, params, rng, id);
}

}  // namespace geomm::data
