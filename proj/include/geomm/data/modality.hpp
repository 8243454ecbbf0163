#pragma once

#include <json.hpp>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "geomm/raster.hpp"

namespace geomm::data {

enum class ModalityKind { image, sequence };

struct ModalitySpec {
    std::string name;
    ModalityKind kind = ModalityKind::image;
    int channels = 1;  // image kind only
    double value_min = 0.0;
    double value_max = 1.0;
    int vocab_size = 16384;
    bool is_categorical = false;

    void validate() const {
        if (vocab_size < 2) throw std::invalid_argument("ModalitySpec: vocab_size must be >= 2");
        if (kind == ModalityKind::image && channels < 1)
            throw std::invalid_argument("ModalitySpec: image modality needs channels >= 1");
        if (!is_categorical && !(value_min < value_max))
            throw std::invalid_argument("ModalitySpec: value_min must be < value_max");
    }
};

// The synthetic world's land cover classes. `kVegetationClasses` is the set
// whose pixels carry positive vegetation index by construction.
enum LulcClass : int {
    kWater = 0,
    kForest = 1,
    kGrassland = 2,
    kBare = 3,
    kSnow = 4,
    kUrban = 5,
};
inline constexpr int kNumLulcClasses = 6;
inline const char* lulc_class_name(int c) {
    static const char* names[] = {"water", "forest", "grassland", "bare ground", "snow", "urban area"};
    return (c >= 0 && c < kNumLulcClasses) ? names[c] : "unknown";
}
inline bool lulc_is_vegetation(int c) { return c == kForest || c == kGrassland; }

inline std::vector<ModalitySpec> default_image_modalities() {
    return {
        {.name = "optical", .kind = ModalityKind::image, .channels = 4, .value_min = 0.0, .value_max = 1.0, .vocab_size = 16384},
        {.name = "radar", .kind = ModalityKind::image, .channels = 2, .value_min = -30.0, .value_max = 5.0, .vocab_size = 16384},
        {.name = "lulc", .kind = ModalityKind::image, .channels = 1, .value_min = 0.0, .value_max = kNumLulcClasses - 1.0, .vocab_size = 4096, .is_categorical = true},
        {.name = "ndvi", .kind = ModalityKind::image, .channels = 1, .value_min = -1.0, .value_max = 1.0, .vocab_size = 16384},
        {.name = "dem", .kind = ModalityKind::image, .channels = 1, .value_min = 0.0, .value_max = 3000.0, .vocab_size = 16384},
    };
}

inline nlohmann::json modality_to_json(const ModalitySpec& m) {
    return {{"name", m.name},
            {"kind", m.kind == ModalityKind::image ? "image" : "sequence"},
            {"channels", m.channels},
            {"value_min", m.value_min},
            {"value_max", m.value_max},
            {"vocab_size", m.vocab_size},
            {"is_categorical", m.is_categorical}};
}

inline ModalitySpec modality_from_json(const nlohmann::json& j) {
    ModalitySpec m;
    m.name = j.at("name").get<std::string>();
    m.kind = j.at("kind").get<std::string>() == "sequence" ? ModalityKind::sequence
                                                           : ModalityKind::image;
    m.channels = j.at("channels").get<int>();
    m.value_min = j.at("value_min").get<double>();
    m.value_max = j.at("value_max").get<double>();
    m.vocab_size = j.at("vocab_size").get<int>();
    m.is_categorical = j.at("is_categorical").get<bool>();
    return m;
}

struct AlignedSample {
    std::string sample_id;
    std::map<std::string, Raster> rasters;
    double lat = 0.0;
    double lon = 0.0;
    std::string caption;

    const Raster& raster(const std::string& name) const {
        auto it = rasters.find(name);
        if (it == rasters.end())
            throw std::invalid_argument("AlignedSample: missing modality '" + name + "'");
        return it->second;
    }

    void validate() const {
        int h = -1, w = -1;
        for (const auto& [name, r] : rasters) {
            if (h < 0) {
                h = r.height;
                w = r.width;
            }
            if (r.height != h || r.width != w)
                throw std::invalid_argument("AlignedSample: raster shapes differ across modalities");
            if (h % 16 != 0 || w % 16 != 0)
                throw std::invalid_argument("AlignedSample: H and W must be divisible by 16");
        }
        if (lat < -90.0 || lat > 90.0 || lon < -180.0 || lon >= 180.0)
            throw std::invalid_argument("AlignedSample: geolocation out of range");
    }
};

}  // namespace geomm::data
