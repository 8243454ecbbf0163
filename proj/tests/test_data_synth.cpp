#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>
#include <set>

#include "geomm/data/dataset.hpp"
#include "geomm/data/synth.hpp"
#include "geomm/data/terrain.hpp"

using namespace geomm;
using namespace geomm::data;
namespace fs = std::filesystem;

TEST_CASE("terrain generation is deterministic and seed-sensitive") {
    Raster a = generate_terrain(7, 64, 64);
    Raster b = generate_terrain(7, 64, 64);
    REQUIRE(a.v == b.v);

    Raster c = generate_terrain(8, 64, 64);
    int differing = 0;
    for (std::size_t i = 0; i < a.v.size(); ++i)
        if (a.v[i] != c.v[i]) ++differing;
    REQUIRE(differing >= static_cast<int>(0.01 * a.v.size()));

    SECTION("range respected") {
        REQUIRE(a.min() >= 0.0);
        REQUIRE(a.max() <= 3000.0);
    }
}

TEST_CASE("zero octaves give flat terrain") {
    TerrainParams p;
    p.octaves = 0;
    Raster r = generate_terrain(7, 32, 32, p);
    for (double v : r.v) REQUIRE(v == r.v[0]);
}

TEST_CASE("terrain size must be divisible by 16") {
    REQUIRE_THROWS_AS(generate_terrain(1, 60, 64), std::invalid_argument);
    REQUIRE_THROWS_AS(generate_terrain(1, 64, 50), std::invalid_argument);
}

TEST_CASE("ndvi follows the band formula") {
    AlignedSample s = make_sample(3, 0, 64, 64);
    const Raster& opt = s.raster("optical");
    const Raster& ndvi = s.raster("ndvi");
    for (int y = 0; y < 64; y += 7) {
        for (int x = 0; x < 64; x += 5) {
            const double red = opt.at(2, y, x), nir = opt.at(3, y, x);
            if (nir + red > 0.0) {
                REQUIRE(ndvi.at(0, y, x) ==
                        Catch::Approx((nir - red) / (nir + red)).margin(1e-4));
                REQUIRE(ndvi.at(0, y, x) >= -1.0);
                REQUIRE(ndvi.at(0, y, x) <= 1.0);
            }
        }
    }

    SECTION("hand values") {
        REQUIRE((0.6 - 0.2) / (0.6 + 0.2) == Catch::Approx(0.5));
        REQUIRE((0.3 - 0.3) / (0.3 + 0.3) == Catch::Approx(0.0));
    }
}

TEST_CASE("speckle is unit mean") {
    Rng rng(17);
    double sum = 0.0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) sum += speckle_factor(rng, 4);
    REQUIRE(sum / n == Catch::Approx(1.0).margin(0.01));
}

TEST_CASE("lulc is deterministic given terrain and params") {
    Raster terrain = generate_terrain(21, 64, 64);
    DeriveParams params;
    params.region_index = 1;
    Rng rng_a(100), rng_b(900);  // different speckle streams
    AlignedSample a = derive_modalities(terrain, params, rng_a, "a");
    AlignedSample b = derive_modalities(terrain, params, rng_b, "b");
    REQUIRE(a.raster("lulc").v == b.raster("lulc").v);
    REQUIRE(a.raster("optical").v == b.raster("optical").v);
    REQUIRE(a.raster("dem").v == terrain.v);
    REQUIRE(a.raster("radar").v != b.raster("radar").v);  // speckle differs
    REQUIRE(a.caption == b.caption);
}

TEST_CASE("lulc classes are valid and class/ndvi signs agree") {
    for (long i = 0; i < 6; ++i) {
        AlignedSample s = make_sample(9, i, 64, 64);
        const Raster& lulc = s.raster("lulc");
        const Raster& ndvi = s.raster("ndvi");
        for (int y = 0; y < 64; ++y) {
            for (int x = 0; x < 64; ++x) {
                const int cls = static_cast<int>(lulc.at(0, y, x));
                REQUIRE(cls >= 0);
                REQUIRE(cls < kNumLulcClasses);
                if (cls == kForest) REQUIRE(ndvi.at(0, y, x) > 0.0);
                if (cls == kWater) REQUIRE(ndvi.at(0, y, x) < 0.0);
            }
        }
    }
}

TEST_CASE("all modalities share shape and captions are non-empty") {
    AlignedSample s = make_sample(4, 2, 64, 64);
    REQUIRE(s.rasters.size() == 5);
    for (const auto& [name, r] : s.rasters) {
        REQUIRE(r.height == 64);
        REQUIRE(r.width == 64);
    }
    REQUIRE_FALSE(s.caption.empty());
    REQUIRE(s.lat >= -90.0);
    REQUIRE(s.lat <= 90.0);
    REQUIRE(s.lon >= -180.0);
    REQUIRE(s.lon < 180.0);
}

TEST_CASE("dataset round trip is bit exact") {
    const fs::path dir = fs::temp_directory_path() / "geomm_test_ds";
    fs::remove_all(dir);
    std::vector<AlignedSample> samples;
    for (long i = 0; i < 3; ++i) samples.push_back(make_sample(11, i, 32, 32));
    DatasetManifest manifest;
    manifest.rng_seed = 11;
    manifest.tile_height = 32;
    manifest.tile_width = 32;
    manifest.modalities = default_image_modalities();
    write_dataset(samples, manifest, dir);

    DatasetReader reader = read_dataset(dir);
    REQUIRE(reader.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        AlignedSample back = reader.load(i);
        REQUIRE(back.sample_id == samples[i].sample_id);
        REQUIRE(back.caption == samples[i].caption);
        REQUIRE(back.lat == samples[i].lat);
        REQUIRE(back.lon == samples[i].lon);
        for (const auto& [name, r] : samples[i].rasters) REQUIRE(back.raster(name).v == r.v);
    }
    fs::remove_all(dir);
}

TEST_CASE("manifest version and corruption guards") {
    const fs::path dir = fs::temp_directory_path() / "geomm_test_guard";
    fs::remove_all(dir);
    std::vector<AlignedSample> samples{make_sample(5, 0, 32, 32)};
    DatasetManifest manifest;
    manifest.tile_height = 32;
    manifest.tile_width = 32;
    manifest.modalities = default_image_modalities();
    write_dataset(samples, manifest, dir);

    SECTION("unknown version rejected") {
        nlohmann::json text;
        {
            std::ifstream is(dir / "manifest.json");
            is >> text;
        }
        text["format_version"] = 999;
        std::ofstream(dir / "manifest.json") << text.dump();
        REQUIRE_THROWS_AS(read_dataset(dir), version_error);
    }
    SECTION("corrupted blob detected") {
        auto reader = read_dataset(dir);
        {
            std::fstream f(dir / samples[0].sample_id / "optical.raw",
                           std::ios::in | std::ios::out | std::ios::binary);
            f.seekp(10);
            f.put(0x7f);
        }
        REQUIRE_THROWS_AS(reader.load(0), corrupt_dataset_error);
    }
    SECTION("missing modality file detected") {
        auto reader = read_dataset(dir);
        fs::remove(dir / samples[0].sample_id / "radar.raw");
        REQUIRE_THROWS_AS(reader.load(0), incomplete_dataset_error);
    }
    fs::remove_all(dir);
}

TEST_CASE("100-sample dataset yields 100 unique ids") {
    const fs::path dir = fs::temp_directory_path() / "geomm_test_ids";
    fs::remove_all(dir);
    synthesize_dataset(77, 100, 32, 32, dir);
    auto reader = read_dataset(dir);
    REQUIRE(reader.size() == 100);
    std::set<std::string> ids;
    for (std::size_t i = 0; i < reader.size(); ++i)
        ids.insert(reader.manifest().samples[i].id);
    REQUIRE(ids.size() == 100);
    fs::remove_all(dir);
}

TEST_CASE("regions bias the surface statistics") {
    // arid region should carry less water+forest than tropical
    Raster terrain = generate_terrain(31, 64, 64);
    DeriveParams arid, tropical;
    arid.region_index = 0;
    tropical.region_index = 2;
    Rng r1(1), r2(1);
    AlignedSample a = derive_modalities(terrain, arid, r1, "a");
    AlignedSample t = derive_modalities(terrain, tropical, r2, "t");
    auto frac = [](const Raster& lulc, int cls) {
        double n = 0.0;
        for (double v : lulc.v) n += (static_cast<int>(v) == cls) ? 1.0 : 0.0;
        return n / static_cast<double>(lulc.v.size());
    };
    const double a_wet = frac(a.raster("lulc"), kWater) + frac(a.raster("lulc"), kForest);
    const double t_wet = frac(t.raster("lulc"), kWater) + frac(t.raster("lulc"), kForest);
    REQUIRE(t_wet > a_wet);
}
