#include <catch2/catch_amalgamated.hpp>
#include <filesystem>

#include "geomm/data/synth.hpp"
#include "geomm/text/vocab.hpp"

using geomm::text::TextVocab;
namespace fs = std::filesystem;

TEST_CASE("vocab contains corpus words, specials, and all coordinate tokens") {
    TextVocab v = TextVocab::build({"water near field"});
    REQUIRE(v.contains("water"));
    REQUIRE(v.contains("near"));
    REQUIRE(v.contains("field"));
    REQUIRE(v.contains("<pad>"));
    REQUIRE(v.contains("<bos>"));
    REQUIRE(v.contains("<eos>"));
    REQUIRE(v.contains("<unk>"));
    REQUIRE(v.contains("<caption>"));
    REQUIRE(v.contains("<geolocation>"));

    int lat_count = 0, lon_count = 0;
    for (int i = 0; i < v.size(); ++i) {
        if (v.token(i).rfind("lat=", 0) == 0) ++lat_count;
        if (v.token(i).rfind("lon=", 0) == 0) ++lon_count;
    }
    REQUIRE(lat_count == 721);
    REQUIRE(lon_count == 1440);
    REQUIRE(v.contains("lat=-90.00"));
    REQUIRE(v.contains("lat=90.00"));
    REQUIRE(v.contains("lon=-180.00"));
    REQUIRE(v.contains("lon=179.75"));
    REQUIRE_FALSE(v.contains("lon=180.00"));
}

TEST_CASE("duplicate corpus lines give identical vocab") {
    TextVocab a = TextVocab::build({"alpha beta", "gamma"});
    TextVocab b = TextVocab::build({"alpha beta", "gamma", "alpha beta", "gamma"});
    REQUIRE(a.size() == b.size());
    for (int i = 0; i < a.size(); ++i) REQUIRE(a.token(i) == b.token(i));
}

TEST_CASE("empty corpus rejected") {
    REQUIRE_THROWS_AS(TextVocab::build({}), std::invalid_argument);
}

TEST_CASE("max_subwords caps the word list; rare words decompose to pieces") {
    TextVocab v = TextVocab::build({"aa bb cc dd", "aa bb cc", "aa bb", "aa"}, 2);
    REQUIRE(v.contains("aa"));
    REQUIRE(v.contains("bb"));
    REQUIRE_FALSE(v.contains("cc"));
    auto ids = v.encode_text("cc");
    REQUIRE(ids.size() >= 3);  // bos + pieces + eos
    REQUIRE(v.decode_text(ids) == "cc");
}

TEST_CASE("geolocation encoding at fixed points") {
    TextVocab v = TextVocab::build({"x"});
    SECTION("origin") {
        auto ids = v.encode_geolocation(0.0, 0.0);
        REQUIRE(v.token(ids[0]) == "lat=0.00");
        REQUIRE(v.token(ids[1]) == "lon=0.00");
    }
    SECTION("nearest quarter degree") {
        auto ids = v.encode_geolocation(52.52, 13.405);
        REQUIRE(v.token(ids[0]) == "lat=52.50");
        REQUIRE(v.token(ids[1]) == "lon=13.50");
    }
    SECTION("tie rounds toward +inf") {
        auto ids = v.encode_geolocation(13.375, 0.0);
        REQUIRE(v.token(ids[0]) == "lat=13.50");
    }
    SECTION("order is lat then lon") {
        auto ids = v.encode_geolocation(10.0, 20.0);
        REQUIRE(v.is_lat(ids[0]));
        REQUIRE(v.is_lon(ids[1]));
    }
    SECTION("poles and antimeridian") {
        auto ids = v.encode_geolocation(90.0, -180.0);
        REQUIRE(v.token(ids[0]) == "lat=90.00");
        REQUIRE(v.token(ids[1]) == "lon=-180.00");
        auto wrap = v.encode_geolocation(0.0, 179.9);
        REQUIRE(v.token(wrap[1]) == "lon=-180.00");
    }
    SECTION("out of range rejected") {
        REQUIRE_THROWS_AS(v.encode_geolocation(91.0, 0.0), std::invalid_argument);
        REQUIRE_THROWS_AS(v.encode_geolocation(0.0, 180.0), std::invalid_argument);
    }
}

TEST_CASE("geolocation round trip within an eighth degree") {
    TextVocab v = TextVocab::build({"x"});
    geomm::Rng rng(5);
    for (int i = 0; i < 500; ++i) {
        const double lat = rng.uniform(-90.0, 90.0);
        const double lon = rng.uniform(-180.0, 180.0);
        auto [lat2, lon2] = v.decode_geolocation(v.encode_geolocation(lat, lon));
        REQUIRE(std::abs(lat2 - lat) <= 0.125 + 1e-12);
        // lon may wrap across the antimeridian
        const double dlon = std::min(std::abs(lon2 - lon), 360.0 - std::abs(lon2 - lon));
        REQUIRE(dlon <= 0.125 + 1e-12);
    }
}

TEST_CASE("text encoding basics") {
    TextVocab v = TextVocab::build({"water water field"});
    SECTION("empty string is bos eos") {
        auto ids = v.encode_text("");
        REQUIRE(ids == std::vector<int>{TextVocab::kBos, TextVocab::kEos});
    }
    SECTION("repetition emits identical ids") {
        auto ids = v.encode_text("water water");
        REQUIRE(ids.size() == 4);
        REQUIRE(ids[0] == TextVocab::kBos);
        REQUIRE(ids[1] == ids[2]);
        REQUIRE(ids[3] == TextVocab::kEos);
    }
    SECTION("ids always in range") {
        for (int tid : v.encode_text("water unknownword zz9!")) {
            REQUIRE(tid >= 0);
            REQUIRE(tid < v.size());
        }
    }
}

TEST_CASE("generated captions round trip exactly") {
    std::vector<std::string> corpus;
    for (long i = 0; i < 60; ++i) corpus.push_back(geomm::data::make_sample(123, i, 32, 32).caption);
    TextVocab v = TextVocab::build(corpus);
    for (long i = 0; i < 40; ++i) {
        const std::string caption = geomm::data::make_sample(321, i + 100, 32, 32).caption;
        REQUIRE(v.decode_text(v.encode_text(caption)) == caption);
    }
}

TEST_CASE("vocab file round trip") {
    TextVocab v = TextVocab::build({"hello world"});
    const fs::path p = fs::temp_directory_path() / "geomm_vocab.tsv";
    v.save(p);
    TextVocab w = TextVocab::load(p);
    REQUIRE(w.size() == v.size());
    for (int i = 0; i < v.size(); ++i) REQUIRE(w.token(i) == v.token(i));
    REQUIRE(w.encode_geolocation(1.0, 2.0) == v.encode_geolocation(1.0, 2.0));
    fs::remove(p);
}
