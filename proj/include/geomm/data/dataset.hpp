#pragma once

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <string>
#include <vector>

#include "geomm/common.hpp"
#include "geomm/data/modality.hpp"
#include "geomm/data/synth.hpp"

namespace geomm::data {

inline constexpr int kDatasetFormatVersion = 1;

struct SampleEntry {
    std::string id;
    double lat = 0.0, lon = 0.0;
    std::string caption;
    // modality name -> (byte length, fnv64 hex of the blob)
    std::map<std::string, std::pair<std::uint64_t, std::string>> files;
};

struct DatasetManifest {
    int version = kDatasetFormatVersion;
    std::string split = "train";
    std::uint64_t rng_seed = 0;
    int tile_height = 64, tile_width = 64;
    std::vector<ModalitySpec> modalities;
    std::vector<SampleEntry> samples;

    const ModalitySpec& modality(const std::string& name) const {
        for (const auto& m : modalities)
            if (m.name == name) return m;
        throw std::invalid_argument("DatasetManifest: unknown modality '" + name + "'");
    }
};

namespace detail {

inline std::vector<unsigned char> raster_bytes(const Raster& r) {
    std::vector<unsigned char> out(r.size() * 4);
    for (std::size_t i = 0; i < r.size(); ++i) {
        const float f = static_cast<float>(r.v[i]);
        std::memcpy(out.data() + 4 * i, &f, 4);
    }
    return out;
}

inline void write_file(const std::filesystem::path& p, const void* data, std::size_t n) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw error("cannot open for writing: " + p.string());
    os.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!os) throw error("write failed: " + p.string());
}

inline std::vector<unsigned char> read_file(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary | std::ios::ate);
    if (!is) throw incomplete_dataset_error("missing file: " + p.string());
    const auto n = static_cast<std::size_t>(is.tellg());
    std::vector<unsigned char> buf(n);
    is.seekg(0);
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
    if (!is) throw corrupt_dataset_error("short read: " + p.string());
    return buf;
}

}  // namespace detail

// Layout: <dir>/manifest.json plus <dir>/<sample_id>/<modality>.raw blobs
// (little-endian float32, C row-major [channel][row][col]) and caption.txt.
inline void write_dataset(const std::vector<AlignedSample>& samples, DatasetManifest& manifest,
                          const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    manifest.samples.clear();
    for (const auto& s : samples) {
        s.validate();
        SampleEntry e;
        e.id = s.sample_id;
        e.lat = s.lat;
        e.lon = s.lon;
        e.caption = s.caption;
        fs::create_directories(dir / s.sample_id);
        for (const auto& [name, r] : s.rasters) {
            const auto bytes = detail::raster_bytes(r);
            detail::write_file(dir / s.sample_id / (name + ".raw"), bytes.data(), bytes.size());
            e.files[name] = {bytes.size(), hex64(fnv1a64(bytes.data(), bytes.size()))};
        }
        detail::write_file(dir / s.sample_id / "caption.txt", s.caption.data(), s.caption.size());
        manifest.samples.push_back(std::move(e));
    }

    nlohmann::json j;
    j["format_version"] = manifest.version;
    j["split"] = manifest.split;
    j["rng_seed"] = manifest.rng_seed;
    j["tile_height"] = manifest.tile_height;
    j["tile_width"] = manifest.tile_width;
    j["modalities"] = nlohmann::json::array();
    for (const auto& m : manifest.modalities) j["modalities"].push_back(modality_to_json(m));
    j["samples"] = nlohmann::json::array();
    for (const auto& e : manifest.samples) {
        nlohmann::json js{{"id", e.id}, {"lat", e.lat}, {"lon", e.lon}, {"caption", e.caption}};
        js["files"] = nlohmann::json::object();
        for (const auto& [name, bc] : e.files)
            js["files"][name] = {{"bytes", bc.first}, {"fnv64", bc.second}};
        j["samples"].push_back(std::move(js));
    }
    const std::string text = j.dump(2);
    detail::write_file(dir / "manifest.json", text.data(), text.size());
}

inline DatasetManifest read_manifest(const std::filesystem::path& dir) {
    const auto buf = detail::read_file(dir / "manifest.json");
    nlohmann::json j = nlohmann::json::parse(buf.begin(), buf.end());
    if (j.at("format_version").get<int>() != kDatasetFormatVersion)
        throw version_error("dataset manifest has unsupported format_version");
    DatasetManifest m;
    m.version = j.at("format_version").get<int>();
    m.split = j.at("split").get<std::string>();
    m.rng_seed = j.at("rng_seed").get<std::uint64_t>();
    m.tile_height = j.at("tile_height").get<int>();
    m.tile_width = j.at("tile_width").get<int>();
    for (const auto& mj : j.at("modalities")) m.modalities.push_back(modality_from_json(mj));
    for (const auto& sj : j.at("samples")) {
        SampleEntry e;
        e.id = sj.at("id").get<std::string>();
        e.lat = sj.at("lat").get<double>();
        e.lon = sj.at("lon").get<double>();
        e.caption = sj.at("caption").get<std::string>();
        for (auto it = sj.at("files").begin(); it != sj.at("files").end(); ++it)
            e.files[it.key()] = {it.value().at("bytes").get<std::uint64_t>(),
                                 it.value().at("fnv64").get<std::string>()};
        m.samples.push_back(std::move(e));
    }
    return m;
}

// Sequential reader; order follows the manifest. Samples are verified
// (byte length and checksum) as they are loaded.
class DatasetReader {
public:
    DatasetReader(std::filesystem::path dir, DatasetManifest manifest)
        : dir_(std::move(dir)), manifest_(std::move(manifest)) {}

    const DatasetManifest& manifest() const { return manifest_; }
    std::size_t size() const { return manifest_.samples.size(); }

    AlignedSample load(std::size_t index) const {
        const SampleEntry& e = manifest_.samples.at(index);
        AlignedSample s;
        s.sample_id = e.id;
        s.lat = e.lat;
        s.lon = e.lon;
        s.caption = e.caption;
        for (const auto& [name, bc] : e.files) {
            const auto buf = detail::read_file(dir_ / e.id / (name + ".raw"));
            if (buf.size() != bc.first)
                throw corrupt_dataset_error("byte length mismatch for " + e.id + "/" + name);
            if (hex64(fnv1a64(buf.data(), buf.size())) != bc.second)
                throw corrupt_dataset_error("checksum mismatch for " + e.id + "/" + name);
            if (name == "caption.txt") continue;
            const ModalitySpec& spec = manifest_.modality(name);
            Raster r(spec.channels, manifest_.tile_height, manifest_.tile_width);
            if (buf.size() != r.size() * 4)
                throw corrupt_dataset_error("blob size does not match declared shape: " + name);
            for (std::size_t i = 0; i < r.size(); ++i) {
                float f;
                std::memcpy(&f, buf.data() + 4 * i, 4);
                r.v[i] = static_cast<double>(f);
            }
            s.rasters[name] = std::move(r);
        }
        return s;
    }

private:
    std::filesystem::path dir_;
    DatasetManifest manifest_;
};

inline DatasetReader read_dataset(const std::filesystem::path& dir) {
    return DatasetReader(dir, read_manifest(dir));
}

// Generates and writes a split in one pass.
inline DatasetManifest synthesize_dataset(std::uint64_t seed, long n_samples, int height,
                                          int width, const std::filesystem::path& dir,
                                          const std::string& split = "train",
                                          const DeriveParams& params = {}) {
    std::vector<AlignedSample> samples;
    samples.reserve(static_cast<std::size_t>(n_samples));
    for (long i = 0; i < n_samples; ++i)
        samples.push_back(make_sample(seed, i, height, width, params));
    DatasetManifest manifest;
    manifest.split = split;
    manifest.rng_seed = seed;
    manifest.tile_height = height;
    manifest.tile_width = width;
    manifest.modalities = default_image_modalities();
    write_dataset(samples, manifest, dir);
    return manifest;
}

}  // namespace geomm::data
