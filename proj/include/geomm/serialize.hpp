#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "geomm/common.hpp"
#include "geomm/nn.hpp"

namespace geomm {

// Self-describing checkpoint container:
//   magic "GMCK" | u32 version | u64 json_len | json | f64le tensor blobs | u64 fnv64
// The json lists tensor names/shapes in blob order plus arbitrary metadata.
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <class T>
void put(std::string& buf, const T& v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf.append(p, sizeof(T));
}

template <class T>
T take(const std::vector<unsigned char>& buf, std::size_t& pos) {
    if (pos + sizeof(T) > buf.size()) throw version_error("checkpoint: truncated file");
    T v;
    std::memcpy(&v, buf.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, nlohmann::json meta,
                            const nn::ParamMap& params) {
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& [name, t] : params.items)
        tensors.push_back({{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}});
    meta["tensors"] = std::move(tensors);
    meta["checkpoint_version"] = kCheckpointVersion;
    const std::string js = meta.dump();

    std::string buf;
    buf.append("GMCK", 4);
    detail::put(buf, kCheckpointVersion);
    detail::put(buf, static_cast<std::uint64_t>(js.size()));
    buf.append(js);
    for (const auto& [name, t] : params.items)
        buf.append(reinterpret_cast<const char*>(t.value().data()),
                   static_cast<std::size_t>(t.value().size()) * sizeof(double));
    const std::uint64_t digest = fnv1a64(buf.data(), buf.size());
    detail::put(buf, digest);

    std::ofstream os(path, std::ios::binary);
    if (!os) throw error("save_checkpoint: cannot open " + path.string());
    os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!os) throw error("save_checkpoint: write failed: " + path.string());
}

struct Checkpoint {
    nlohmann::json meta;
    std::vector<std::pair<std::string, nn::Mat>> tensors;

    const nn::Mat& tensor(const std::string& name) const {
        for (const auto& [n, m] : tensors)
            if (n == name) return m;
        throw error("checkpoint: missing tensor '" + name + "'");
    }
};

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary | std::ios::ate);
    if (!is) throw missing_input_error("load_checkpoint: cannot open " + path.string());
    const auto n = static_cast<std::size_t>(is.tellg());
    std::vector<unsigned char> buf(n);
    is.seekg(0);
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
    if (!is || n < 24) throw version_error("load_checkpoint: truncated file");

    std::uint64_t stored;
    std::memcpy(&stored, buf.data() + n - 8, 8);
    if (fnv1a64(buf.data(), n - 8) != stored)
        throw corrupt_dataset_error("load_checkpoint: checksum mismatch");

    std::size_t pos = 0;
    if (std::memcmp(buf.data(), "GMCK", 4) != 0)
        throw version_error("load_checkpoint: bad magic");
    pos = 4;
    const auto version = detail::take<std::uint32_t>(buf, pos);
    if (version != kCheckpointVersion)
        throw version_error("load_checkpoint: unsupported checkpoint version");
    const auto json_len = detail::take<std::uint64_t>(buf, pos);
    if (pos + json_len > n - 8) throw version_error("load_checkpoint: truncated json");
    Checkpoint ck;
    ck.meta = nlohmann::json::parse(buf.begin() + static_cast<long>(pos),
                                    buf.begin() + static_cast<long>(pos + json_len));
    pos += json_len;
    for (const auto& tj : ck.meta.at("tensors")) {
        const auto rows = tj.at("rows").get<Eigen::Index>();
        const auto cols = tj.at("cols").get<Eigen::Index>();
        nn::Mat m(rows, cols);
        const std::size_t bytes = static_cast<std::size_t>(rows * cols) * sizeof(double);
        if (pos + bytes > n - 8) throw version_error("load_checkpoint: truncated tensor data");
        std::memcpy(m.data(), buf.data() + pos, bytes);
        pos += bytes;
        ck.tensors.emplace_back(tj.at("name").get<std::string>(), std::move(m));
    }
    return ck;
}

// Copies checkpoint tensors into a live parameter map, matching by name.
inline void assign_params(nn::ParamMap& params, const Checkpoint& ck) {
    for (auto& [name, t] : params.items) {
        const nn::Mat& src = ck.tensor(name);
        if (src.rows() != t.rows() || src.cols() != t.cols())
            throw version_error("checkpoint: shape mismatch for '" + name + "'");
        t.value() = src;
    }
}

}  // namespace geomm
