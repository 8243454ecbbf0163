#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "geomm/common.hpp"

namespace geomm::text {

inline constexpr int kLatTokens = 721;   // -90.00 .. 90.00 in 0.25 deg steps
inline constexpr int kLonTokens = 1440;  // -180.00 .. 179.75

// Shared vocabulary for captions and geolocations. Layout: specials first,
// then the full coordinate grid, then corpus words, then single-character
// fallback pieces ("##x" continues a word, WordPiece style).
class TextVocab {
public:
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kUnk = 3;

    TextVocab() = default;

    static TextVocab build(const std::vector<std::string>& corpus, int max_subwords = 4096) {
        if (corpus.empty()) throw std::invalid_argument("TextVocab::build: empty corpus");
        TextVocab v;
        v.add("<pad>");
        v.add("<bos>");
        v.add("<eos>");
        v.add("<unk>");
        v.add("<caption>");
        v.add("<geolocation>");
        v.lat_base_ = static_cast<int>(v.tokens_.size());
        for (int i = 0; i < kLatTokens; ++i) v.add(lat_token_string(i));
        v.lon_base_ = static_cast<int>(v.tokens_.size());
        for (int i = 0; i < kLonTokens; ++i) v.add(lon_token_string(i));

        // word counts; ordering by (count desc, word asc) keeps the build
        // deterministic and independent of duplicate corpus lines' counts only
        // through ties, which the lexicographic key resolves
        std::map<std::string, long> counts;
        for (const auto& line : corpus)
            for (const auto& w : split_words(line)) counts[w] += 1;
        std::vector<std::pair<std::string, long>> by_freq(counts.begin(), counts.end());
        std::sort(by_freq.begin(), by_freq.end(), [](const auto& a, const auto& b) {
            return a.second != b.second ? a.second > b.second : a.first < b.first;
        });
        int budget = max_subwords;
        for (const auto& [w, _] : by_freq) {
            if (budget <= 0) break;
            if (!v.contains(w)) {
                v.add(w);
                --budget;
            }
        }
        // single-char pieces so any ASCII word can decompose
        for (char c = 'a'; c <= 'z'; ++c) {
            v.add_if_absent(std::string(1, c));
            v.add_if_absent("##" + std::string(1, c));
        }
        for (char c = '0'; c <= '9'; ++c) {
            v.add_if_absent(std::string(1, c));
            v.add_if_absent("##" + std::string(1, c));
        }
        return v;
    }

    int size() const { return static_cast<int>(tokens_.size()); }
    const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
    bool contains(const std::string& t) const { return ids_.count(t) > 0; }
    int id(const std::string& t) const {
        auto it = ids_.find(t);
        return it == ids_.end() ? kUnk : it->second;
    }

    int lat_base() const { return lat_base_; }
    int lon_base() const { return lon_base_; }
    bool is_lat(int tid) const { return tid >= lat_base_ && tid < lat_base_ + kLatTokens; }
    bool is_lon(int tid) const { return tid >= lon_base_ && tid < lon_base_ + kLonTokens; }

    // -- geolocation --------------------------------------------------------

    // Quarter-degree grid; ties round toward +inf; lon 180 wraps to -180.
    static int quantize_quarter(double v) { return static_cast<int>(std::floor(v * 4.0 + 0.5)); }

    std::vector<int> encode_geolocation(double lat, double lon) const {
        if (lat < -90.0 || lat > 90.0)
            throw std::invalid_argument("encode_geolocation: lat outside [-90, 90]");
        if (lon < -180.0 || lon >= 180.0)
            throw std::invalid_argument("encode_geolocation: lon outside [-180, 180)");
        const int qlat = quantize_quarter(lat);          // -360 .. 360
        int qlon = quantize_quarter(lon);                // -720 .. 720
        if (qlon == 720) qlon = -720;                    // antimeridian wrap
        return {lat_base_ + (qlat + 360), lon_base_ + (qlon + 720)};
    }

    std::pair<double, double> decode_geolocation(const std::vector<int>& ids) const {
        if (ids.size() != 2 || !is_lat(ids[0]) || !is_lon(ids[1]))
            throw std::invalid_argument(
                "decode_geolocation: expected [lat_token, lon_token]");
        const double lat = (ids[0] - lat_base_ - 360) * 0.25;
        const double lon = (ids[1] - lon_base_ - 720) * 0.25;
        return {lat, lon};
    }

    // -- text ----------------------------------------------------------------

    std::vector<int> encode_text(const std::string& s) const {
        std::vector<int> out{kBos};
        for (const auto& w : split_words(s)) {
            auto it = ids_.find(w);
            if (it != ids_.end()) {
                out.push_back(it->second);
                continue;
            }
            encode_pieces(w, out);
        }
        out.push_back(kEos);
        return out;
    }

    std::string decode_text(const std::vector<int>& ids) const {
        std::string out;
        for (int tid : ids) {
            if (tid == kBos || tid == kEos || tid == kPad) continue;
            if (tid < 0 || tid >= size())
                throw std::invalid_argument("decode_text: id outside vocabulary");
            const std::string& t = tokens_[static_cast<std::size_t>(tid)];
            if (t.size() > 2 && t[0] == '#' && t[1] == '#') {
                out += t.substr(2);
            } else {
                if (!out.empty()) out += ' ';
                out += t;
            }
        }
        return out;
    }

    // -- io -------------------------------------------------------------------

    void save(const std::filesystem::path& path) const {
        std::ofstream os(path);
        if (!os) throw error("TextVocab::save: cannot open " + path.string());
        for (int i = 0; i < size(); ++i) os << tokens_[static_cast<std::size_t>(i)] << '\t' << i << '\n';
    }

    static TextVocab load(const std::filesystem::path& path) {
        std::ifstream is(path);
        if (!is) throw error("TextVocab::load: cannot open " + path.string());
        TextVocab v;
        std::string line;
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            const auto tab = line.find('\t');
            if (tab == std::string::npos) throw error("TextVocab::load: malformed line");
            const std::string tok = line.substr(0, tab);
            const int id = std::stoi(line.substr(tab + 1));
            if (id != static_cast<int>(v.tokens_.size()))
                throw error("TextVocab::load: ids must be dense and ordered");
            v.add(tok);
        }
        v.lat_base_ = v.id(lat_token_string(0));
        v.lon_base_ = v.id(lon_token_string(0));
        if (v.lat_base_ == kUnk || v.lon_base_ == kUnk)
            throw error("TextVocab::load: coordinate tokens missing");
        return v;
    }

    static std::string lat_token_string(int index) {  // index 0 -> lat=-90.00
        char buf[32];
        double v = -90.0 + 0.25 * index;
        if (v == 0.0) v = 0.0;  // normalize -0
        std::snprintf(buf, sizeof(buf), "lat=%.2f", v);
        return buf;
    }
    static std::string lon_token_string(int index) {  // index 0 -> lon=-180.00
        char buf[32];
        double v = -180.0 + 0.25 * index;
        if (v == 0.0) v = 0.0;
        std::snprintf(buf, sizeof(buf), "lon=%.2f", v);
        return buf;
    }

    static std::vector<std::string> split_words(const std::string& s) {
        std::vector<std::string> out;
        std::istringstream is(s);
        std::string w;
        while (is >> w) out.push_back(w);
        return out;
    }

private:
    void add(const std::string& t) {
        ids_[t] = static_cast<int>(tokens_.size());
        tokens_.push_back(t);
    }
    void add_if_absent(const std::string& t) {
        if (!contains(t)) add(t);
    }

    // Greedy longest-match decomposition; unmatched characters become <unk>.
    void encode_pieces(const std::string& w, std::vector<int>& out) const {
        std::size_t pos = 0;
        bool first = true;
        while (pos < w.size()) {
            std::size_t len = w.size() - pos;
            int found = -1;
            for (; len >= 1; --len) {
                const std::string cand =
                    first ? w.substr(pos, len) : "##" + w.substr(pos, len);
                auto it = ids_.find(cand);
                if (it != ids_.end()) {
                    found = it->second;
                    break;
                }
            }
            if (found < 0) {
                out.push_back(kUnk);
                return;
            }
            out.push_back(found);
            pos += len;
            first = false;
        }
    }

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
    int lat_base_ = -1;
    int lon_base_ = -1;
};

}  // namespace geomm::text
