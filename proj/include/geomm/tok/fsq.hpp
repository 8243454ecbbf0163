#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "geomm/tensor.hpp"

namespace geomm::tok {

struct FsqConfig {
    std::vector<int> levels{8, 8, 8, 6, 5};
    int latent_dim = 5;
    bool unit_sphere_normalize = false;
    double ema_decay = 0.99;

    long codebook_size() const {
        long n = 1;
        for (int l : levels) n *= l;
        return n;
    }
    void validate() const {
        if (latent_dim != static_cast<int>(levels.size()))
            throw std::invalid_argument("FsqConfig: latent_dim must equal len(levels)");
        for (int l : levels)
            if (l < 2) throw std::invalid_argument("FsqConfig: every level must be >= 2");
        if (!(ema_decay > 0.0 && ema_decay <= 1.0))
            throw std::invalid_argument("FsqConfig: ema_decay must be in (0, 1]");
    }
};

// Bound dimension i to [-(L_i-1)/2, (L_i-1)/2] via a scaled tanh.
inline std::vector<double> fsq_bound(const std::vector<double>& z, const std::vector<int>& levels) {
    if (z.size() != levels.size())
        throw std::invalid_argument("fsq_bound: dimension mismatch");
    std::vector<double> out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i)
        out[i] = 0.5 * (levels[i] - 1) * std::tanh(z[i]);
    return out;
}

// Round half toward +inf, matching the straight-through tape op.
inline double round_half_up(double v) { return std::floor(v + 0.5); }

// Quantize: round the bounded vector; codes are shifted to {0..L_i-1}.
inline std::pair<std::vector<double>, std::vector<int>> fsq_quantize(
    const std::vector<double>& z, const std::vector<int>& levels) {
    const auto bounded = fsq_bound(z, levels);
    std::vector<double> q(z.size());
    std::vector<int> codes(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        q[i] = round_half_up(bounded[i]);
        codes[i] = static_cast<int>(q[i]) + (levels[i] - 1) / 2;
    }
    return {q, codes};
}

// Mixed-radix bijection; the first dimension is least significant.
inline long codes_to_index(const std::vector<int>& codes, const std::vector<int>& levels) {
    if (codes.size() != levels.size())
        throw std::invalid_argument("codes_to_index: dimension mismatch");
    long id = 0, stride = 1;
    for (std::size_t i = 0; i < codes.size(); ++i) {
        if (codes[i] < 0 || codes[i] >= levels[i])
            throw std::invalid_argument("codes_to_index: code out of range");
        id += codes[i] * stride;
        stride *= levels[i];
    }
    return id;
}

inline std::vector<int> index_to_codes(long id, const std::vector<int>& levels) {
    long total = 1;
    for (int l : levels) total *= l;
    if (id < 0 || id >= total) throw std::invalid_argument("index_to_codes: id out of range");
    std::vector<int> codes(levels.size());
    for (std::size_t i = 0; i < levels.size(); ++i) {
        codes[i] = static_cast<int>(id % levels[i]);
        id /= levels[i];
    }
    return codes;
}

// Centered quantized vector for a code tuple (the value fsq_quantize would
// produce); used when decoding from token ids.
inline std::vector<double> codes_to_quantized(const std::vector<int>& codes,
                                              const std::vector<int>& levels) {
    std::vector<double> q(codes.size());
    for (std::size_t i = 0; i < codes.size(); ++i)
        q[i] = static_cast<double>(codes[i] - (levels[i] - 1) / 2);
    return q;
}

// Exponential-moving-average code usage histogram. The histogram of each
// batch is normalized to sum 1 before folding in, so the statistics stay a
// (leaky) probability vector.
struct UsageEma {
    std::vector<double> usage;
    double decay = 0.99;

    void init(long codebook_size, double d) {
        usage.assign(static_cast<std::size_t>(codebook_size), 0.0);
        decay = d;
    }
    void update(const std::vector<long>& ids) {
        if (ids.empty()) return;
        const double w = (1.0 - decay) / static_cast<double>(ids.size());
        for (auto& u : usage) u *= decay;
        for (long id : ids) usage[static_cast<std::size_t>(id)] += w;
    }
    double sum() const { return std::accumulate(usage.begin(), usage.end(), 0.0); }
    double active_fraction(double threshold = 1e-6) const {
        if (usage.empty()) return 0.0;
        long n = 0;
        for (double u : usage)
            if (u > threshold) ++n;
        return static_cast<double>(n) / static_cast<double>(usage.size());
    }
};

enum class QuantizerKind { fsq, vq };

inline std::string quantizer_kind_name(QuantizerKind k) {
    return k == QuantizerKind::fsq ? "fsq" : "vq";
}
inline QuantizerKind quantizer_kind_from(const std::string& s) {
    if (s == "fsq") return QuantizerKind::fsq;
    if (s == "vq") return QuantizerKind::vq;
    throw std::invalid_argument("unknown quantizer kind: " + s);
}

// Quantizer with two interchangeable backends. FSQ has no learned state;
// VQ carries a learned codebook updated through the commitment objective.
// Both emit ids in [0, codebook_size) and a quantized latent row per input.
struct Quantizer {
    QuantizerKind kind = QuantizerKind::fsq;
    FsqConfig fsq;
    nn::Tensor vq_codebook;  // codebook_size x latent_dim (vq only)
    UsageEma ema;

    long codebook_size() const {
        return kind == QuantizerKind::fsq ? fsq.codebook_size() : vq_codebook.rows();
    }
    int latent_dim() const { return fsq.latent_dim; }

    // Training path. Returns the quantized latents (on tape, gradients flow
    // straight through to z) plus token ids; for VQ also returns the
    // codebook/commitment auxiliary loss.
    struct Result {
        nn::Tensor quantized;
        std::vector<long> ids;
        nn::Tensor aux_loss;  // undefined for fsq
    };

    Result quantize_tape(nn::Tape& tape, const nn::Tensor& z) const {
        Result res;
        if (kind == QuantizerKind::fsq) {
            std::vector<double> scale(fsq.levels.size());
            for (std::size_t i = 0; i < fsq.levels.size(); ++i)
                scale[i] = 0.5 * (fsq.levels[i] - 1);
            nn::Tensor bounded = tape.colscale_tanh(z, scale);
            res.quantized = tape.ste_round(bounded);
            res.ids.reserve(static_cast<std::size_t>(z.rows()));
            for (Eigen::Index r = 0; r < z.rows(); ++r) {
                std::vector<int> codes(fsq.levels.size());
                for (std::size_t i = 0; i < fsq.levels.size(); ++i)
                    codes[i] = static_cast<int>(res.quantized.value()(r, static_cast<Eigen::Index>(i))) +
                               (fsq.levels[i] - 1) / 2;
                res.ids.push_back(codes_to_index(codes, fsq.levels));
            }
        } else {
            // nearest codebook row per latent; straight-through estimator
            const auto& cb = vq_codebook.value();
            nn::Mat sel(z.rows(), z.cols());
            res.ids.reserve(static_cast<std::size_t>(z.rows()));
            for (Eigen::Index r = 0; r < z.rows(); ++r) {
                Eigen::Index best = 0;
                double best_d = (cb.row(0) - z.value().row(r)).squaredNorm();
                for (Eigen::Index k = 1; k < cb.rows(); ++k) {
                    const double d = (cb.row(k) - z.value().row(r)).squaredNorm();
                    if (d < best_d) {
                        best_d = d;
                        best = k;
                    }
                }
                sel.row(r) = cb.row(best);
                res.ids.push_back(static_cast<long>(best));
            }
            // quantized = z + stopgrad(e - z): identity gradient to z
            nn::Tensor e = tape.gather_rows(vq_codebook, std::vector<int>(res.ids.begin(), res.ids.end()));
            res.quantized = straight_through(tape, z, sel);
            // codebook loss ||sg(z) - e||^2 + 0.25 ||z - sg(e)||^2
            nn::Tensor cb_loss = tape.mse_mean(e, z.value());
            nn::Tensor commit = tape.mse_mean(z, sel);
            res.aux_loss = tape.add_scalar_mul(cb_loss, commit, 0.25);
        }
        return res;
    }

    // Inference path, no tape.
    std::vector<long> encode_rows(const nn::Mat& z) const {
        std::vector<long> ids;
        ids.reserve(static_cast<std::size_t>(z.rows()));
        if (kind == QuantizerKind::fsq) {
            for (Eigen::Index r = 0; r < z.rows(); ++r) {
                std::vector<double> row(z.cols());
                for (Eigen::Index c = 0; c < z.cols(); ++c) row[static_cast<std::size_t>(c)] = z(r, c);
                ids.push_back(codes_to_index(fsq_quantize(row, fsq.levels).second, fsq.levels));
            }
        } else {
            const auto& cb = vq_codebook.value();
            for (Eigen::Index r = 0; r < z.rows(); ++r) {
                Eigen::Index best = 0;
                double best_d = (cb.row(0) - z.row(r)).squaredNorm();
                for (Eigen::Index k = 1; k < cb.rows(); ++k) {
                    const double d = (cb.row(k) - z.row(r)).squaredNorm();
                    if (d < best_d) {
                        best_d = d;
                        best = k;
                    }
                }
                ids.push_back(static_cast<long>(best));
            }
        }
        return ids;
    }

    // Latent row for a token id (decoder conditioning from ids alone).
    std::vector<double> id_to_latent(long id) const {
        if (id < 0 || id >= codebook_size())
            throw std::invalid_argument("Quantizer: token id out of range");
        if (kind == QuantizerKind::fsq)
            return codes_to_quantized(index_to_codes(id, fsq.levels), fsq.levels);
        std::vector<double> row(static_cast<std::size_t>(vq_codebook.cols()));
        for (Eigen::Index c = 0; c < vq_codebook.cols(); ++c)
            row[static_cast<std::size_t>(c)] = vq_codebook.value()(id, c);
        return row;
    }

private:
    // straight-through: value of sel, gradient of z
    static nn::Tensor straight_through(nn::Tape& tape, const nn::Tensor& z, const nn::Mat& sel) {
        nn::Tensor delta(nn::Mat(sel - z.value()), false);
        return tape.add(z, delta);
    }
};

}  // namespace geomm::tok
