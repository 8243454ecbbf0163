#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "geomm/rng.hpp"
#include "geomm/tensor.hpp"

namespace geomm::nn {

// Named parameter list; order is the serialization order.
struct ParamMap {
    std::vector<std::pair<std::string, Tensor>> items;

    void add(const std::string& name, const Tensor& t) { items.emplace_back(name, t); }
    std::vector<Tensor> tensors() const {
        std::vector<Tensor> out;
        out.reserve(items.size());
        for (const auto& [_, t] : items) out.push_back(t);
        return out;
    }
};

inline Tensor param_normal(Rng& rng, Eigen::Index r, Eigen::Index c, double std_dev,
                           bool sparse = false) {
    Mat m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = std_dev * rng.gaussian();
    Tensor t(std::move(m), true);
    t.node()->sparse_grad = sparse;
    return t;
}

inline Tensor param_zeros(Eigen::Index r, Eigen::Index c) {
    return Tensor(Mat::Zero(r, c), true);
}

inline Tensor param_const(Eigen::Index r, Eigen::Index c, double v) {
    return Tensor(Mat::Constant(r, c, v), true);
}

struct Linear {
    Tensor w;  // in x out
    Tensor b;  // 1 x out

    void init(Rng& rng, Eigen::Index in, Eigen::Index out, double std_dev = -1.0) {
        if (std_dev < 0.0) std_dev = 1.0 / std::sqrt(static_cast<double>(in));
        w = param_normal(rng, in, out, std_dev);
        b = param_zeros(1, out);
    }
    Tensor operator()(Tape& tape, const Tensor& x) const {
        return tape.add_rowvec(tape.matmul(x, w), b);
    }
    void collect(ParamMap& p, const std::string& prefix) const {
        p.add(prefix + ".w", w);
        p.add(prefix + ".b", b);
    }
};

struct LayerNorm {
    Tensor gain, bias;

    void init(Eigen::Index dim) {
        gain = param_const(1, dim, 1.0);
        bias = param_zeros(1, dim);
    }
    Tensor operator()(Tape& tape, const Tensor& x) const { return tape.layernorm(x, gain, bias); }
    void collect(ParamMap& p, const std::string& prefix) const {
        p.add(prefix + ".gain", gain);
        p.add(prefix + ".bias", bias);
    }
};

// Multi-head attention. Queries come from x; keys/values from memory (equal
// to x for self-attention). `mask` is an additive bias on the score matrix.
struct Attention {
    Linear q, k, v, proj;
    int heads = 1;

    void init(Rng& rng, Eigen::Index dim, int n_heads) {
        heads = n_heads;
        q.init(rng, dim, dim);
        k.init(rng, dim, dim);
        v.init(rng, dim, dim);
        proj.init(rng, dim, dim);
    }

    Tensor operator()(Tape& tape, const Tensor& x, const Tensor& memory,
                      const Mat* mask = nullptr) const {
        const Eigen::Index dim = q.w.cols();
        const Eigen::Index dh = dim / heads;
        Tensor qq = q(tape, x), kk = k(tape, memory), vv = v(tape, memory);
        std::vector<Tensor> outs;
        outs.reserve(static_cast<std::size_t>(heads));
        const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
        for (int h = 0; h < heads; ++h) {
            Tensor qh = tape.slice_cols(qq, h * dh, dh);
            Tensor kh = tape.slice_cols(kk, h * dh, dh);
            Tensor vh = tape.slice_cols(vv, h * dh, dh);
            Tensor scores = tape.mul_scalar(tape.matmul_nt(qh, kh), scale);
            Tensor probs = tape.softmax_rows(scores, mask);
            outs.push_back(tape.matmul(probs, vh));
        }
        return proj(tape, tape.concat_cols(outs));
    }

    void collect(ParamMap& p, const std::string& prefix) const {
        q.collect(p, prefix + ".q");
        k.collect(p, prefix + ".k");
        v.collect(p, prefix + ".v");
        proj.collect(p, prefix + ".proj");
    }
};

// Pre-LN transformer encoder block.
struct EncoderBlock {
    LayerNorm ln1, ln2;
    Attention attn;
    Linear fc1, fc2;

    void init(Rng& rng, Eigen::Index dim, int heads, Eigen::Index hidden) {
        ln1.init(dim);
        ln2.init(dim);
        attn.init(rng, dim, heads);
        fc1.init(rng, dim, hidden);
        fc2.init(rng, hidden, dim);
    }
    Tensor operator()(Tape& tape, const Tensor& x, const Mat* mask = nullptr) const {
        Tensor h = ln1(tape, x);
        Tensor y = tape.add(x, attn(tape, h, h, mask));
        Tensor m = fc2(tape, tape.gelu(fc1(tape, ln2(tape, y))));
        return tape.add(y, m);
    }
    void collect(ParamMap& p, const std::string& prefix) const {
        ln1.collect(p, prefix + ".ln1");
        attn.collect(p, prefix + ".attn");
        ln2.collect(p, prefix + ".ln2");
        fc1.collect(p, prefix + ".fc1");
        fc2.collect(p, prefix + ".fc2");
    }
};

// Pre-LN decoder block: self-attention over queries (optionally causal), then
// cross-attention into the encoder output, then the MLP.
struct DecoderBlock {
    LayerNorm ln1, lnx, ln2;
    Attention self_attn, cross_attn;
    Linear fc1, fc2;

    void init(Rng& rng, Eigen::Index dim, int heads, Eigen::Index hidden) {
        ln1.init(dim);
        lnx.init(dim);
        ln2.init(dim);
        self_attn.init(rng, dim, heads);
        cross_attn.init(rng, dim, heads);
        fc1.init(rng, dim, hidden);
        fc2.init(rng, hidden, dim);
    }
    Tensor operator()(Tape& tape, const Tensor& x, const Tensor& memory,
                      const Mat* self_mask = nullptr) const {
        Tensor h = ln1(tape, x);
        Tensor y = tape.add(x, self_attn(tape, h, h, self_mask));
        if (memory.defined() && memory.rows() > 0) {
            Tensor hx = lnx(tape, y);
            y = tape.add(y, cross_attn(tape, hx, memory));
        }
        Tensor m = fc2(tape, tape.gelu(fc1(tape, ln2(tape, y))));
        return tape.add(y, m);
    }
    void collect(ParamMap& p, const std::string& prefix) const {
        ln1.collect(p, prefix + ".ln1");
        self_attn.collect(p, prefix + ".self");
        lnx.collect(p, prefix + ".lnx");
        cross_attn.collect(p, prefix + ".cross");
        ln2.collect(p, prefix + ".ln2");
        fc1.collect(p, prefix + ".fc1");
        fc2.collect(p, prefix + ".fc2");
    }
};

// AdamW. Embedding tables (sparse_grad tensors) skip weight decay and update
// only rows that have ever received gradient, which is exactly equivalent to
// the dense update because untouched rows have zero grad and zero moments.
class AdamW {
public:
    struct Settings {
        double lr = 1e-3;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double weight_decay = 0.0;
        double clip_norm = 0.0;  // 0 disables clipping
    };

    AdamW(std::vector<Tensor> params, Settings s) : params_(std::move(params)), s_(s) {
        states_.resize(params_.size());
        for (std::size_t i = 0; i < params_.size(); ++i) {
            states_[i].m = Mat::Zero(params_[i].rows(), params_[i].cols());
            states_[i].v = Mat::Zero(params_[i].rows(), params_[i].cols());
        }
    }

    void zero_grad() {
        for (auto& p : params_) {
            auto n = p.node();
            if (n->grad.size() == 0) continue;
            if (n->sparse_grad && !n->dense_touch) {
                for (int r : n->touched_rows) n->grad.row(r).setZero();
            } else {
                n->grad.setZero();
            }
            n->touched_rows.clear();
            n->dense_touch = false;
        }
    }

    // Returns the pre-clip global gradient norm.
    double step() {
        ++t_;
        double sq = 0.0;
        for (auto& p : params_) {
            auto n = p.node();
            if (n->grad.size() == 0) continue;
            if (n->sparse_grad && !n->dense_touch) {
                for (int r : dedup(n->touched_rows)) sq += n->grad.row(r).squaredNorm();
            } else {
                sq += n->grad.squaredNorm();
            }
        }
        const double norm = std::sqrt(sq);
        const double scale =
            (s_.clip_norm > 0.0 && norm > s_.clip_norm) ? s_.clip_norm / norm : 1.0;

        const double bc1 = 1.0 - std::pow(s_.beta1, t_);
        const double bc2 = 1.0 - std::pow(s_.beta2, t_);
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto n = params_[i].node();
            auto& st = states_[i];
            if (n->sparse_grad) {
                if (n->grad.size() == 0) continue;
                if (n->dense_touch) {
                    merge_all_rows(st, static_cast<int>(n->value.rows()));
                } else {
                    for (int r : dedup(n->touched_rows)) st.ever.insert(r);
                }
                for (int r : st.ever) update_row(n, st, r, scale, bc1, bc2, 0.0);
            } else {
                if (n->grad.size() == 0) n->ensure_grad();
                st.m = s_.beta1 * st.m + (1.0 - s_.beta1) * scale * n->grad;
                st.v.array() = s_.beta2 * st.v.array() +
                               (1.0 - s_.beta2) * (scale * n->grad.array()).square();
                const double wd = decay_applies(params_[i]) ? s_.weight_decay : 0.0;
                n->value.array() -=
                    s_.lr * ((st.m.array() / bc1) / ((st.v.array() / bc2).sqrt() + s_.eps) +
                             wd * n->value.array());
            }
        }
        return norm;
    }

    void set_lr(double lr) { s_.lr = lr; }
    double lr() const { return s_.lr; }
    long step_count() const { return t_; }

    // Serialization hooks for exact resume.
    struct StateBlob {
        long t;
        std::vector<Mat> m, v;
        std::vector<std::vector<int>> ever;
    };
    StateBlob save_state() const {
        StateBlob b;
        b.t = t_;
        for (const auto& st : states_) {
            b.m.push_back(st.m);
            b.v.push_back(st.v);
            b.ever.emplace_back(st.ever.begin(), st.ever.end());
        }
        return b;
    }
    void load_state(const StateBlob& b) {
        t_ = b.t;
        for (std::size_t i = 0; i < states_.size(); ++i) {
            states_[i].m = b.m[i];
            states_[i].v = b.v[i];
            states_[i].ever = std::set<int>(b.ever[i].begin(), b.ever[i].end());
        }
    }

private:
    struct State {
        Mat m, v;
        std::set<int> ever;  // ordered so updates are deterministic
    };

    static std::vector<int> dedup(std::vector<int> rows) {
        std::sort(rows.begin(), rows.end());
        rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
        return rows;
    }

    void merge_all_rows(State& st, int n) {
        for (int r = 0; r < n; ++r) st.ever.insert(r);
    }

    void update_row(const std::shared_ptr<TensorNode>& n, State& st, int r, double scale,
                    double bc1, double bc2, double wd) {
        st.m.row(r) = s_.beta1 * st.m.row(r) + (1.0 - s_.beta1) * scale * n->grad.row(r);
        st.v.row(r).array() = s_.beta2 * st.v.row(r).array() +
                              (1.0 - s_.beta2) * (scale * n->grad.row(r).array()).square();
        n->value.row(r).array() -=
            s_.lr * ((st.m.row(r).array() / bc1) / ((st.v.row(r).array() / bc2).sqrt() + s_.eps) +
                     wd * n->value.row(r).array());
    }

    // Weight decay only on 2-D dense weights, not biases/gains.
    static bool decay_applies(const Tensor& t) { return t.rows() > 1 && t.cols() > 1; }

    std::vector<Tensor> params_;
    Settings s_;
    std::vector<State> states_;
    long t_ = 0;
};

inline bool all_finite(const Mat& m) { return m.allFinite(); }

}  // namespace geomm::nn
