#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

namespace geomm::nn {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// A tensor is a shared 2-D matrix plus an optional gradient. The Tape records
// backward closures as ops are applied; Tape::backward replays them in
// reverse. Parameters are long-lived tensors reused across tapes; activations
// live only as long as the closures that reference them.
struct TensorNode {
    Mat value;
    Mat grad;  // sized on first accumulation
    bool requires_grad = false;
    bool sparse_grad = false;            // embedding-table style: grads touch few rows
    std::vector<int> touched_rows;       // rows written since last zero_grad (sparse only)
    bool dense_touch = false;            // a non-gather op wrote into grad

    void ensure_grad() {
        if (grad.rows() != value.rows() || grad.cols() != value.cols()) {
            grad = Mat::Zero(value.rows(), value.cols());
        }
    }
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Mat v, bool requires_grad = false) : node_(std::make_shared<TensorNode>()) {
        node_->value = std::move(v);
        node_->requires_grad = requires_grad;
    }

    static Tensor zeros(Eigen::Index r, Eigen::Index c, bool requires_grad = false) {
        return Tensor(Mat::Zero(r, c), requires_grad);
    }

    bool defined() const { return static_cast<bool>(node_); }
    Mat& value() { return node_->value; }
    const Mat& value() const { return node_->value; }
    Mat& grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    Eigen::Index rows() const { return node_->value.rows(); }
    Eigen::Index cols() const { return node_->value.cols(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    std::shared_ptr<TensorNode> node() const { return node_; }

private:
    std::shared_ptr<TensorNode> node_;
};

namespace detail {
inline void accumulate(const std::shared_ptr<TensorNode>& n, const Mat& g) {
    n->ensure_grad();
    n->grad += g;
    n->dense_touch = true;
}
}  // namespace detail

class Tape {
public:
    // ---- basic algebra ----

    Tensor matmul(const Tensor& a, const Tensor& b) {
        check(a.cols() == b.rows(), "matmul: inner dimensions differ");
        Tensor out(Mat(a.value() * b.value()), a.requires_grad() || b.requires_grad());
        if (out.requires_grad()) {
            record([an = a.node(), bn = b.node(), on = out.node()] {
                if (an->requires_grad) detail::accumulate(an, on->grad * bn->value.transpose());
                if (bn->requires_grad) detail::accumulate(bn, an->value.transpose() * on->grad);
            });
        }
        return out;
    }

    // y = a * b^T
    Tensor matmul_nt(const Tensor& a, const Tensor& b) {
        check(a.cols() == b.cols(), "matmul_nt: inner dimensions differ");
        Tensor out(Mat(a.value() * b.value().transpose()), a.requires_grad() || b.requires_grad());
        if (out.requires_grad()) {
            record([an = a.node(), bn = b.node(), on = out.node()] {
                if (an->requires_grad) detail::accumulate(an, on->grad * bn->value);
                if (bn->requires_grad) detail::accumulate(bn, on->grad.transpose() * an->value);
            });
        }
        return out;
    }

    Tensor add(const Tensor& a, const Tensor& b) {
        check(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
        Tensor out(Mat(a.value() + b.value()), a.requires_grad() || b.requires_grad());
        if (out.requires_grad()) {
            record([an = a.node(), bn = b.node(), on = out.node()] {
                if (an->requires_grad) detail::accumulate(an, on->grad);
                if (bn->requires_grad) detail::accumulate(bn, on->grad);
            });
        }
        return out;
    }

    // b is 1 x C, broadcast over the rows of a.
    Tensor add_rowvec(const Tensor& a, const Tensor& b) {
        check(b.rows() == 1 && a.cols() == b.cols(), "add_rowvec: expected 1 x C bias");
        Mat v = a.value();
        v.rowwise() += b.value().row(0);
        Tensor out(std::move(v), a.requires_grad() || b.requires_grad());
        if (out.requires_grad()) {
            record([an = a.node(), bn = b.node(), on = out.node()] {
                if (an->requires_grad) detail::accumulate(an, on->grad);
                if (bn->requires_grad) detail::accumulate(bn, on->grad.colwise().sum());
            });
        }
        return out;
    }

    Tensor mul_scalar(const Tensor& a, double s) {
        Tensor out(Mat(a.value() * s), a.requires_grad());
        if (out.requires_grad()) {
            record([an = a.node(), on = out.node(), s] {
                detail::accumulate(an, Mat(on->grad * s));
            });
        }
        return out;
    }

    // ---- pointwise nonlinearities ----

    Tensor tanh_act(const Tensor& a) {
        Tensor out(Mat(a.value().array().tanh()), a.requires_grad());
        if (out.requires_grad()) {
            record([an = a.node(), on = out.node()] {
                detail::accumulate(an, Mat(on->grad.array() * (1.0 - on->value.array().square())));
            });
        }
        return out;
    }

    // Exact GELU: x * Phi(x).
    Tensor gelu(const Tensor& a) {
        const Mat& x = a.value();
        Mat y(x.rows(), x.cols());
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            const double v = x.data()[i];
            y.data()[i] = 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2));
        }
        Tensor out(std::move(y), a.requires_grad());
        if (out.requires_grad()) {
            record([an = a.node(), on = out.node()] {
                const Mat& x = an->value;
                Mat g(x.rows(), x.cols());
                for (Eigen::Index i = 0; i < x.size(); ++i) {
                    const double v = x.data()[i];
                    const double phi = std::exp(-0.5 * v * v) / std::sqrt(2.0 * M_PI);
                    g.data()[i] = 0.5 * (1.0 + std::erf(v * M_SQRT1_2)) + v * phi;
                }
                detail::accumulate(an, Mat(on->grad.array() * g.array()));
            });
        }
        return out;
    }

    // ---- normalization / softmax ----

    Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5) {
        check(gain.rows() == 1 && gain.cols() == x.cols(), "layernorm: gain must be 1 x C");
        check(bias.rows() == 1 && bias.cols() == x.cols(), "layernorm: bias must be 1 x C");
        const Eigen::Index n = x.rows(), c = x.cols();
        Mat xhat(n, c);
        std::vector<double> rstd(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) {
            const double mean = x.value().row(i).mean();
            const double var = (x.value().row(i).array() - mean).square().mean();
            const double rs = 1.0 / std::sqrt(var + eps);
            rstd[static_cast<std::size_t>(i)] = rs;
            xhat.row(i) = (x.value().row(i).array() - mean) * rs;
        }
        Mat y = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() +
                bias.value().row(0).array();
        Tensor out(std::move(y), x.requires_grad() || gain.requires_grad() || bias.requires_grad());
        if (out.requires_grad()) {
            record([xn = x.node(), gn = gain.node(), bn = bias.node(), on = out.node(),
                    xhat = std::move(xhat), rstd = std::move(rstd)] {
                const Eigen::Index n = xhat.rows(), c = xhat.cols();
                if (bn->requires_grad) detail::accumulate(bn, on->grad.colwise().sum());
                if (gn->requires_grad)
                    detail::accumulate(gn, Mat((on->grad.array() * xhat.array()).colwise().sum()));
                if (xn->requires_grad) {
                    Mat dx(n, c);
                    for (Eigen::Index i = 0; i < n; ++i) {
                        const auto gy = on->grad.row(i).array() * gn->value.row(0).array();
                        const double m1 = gy.mean();
                        const double m2 = (gy * xhat.row(i).array()).mean();
                        dx.row(i) =
                            ((gy - m1 - xhat.row(i).array() * m2) * rstd[static_cast<std::size_t>(i)])
                                .matrix();
                    }
                    detail::accumulate(xn, dx);
                }
            });
        }
        return out;
    }

    // Row softmax; `bias` (if given) is added to the logits and carries no
    // gradient — used for attention masks.
    Tensor softmax_rows(const Tensor& x, const Mat* bias = nullptr) {
        Mat z = x.value();
        if (bias) {
            check(bias->rows() == z.rows() && bias->cols() == z.cols(),
                  "softmax_rows: bias shape mismatch");
            z += *bias;
        }
        Mat y(z.rows(), z.cols());
        for (Eigen::Index i = 0; i < z.rows(); ++i) {
            const double m = z.row(i).maxCoeff();
            y.row(i) = (z.row(i).array() - m).exp();
            y.row(i) /= y.row(i).sum();
        }
        Tensor out(std::move(y), x.requires_grad());
        if (out.requires_grad()) {
            record([xn = x.node(), on = out.node()] {
                Mat dx(on->value.rows(), on->value.cols());
                for (Eigen::Index i = 0; i < on->value.rows(); ++i) {
                    const double dot = on->grad.row(i).dot(on->value.row(i));
                    dx.row(i) =
                        (on->grad.row(i).array() - dot) * on->value.row(i).array();
                }
                detail::accumulate(xn, dx);
            });
        }
        return out;
    }

    // ---- gather / reshape ----

    // Embedding lookup: out.row(i) = table.row(ids[i]).
    Tensor gather_rows(const Tensor& table, const std::vector<int>& ids) {
        Mat y(static_cast<Eigen::Index>(ids.size()), table.cols());
        for (std::size_t i = 0; i < ids.size(); ++i) {
            check(ids[i] >= 0 && ids[i] < table.rows(), "gather_rows: index out of range");
            y.row(static_cast<Eigen::Index>(i)) = table.value().row(ids[i]);
        }
        Tensor out(std::move(y), table.requires_grad());
        if (out.requires_grad()) {
            record([tn = table.node(), on = out.node(), ids] {
                tn->ensure_grad();
                for (std::size_t i = 0; i < ids.size(); ++i) {
                    tn->grad.row(ids[i]) += on->grad.row(static_cast<Eigen::Index>(i));
                    if (tn->sparse_grad) tn->touched_rows.push_back(ids[i]);
                }
                if (!tn->sparse_grad) tn->dense_touch = true;
            });
        }
        return out;
    }

    Tensor slice_rows(const Tensor& x, Eigen::Index r0, Eigen::Index n) {
        check(r0 >= 0 && r0 + n <= x.rows(), "slice_rows: out of range");
        Tensor out(Mat(x.value().middleRows(r0, n)), x.requires_grad());
        if (out.requires_grad()) {
            record([xn = x.node(), on = out.node(), r0, n] {
                xn->ensure_grad();
                xn->grad.middleRows(r0, n) += on->grad;
                xn->dense_touch = true;
            });
        }
        return out;
    }

    Tensor slice_cols(const Tensor& x, Eigen::Index c0, Eigen::Index n) {
        check(c0 >= 0 && c0 + n <= x.cols(), "slice_cols: out of range");
        Tensor out(Mat(x.value().middleCols(c0, n)), x.requires_grad());
        if (out.requires_grad()) {
            record([xn = x.node(), on = out.node(), c0, n] {
                xn->ensure_grad();
                xn->grad.middleCols(c0, n) += on->grad;
                xn->dense_touch = true;
            });
        }
        return out;
    }

    Tensor concat_rows(const std::vector<Tensor>& parts) {
        check(!parts.empty(), "concat_rows: empty");
        Eigen::Index rows = 0;
        const Eigen::Index cols = parts[0].cols();
        bool rg = false;
        for (const auto& p : parts) {
            check(p.cols() == cols, "concat_rows: column mismatch");
            rows += p.rows();
            rg = rg || p.requires_grad();
        }
        Mat y(rows, cols);
        Eigen::Index r = 0;
        for (const auto& p : parts) {
            y.middleRows(r, p.rows()) = p.value();
            r += p.rows();
        }
        Tensor out(std::move(y), rg);
        if (rg) {
            std::vector<std::shared_ptr<TensorNode>> nodes;
            nodes.reserve(parts.size());
            for (const auto& p : parts) nodes.push_back(p.node());
            record([nodes, on = out.node()] {
                Eigen::Index r = 0;
                for (const auto& n : nodes) {
                    if (n->requires_grad)
                        detail::accumulate(n, Mat(on->grad.middleRows(r, n->value.rows())));
                    r += n->value.rows();
                }
            });
        }
        return out;
    }

    Tensor concat_cols(const std::vector<Tensor>& parts) {
        check(!parts.empty(), "concat_cols: empty");
        const Eigen::Index rows = parts[0].rows();
        Eigen::Index cols = 0;
        bool rg = false;
        for (const auto& p : parts) {
            check(p.rows() == rows, "concat_cols: row mismatch");
            cols += p.cols();
            rg = rg || p.requires_grad();
        }
        Mat y(rows, cols);
        Eigen::Index c = 0;
        for (const auto& p : parts) {
            y.middleCols(c, p.cols()) = p.value();
            c += p.cols();
        }
        Tensor out(std::move(y), rg);
        if (rg) {
            std::vector<std::shared_ptr<TensorNode>> nodes;
            nodes.reserve(parts.size());
            for (const auto& p : parts) nodes.push_back(p.node());
            record([nodes, on = out.node()] {
                Eigen::Index c = 0;
                for (const auto& n : nodes) {
                    if (n->requires_grad)
                        detail::accumulate(n, Mat(on->grad.middleCols(c, n->value.cols())));
                    c += n->value.cols();
                }
            });
        }
        return out;
    }

    // ---- FSQ building blocks ----

    // y_ij = scale[j] * tanh(x_ij); scale carries no gradient.
    Tensor colscale_tanh(const Tensor& x, const std::vector<double>& scale) {
        check(static_cast<Eigen::Index>(scale.size()) == x.cols(), "colscale_tanh: scale size");
        Mat y = x.value().array().tanh();
        for (Eigen::Index j = 0; j < y.cols(); ++j) y.col(j) *= scale[static_cast<std::size_t>(j)];
        Tensor out(std::move(y), x.requires_grad());
        if (out.requires_grad()) {
            record([xn = x.node(), on = out.node(), scale] {
                Mat th = xn->value.array().tanh();
                Mat d = (1.0 - th.array().square()).matrix();
                for (Eigen::Index j = 0; j < d.cols(); ++j)
                    d.col(j) *= scale[static_cast<std::size_t>(j)];
                detail::accumulate(xn, Mat(on->grad.array() * d.array()));
            });
        }
        return out;
    }

    // Round half toward +inf with a straight-through gradient.
    Tensor ste_round(const Tensor& x) {
        Mat y = x.value().array().unaryExpr([](double v) { return std::floor(v + 0.5); });
        Tensor out(std::move(y), x.requires_grad());
        if (out.requires_grad()) {
            record([xn = x.node(), on = out.node()] { detail::accumulate(xn, on->grad); });
        }
        return out;
    }

    // Row-wise L2 normalization (unit-sphere projection).
    Tensor normalize_rows(const Tensor& x, double eps = 1e-12) {
        const Eigen::Index n = x.rows(), c = x.cols();
        Mat y(n, c);
        std::vector<double> inv(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) {
            const double r = 1.0 / std::max(eps, x.value().row(i).norm());
            inv[static_cast<std::size_t>(i)] = r;
            y.row(i) = x.value().row(i) * r;
        }
        Tensor out(std::move(y), x.requires_grad());
        if (out.requires_grad()) {
            record([xn = x.node(), on = out.node(), inv = std::move(inv)] {
                Mat dx(on->value.rows(), on->value.cols());
                for (Eigen::Index i = 0; i < on->value.rows(); ++i) {
                    const double dot = on->grad.row(i).dot(on->value.row(i));
                    dx.row(i) = (on->grad.row(i) - dot * on->value.row(i)) *
                                inv[static_cast<std::size_t>(i)];
                }
                detail::accumulate(xn, dx);
            });
        }
        return out;
    }

    // ---- convolution head building blocks ----

    // x is (H*W) x C row-major over a H x W grid; output is (H*W) x 9C with
    // the 3x3 neighborhood (zero padded) unrolled per row.
    Tensor im2col3x3(const Tensor& x, int H, int W) {
        check(x.rows() == static_cast<Eigen::Index>(H) * W, "im2col3x3: grid size mismatch");
        const Eigen::Index c = x.cols();
        Mat y = Mat::Zero(x.rows(), 9 * c);
        for (int i = 0; i < H; ++i) {
            for (int j = 0; j < W; ++j) {
                const Eigen::Index r = static_cast<Eigen::Index>(i) * W + j;
                int k = 0;
                for (int di = -1; di <= 1; ++di) {
                    for (int dj = -1; dj <= 1; ++dj, ++k) {
                        const int ii = i + di, jj = j + dj;
                        if (ii < 0 || ii >= H || jj < 0 || jj >= W) continue;
                        y.block(r, k * c, 1, c) =
                            x.value().row(static_cast<Eigen::Index>(ii) * W + jj);
                    }
                }
            }
        }
        Tensor out(std::move(y), x.requires_grad());
        if (out.requires_grad()) {
            record([xn = x.node(), on = out.node(), H, W, c] {
                xn->ensure_grad();
                for (int i = 0; i < H; ++i) {
                    for (int j = 0; j < W; ++j) {
                        const Eigen::Index r = static_cast<Eigen::Index>(i) * W + j;
                        int k = 0;
                        for (int di = -1; di <= 1; ++di) {
                            for (int dj = -1; dj <= 1; ++dj, ++k) {
                                const int ii = i + di, jj = j + dj;
                                if (ii < 0 || ii >= H || jj < 0 || jj >= W) continue;
                                xn->grad.row(static_cast<Eigen::Index>(ii) * W + jj) +=
                                    on->grad.block(r, k * c, 1, c);
                            }
                        }
                    }
                }
                xn->dense_touch = true;
            });
        }
        return out;
    }

    // Nearest-neighbor 2x upsample of a (H*W) x C grid to (2H*2W) x C.
    Tensor upsample2x(const Tensor& x, int H, int W) {
        check(x.rows() == static_cast<Eigen::Index>(H) * W, "upsample2x: grid size mismatch");
        Mat y(static_cast<Eigen::Index>(4) * H * W, x.cols());
        for (int i = 0; i < 2 * H; ++i)
            for (int j = 0; j < 2 * W; ++j)
                y.row(static_cast<Eigen::Index>(i) * 2 * W + j) =
                    x.value().row(static_cast<Eigen::Index>(i / 2) * W + j / 2);
        Tensor out(std::move(y), x.requires_grad());
        if (out.requires_grad()) {
            record([xn = x.node(), on = out.node(), H, W] {
                xn->ensure_grad();
                for (int i = 0; i < 2 * H; ++i)
                    for (int j = 0; j < 2 * W; ++j)
                        xn->grad.row(static_cast<Eigen::Index>(i / 2) * W + j / 2) +=
                            on->grad.row(static_cast<Eigen::Index>(i) * 2 * W + j);
                xn->dense_touch = true;
            });
        }
        return out;
    }

    // ---- losses ----

    // Mean over rows of -log softmax(logits)[target]. Weights (optional)
    // reweight rows and must sum to rows (plain mean when empty).
    Tensor ce_mean(const Tensor& logits, const std::vector<int>& targets,
                   const std::vector<double>& weights = {}) {
        check(static_cast<Eigen::Index>(targets.size()) == logits.rows(),
              "ce_mean: one target per row");
        check(!targets.empty(), "ce_mean: empty targets");
        const Eigen::Index n = logits.rows();
        Mat probs(n, logits.cols());
        double loss = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const int t = targets[static_cast<std::size_t>(i)];
            if (t < 0 || t >= logits.cols())
                throw std::invalid_argument("ce_mean: target id outside vocabulary");
            const double m = logits.value().row(i).maxCoeff();
            const auto shifted = (logits.value().row(i).array() - m);
            const double lse = std::log(shifted.exp().sum());
            probs.row(i) = (shifted - lse).exp();
            const double w = weights.empty() ? 1.0 : weights[static_cast<std::size_t>(i)];
            loss += w * (lse - shifted(t));
        }
        loss /= static_cast<double>(n);
        Tensor out(Mat::Constant(1, 1, loss), logits.requires_grad());
        if (out.requires_grad()) {
            record([ln = logits.node(), on = out.node(), probs = std::move(probs), targets,
                    weights] {
                const double g = on->grad(0, 0) / static_cast<double>(probs.rows());
                Mat d = probs;
                for (Eigen::Index i = 0; i < d.rows(); ++i) {
                    d(i, targets[static_cast<std::size_t>(i)]) -= 1.0;
                    const double w = weights.empty() ? 1.0 : weights[static_cast<std::size_t>(i)];
                    d.row(i) *= g * w;
                }
                detail::accumulate(ln, d);
            });
        }
        return out;
    }

    Tensor sum_all(const Tensor& x) {
        Tensor out(Mat::Constant(1, 1, x.value().sum()), x.requires_grad());
        if (out.requires_grad()) {
            record([xn = x.node(), on = out.node()] {
                detail::accumulate(
                    xn, Mat(Mat::Constant(xn->value.rows(), xn->value.cols(), on->grad(0, 0))));
            });
        }
        return out;
    }

    // Mean squared error against a constant target.
    Tensor mse_mean(const Tensor& pred, const Mat& target) {
        check(pred.rows() == target.rows() && pred.cols() == target.cols(),
              "mse_mean: shape mismatch");
        const double n = static_cast<double>(pred.rows() * pred.cols());
        const Mat diff = pred.value() - target;
        Tensor out(Mat::Constant(1, 1, diff.array().square().sum() / n), pred.requires_grad());
        if (out.requires_grad()) {
            record([pn = pred.node(), on = out.node(), diff, n] {
                detail::accumulate(pn, Mat(diff * (2.0 * on->grad(0, 0) / n)));
            });
        }
        return out;
    }

    Tensor add_scalar_mul(const Tensor& a, const Tensor& b, double sb) {
        check(a.rows() == b.rows() && a.cols() == b.cols(), "add_scalar_mul: shape mismatch");
        Tensor out(Mat(a.value() + sb * b.value()), a.requires_grad() || b.requires_grad());
        if (out.requires_grad()) {
            record([an = a.node(), bn = b.node(), on = out.node(), sb] {
                if (an->requires_grad) detail::accumulate(an, on->grad);
                if (bn->requires_grad) detail::accumulate(bn, Mat(on->grad * sb));
            });
        }
        return out;
    }

    void backward(Tensor& loss) {
        check(loss.rows() == 1 && loss.cols() == 1, "backward: loss must be scalar");
        loss.grad()(0, 0) = 1.0;
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
        ops_.clear();
    }

    std::size_t size() const { return ops_.size(); }
    void clear() { ops_.clear(); }

private:
    static void check(bool ok, const char* msg) {
        if (!ok) throw std::invalid_argument(msg);
    }
    void record(std::function<void()> f) { ops_.push_back(std::move(f)); }

    std::vector<std::function<void()>> ops_;
};

}  // namespace geomm::nn
