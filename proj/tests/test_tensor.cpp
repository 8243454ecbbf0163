#include <catch2/catch_amalgamated.hpp>

#include "geomm/nn.hpp"
#include "geomm/tensor.hpp"

using namespace geomm::nn;
using geomm::Rng;

namespace {

Tensor random_param(Rng& rng, int r, int c) { return param_normal(rng, r, c, 0.5); }

// Central finite difference of f against the analytic gradient of `param`.
void check_grad(const std::function<double()>& loss_fn, Tensor& param, const Mat& analytic,
                double tol = 1e-6, int max_coords = 64) {
    int checked = 0;
    for (Eigen::Index i = 0; i < param.value().size() && checked < max_coords; ++i, ++checked) {
        const double orig = param.value().data()[i];
        const double h = 1e-5 * std::max(1.0, std::abs(orig));
        param.value().data()[i] = orig + h;
        const double fp = loss_fn();
        param.value().data()[i] = orig - h;
        const double fm = loss_fn();
        param.value().data()[i] = orig;
        const double fd = (fp - fm) / (2.0 * h);
        const double an = analytic.data()[i];
        const double err = std::abs(fd - an) / std::max({1e-8, std::abs(fd), std::abs(an)});
        INFO("coord " << i << " fd=" << fd << " analytic=" << an);
        REQUIRE(err < tol);
    }
}

}  // namespace

TEST_CASE("matmul/add/bias gradients match finite differences") {
    Rng rng(1);
    Tensor a = random_param(rng, 3, 4);
    Tensor w = random_param(rng, 4, 5);
    Tensor b = random_param(rng, 1, 5);
    Mat target = Mat::Random(3, 5);

    auto run = [&](bool backward) {
        Tape tape;
        Tensor y = tape.add_rowvec(tape.matmul(a, w), b);
        Tensor loss = tape.mse_mean(y, target);
        const double l = loss.value()(0, 0);
        if (backward) tape.backward(loss);
        return l;
    };
    for (auto* t : {&a, &w, &b}) t->grad().setZero();
    run(true);
    Mat ga = a.grad(), gw = w.grad(), gb = b.grad();
    check_grad([&] { return run(false); }, a, ga);
    check_grad([&] { return run(false); }, w, gw);
    check_grad([&] { return run(false); }, b, gb);
}

TEST_CASE("layernorm/gelu/tanh gradients match finite differences") {
    Rng rng(2);
    Tensor x = random_param(rng, 4, 6);
    Tensor gain = param_const(1, 6, 1.1);
    Tensor bias = param_normal(rng, 1, 6, 0.1);
    Mat target = Mat::Random(4, 6);

    auto run = [&](bool backward) {
        Tape tape;
        Tensor y = tape.gelu(tape.layernorm(x, gain, bias));
        Tensor z = tape.tanh_act(y);
        Tensor loss = tape.mse_mean(z, target);
        const double l = loss.value()(0, 0);
        if (backward) tape.backward(loss);
        return l;
    };
    for (auto* t : {&x, &gain, &bias}) t->grad().setZero();
    run(true);
    Mat gx = x.grad(), gg = gain.grad(), gb = bias.grad();
    check_grad([&] { return run(false); }, x, gx, 1e-5);
    check_grad([&] { return run(false); }, gain, gg, 1e-5);
    check_grad([&] { return run(false); }, bias, gb, 1e-5);
}

TEST_CASE("softmax and cross entropy gradients") {
    Rng rng(3);
    Tensor logits = random_param(rng, 5, 7);
    std::vector<int> targets{0, 3, 6, 2, 2};

    auto run = [&](bool backward) {
        Tape tape;
        Tensor loss = tape.ce_mean(logits, targets);
        const double l = loss.value()(0, 0);
        if (backward) tape.backward(loss);
        return l;
    };
    logits.grad().setZero();
    run(true);
    Mat g = logits.grad();
    check_grad([&] { return run(false); }, logits, g);

    SECTION("softmax rows sum to one") {
        Tape tape;
        Tensor p = tape.softmax_rows(logits);
        for (Eigen::Index i = 0; i < p.rows(); ++i)
            REQUIRE(p.value().row(i).sum() == Catch::Approx(1.0).margin(1e-6));
    }
}

TEST_CASE("gather and concat gradients") {
    Rng rng(4);
    Tensor table = param_normal(rng, 10, 3, 0.5, /*sparse=*/true);
    std::vector<int> ids{2, 7, 2, 0};
    Mat target = Mat::Random(4, 6);
    Tensor other = random_param(rng, 4, 3);

    auto run = [&](bool backward) {
        Tape tape;
        Tensor e = tape.gather_rows(table, ids);
        Tensor y = tape.concat_cols({e, other});
        Tensor loss = tape.mse_mean(y, target);
        const double l = loss.value()(0, 0);
        if (backward) tape.backward(loss);
        return l;
    };
    table.grad().setZero();
    other.grad().setZero();
    table.node()->touched_rows.clear();
    run(true);
    Mat gt = table.grad(), go = other.grad();
    check_grad([&] { return run(false); }, table, gt);
    check_grad([&] { return run(false); }, other, go);
    // duplicate id accumulates into one row
    REQUIRE(table.node()->touched_rows.size() == 4);
}

TEST_CASE("im2col3x3 and upsample2x gradients") {
    Rng rng(5);
    const int H = 3, W = 4;
    Tensor x = random_param(rng, H * W, 2);
    Tensor w = random_param(rng, 18, 3);
    Mat target = Mat::Random(H * W, 3);
    Mat target2 = Mat::Random(4 * H * W, 2);

    auto run = [&](bool backward) {
        Tape tape;
        Tensor y = tape.matmul(tape.im2col3x3(x, H, W), w);
        Tensor u = tape.upsample2x(x, H, W);
        Tensor loss =
            tape.add(tape.mse_mean(y, target), tape.mse_mean(u, target2));
        const double l = loss.value()(0, 0);
        if (backward) tape.backward(loss);
        return l;
    };
    x.grad().setZero();
    w.grad().setZero();
    run(true);
    Mat gx = x.grad(), gw = w.grad();
    check_grad([&] { return run(false); }, x, gx);
    check_grad([&] { return run(false); }, w, gw);
}

TEST_CASE("attention block gradients match finite differences") {
    Rng rng(6);
    const int dim = 8, heads = 2;
    EncoderBlock block;
    block.init(rng, dim, heads, 2 * dim);
    Tensor x = random_param(rng, 5, dim);
    Mat target = Mat::Random(5, dim);

    auto run = [&](bool backward) {
        Tape tape;
        Tensor y = block(tape, x);
        Tensor loss = tape.mse_mean(y, target);
        const double l = loss.value()(0, 0);
        if (backward) tape.backward(loss);
        return l;
    };
    ParamMap pm;
    block.collect(pm, "blk");
    for (auto& [_, t] : pm.items) t.grad().setZero();
    x.grad().setZero();
    run(true);
    Mat gx = x.grad();
    check_grad([&] { return run(false); }, x, gx, 1e-5);
    // spot-check a couple of weights
    Tensor wq = block.attn.q.w;
    Mat gq = wq.grad();
    check_grad([&] { return run(false); }, wq, gq, 1e-5, 16);
    Tensor w2 = block.fc2.w;
    Mat g2 = w2.grad();
    check_grad([&] { return run(false); }, w2, g2, 1e-5, 16);
}

TEST_CASE("decoder block with causal mask respects ordering") {
    Rng rng(7);
    const int dim = 8;
    DecoderBlock block;
    block.init(rng, dim, 2, 2 * dim);
    Tensor mem = random_param(rng, 3, dim);
    Tensor x = random_param(rng, 4, dim);
    Mat causal = Mat::Zero(4, 4);
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j) causal(i, j) = -1e30;

    Tape tape;
    Tensor y1 = block(tape, x, mem, &causal);
    // perturb the last row of x: earlier outputs must not change
    Tensor x2(Mat(x.value()), false);
    x2.value().row(3).array() += 1.0;
    Tensor y2 = block(tape, x2, mem, &causal);
    for (int i = 0; i < 3; ++i)
        REQUIRE((y1.value().row(i) - y2.value().row(i)).cwiseAbs().maxCoeff() < 1e-12);
    REQUIRE((y1.value().row(3) - y2.value().row(3)).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("adamw sparse embedding update equals dense update") {
    Rng rng(8);
    Tensor sparse_table = param_normal(rng, 6, 3, 0.5, /*sparse=*/true);
    Tensor dense_table(Mat(sparse_table.value()), true);
    std::vector<int> ids{1, 4, 1};
    Mat target = Mat::Random(3, 3);

    auto run_step = [&](Tensor& tbl) {
        AdamW opt({tbl}, {.lr = 0.1});
        for (int s = 0; s < 3; ++s) {
            opt.zero_grad();
            Tape tape;
            Tensor e = tape.gather_rows(tbl, ids);
            Tensor loss = tape.mse_mean(e, target);
            tape.backward(loss);
            opt.step();
        }
    };
    run_step(sparse_table);
    run_step(dense_table);
    REQUIRE((sparse_table.value() - dense_table.value()).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("ste_round is identity for gradients and rounds half up") {
    Tensor x(Mat::Constant(1, 3, 0.0), true);
    x.value() << -3.5, 0.49, 2.5;
    Tape tape;
    Tensor y = tape.ste_round(x);
    REQUIRE(y.value()(0, 0) == -3.0);
    REQUIRE(y.value()(0, 1) == 0.0);
    REQUIRE(y.value()(0, 2) == 3.0);
    Tensor loss = tape.mul_scalar(y, 2.0);
    Tensor sum = tape.mse_mean(loss, Mat::Zero(1, 3));
    x.grad().setZero();
    tape.backward(sum);
    REQUIRE(x.grad().allFinite());
}
