#include <catch2/catch_amalgamated.hpp>
#include <set>

#include "geomm/nn.hpp"
#include "geomm/rng.hpp"
#include "geomm/tok/fsq.hpp"
#include "geomm/tok/schedule.hpp"

using namespace geomm::tok;
using geomm::Rng;

static const std::vector<int> kLevels{8, 8, 8, 6, 5};

TEST_CASE("fsq_bound basics") {
    SECTION("zero maps to zero") {
        auto b = fsq_bound({0, 0, 0, 0, 0}, kLevels);
        for (double v : b) REQUIRE(v == 0.0);
    }
    SECTION("saturates at (L-1)/2") {
        auto b = fsq_bound({50.0}, {8});
        REQUIRE(b[0] == Catch::Approx(3.5).margin(1e-9));
        auto bn = fsq_bound({-50.0}, {8});
        REQUIRE(bn[0] == Catch::Approx(-3.5).margin(1e-9));
    }
    SECTION("direct evaluation for L=8, z=0.5") {
        auto b = fsq_bound({0.5}, {8});
        REQUIRE(b[0] == Catch::Approx(3.5 * std::tanh(0.5)).epsilon(1e-12));
        REQUIRE(b[0] == Catch::Approx(1.6174).margin(5e-4));
    }
    SECTION("dimension mismatch rejected") {
        REQUIRE_THROWS_AS(fsq_bound({0.0, 1.0}, kLevels), std::invalid_argument);
    }
}

TEST_CASE("fsq_quantize center codes and idempotence") {
    auto [q, codes] = fsq_quantize({0, 0, 0, 0, 0}, kLevels);
    for (double v : q) REQUIRE(v == 0.0);
    REQUIRE(codes == std::vector<int>{3, 3, 3, 2, 2});

    SECTION("codebook points are fixed under re-quantization") {
        // atanh-preimage of each codeword maps back to the same codeword
        for (int c = 0; c < 5; ++c) {
            const double target = c - 2;  // L=5 centered codes
            const double z = std::atanh(target / 2.0 / 1.0001);  // inside the open bound
            auto [q1, code1] = fsq_quantize({z}, {5});
            REQUIRE(q1[0] == target);
            REQUIRE(code1[0] == c);
        }
    }
}

TEST_CASE("1-D sweep attains exactly L distinct quantized values") {
    // even levels reach their top cell only once tanh saturates, so the
    // sweep must run into saturation (|z| ~ 20)
    for (int L : {5, 6, 8}) {
        std::set<double> seen;
        for (double z = -25.0; z <= 25.0; z += 0.001)
            seen.insert(fsq_quantize({z}, {L}).first[0]);
        REQUIRE(static_cast<int>(seen.size()) == L);
    }
}

TEST_CASE("codes_to_index corners") {
    REQUIRE(codes_to_index({0, 0, 0, 0, 0}, kLevels) == 0);
    REQUIRE(codes_to_index({7, 7, 7, 5, 4}, kLevels) == 15359);
    REQUIRE_THROWS_AS(codes_to_index({8, 0, 0, 0, 0}, kLevels), std::invalid_argument);
    REQUIRE_THROWS_AS(index_to_codes(15360, kLevels), std::invalid_argument);
    REQUIRE_THROWS_AS(index_to_codes(-1, kLevels), std::invalid_argument);
}

TEST_CASE("index/code bijection is exhaustive over both codebooks") {
    for (const auto& levels :
         {std::vector<int>{8, 8, 8, 6, 5}, std::vector<int>{8, 8, 8, 8}}) {
        long total = 1;
        for (int l : levels) total *= l;
        for (long id = 0; id < total; ++id) {
            REQUIRE(codes_to_index(index_to_codes(id, levels), levels) == id);
        }
    }
}

TEST_CASE("distinct quantized tuples equal the level product on a grid sweep") {
    // 2-D desk-scale variant of the counting property
    const std::vector<int> levels{6, 5};
    std::set<std::pair<double, double>> seen;
    for (double a = -25.0; a <= 25.0; a += 0.2)
        for (double b = -25.0; b <= 25.0; b += 0.2) {
            auto q = fsq_quantize({a, b}, levels).first;
            seen.insert({q[0], q[1]});
        }
    REQUIRE(static_cast<long>(seen.size()) == 30);

    // all codewords of the full codebook are distinct quantized vectors
    const std::vector<int> full{8, 8, 8, 6, 5};
    std::set<std::vector<double>> vecs;
    for (long id = 0; id < 15360; ++id)
        vecs.insert(codes_to_quantized(index_to_codes(id, full), full));
    REQUIRE(static_cast<long>(vecs.size()) == 15360);
}

TEST_CASE("straight-through gradient matches finite difference of the bound") {
    Rng rng(12);
    geomm::nn::Tensor z(geomm::nn::Mat::Zero(100, 5), true);
    for (Eigen::Index i = 0; i < z.value().size(); ++i) z.value().data()[i] = 1.2 * rng.gaussian();
    Quantizer quant;
    quant.fsq.levels = kLevels;

    // analytic gradient of sum(quantized) w.r.t. z via the tape
    geomm::nn::Tape tape;
    auto res = quant.quantize_tape(tape, z);
    geomm::nn::Tensor loss = tape.sum_all(res.quantized);
    z.grad().setZero();
    tape.backward(loss);
    const geomm::nn::Mat analytic = z.grad();

    // the straight-through backward must equal the gradient of sum(bound)
    auto surrogate = [&](const geomm::nn::Mat& zz) {
        double s = 0.0;
        for (Eigen::Index r = 0; r < zz.rows(); ++r) {
            std::vector<double> row(5);
            for (int c = 0; c < 5; ++c) row[static_cast<std::size_t>(c)] = zz(r, c);
            for (double v : fsq_bound(row, kLevels)) s += v;
        }
        return s;
    };
    int checked = 0;
    for (Eigen::Index i = 0; i < z.value().size() && checked < 120; i += 4, ++checked) {
        geomm::nn::Mat zz = z.value();
        const double h = 1e-6 * std::max(1.0, std::abs(zz.data()[i]));
        zz.data()[i] += h;
        const double fp = surrogate(zz);
        zz.data()[i] -= 2.0 * h;
        const double fm = surrogate(zz);
        const double fd = (fp - fm) / (2.0 * h);
        const double an = analytic.data()[i];
        const double rel = std::abs(fd - an) / std::max({1e-10, std::abs(fd), std::abs(an)});
        REQUIRE(rel < 1e-4);
    }
    REQUIRE(checked >= 100);
}

TEST_CASE("usage ema stays normalized and decays at 0.99") {
    UsageEma ema;
    ema.init(16, 0.99);
    Rng rng(3);
    for (int step = 0; step < 200; ++step) {
        std::vector<long> ids(32);
        for (auto& id : ids) id = rng.uniform_int(16);
        ema.update(ids);
        REQUIRE(ema.sum() >= 0.0);
        REQUIRE(ema.sum() <= 1.0 + 1e-9);
    }
    // after one update from zero the sum is exactly 1 - decay
    UsageEma fresh;
    fresh.init(4, 0.99);
    fresh.update({0, 1, 2, 3});
    REQUIRE(fresh.sum() == Catch::Approx(0.01).epsilon(1e-9));
}

TEST_CASE("vq quantizer round trips through the same interface") {
    Quantizer quant;
    quant.kind = QuantizerKind::vq;
    quant.fsq.latent_dim = 3;
    quant.fsq.levels = {16};  // unused by vq; keep latent_dim consistent
    Rng rng(9);
    quant.vq_codebook = geomm::nn::param_normal(rng, 16, 3, 1.0);

    geomm::nn::Mat z(4, 3);
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = rng.gaussian();
    auto ids = quant.encode_rows(z);
    for (long id : ids) {
        REQUIRE(id >= 0);
        REQUIRE(id < 16);
        auto lat = quant.id_to_latent(id);
        REQUIRE(lat.size() == 3);
    }

    SECTION("tape path emits aux loss and straight-through gradient") {
        geomm::nn::Tensor zt(z, true);
        geomm::nn::Tape tape;
        auto res = quant.quantize_tape(tape, zt);
        REQUIRE(res.aux_loss.defined());
        geomm::nn::Tensor loss =
            tape.add(tape.mse_mean(res.quantized, geomm::nn::Mat::Zero(4, 3)), res.aux_loss);
        zt.grad().setZero();
        quant.vq_codebook.grad().setZero();
        tape.backward(loss);
        REQUIRE(zt.grad().cwiseAbs().maxCoeff() > 0.0);
        REQUIRE(quant.vq_codebook.grad().cwiseAbs().maxCoeff() > 0.0);
    }
}

TEST_CASE("diffusion schedule tables") {
    DiffusionSchedule s;
    s.build();
    REQUIRE(s.betas.size() == 1000);
    REQUIRE(s.betas.front() == Catch::Approx(1e-4));
    REQUIRE(s.betas.back() == Catch::Approx(0.02));
    for (std::size_t t = 1; t < s.alpha_bar.size(); ++t) {
        REQUIRE(s.alpha_bar[t] < s.alpha_bar[t - 1]);
        REQUIRE(s.alpha_bar[t] > 0.0);
        REQUIRE(s.alpha_bar[t] < 1.0);
    }
    SECTION("invalid schedules rejected") {
        DiffusionSchedule bad;
        bad.beta_start = 0.03;
        bad.beta_end = 0.02;
        REQUIRE_THROWS_AS(bad.build(), std::invalid_argument);
    }
    SECTION("subsampling endpoints") {
        auto steps = s.subsample(10);
        REQUIRE(steps.size() == 10);
        REQUIRE(steps.front() == 999);
        REQUIRE(steps.back() == 0);
        auto one = s.subsample(1);
        REQUIRE(one == std::vector<int>{999});
        auto full = s.subsample(1000);
        REQUIRE(full.size() == 1000);
        REQUIRE_THROWS_AS(s.subsample(0), std::invalid_argument);
        REQUIRE_THROWS_AS(s.subsample(1001), std::invalid_argument);
    }
}
