#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <vector>

#include "sml/gradcheck.hpp"
#include "sml/transfer.hpp"

using namespace sml;

namespace {

CnnTransfer random_cnn(std::size_t d, std::size_t n1, std::size_t n2, std::size_t df,
                       std::uint64_t seed, bool use_conv = true, bool use_fc = true) {
    CnnTransferConfig cfg;
    cfg.d = d;
    cfg.n1 = n1;
    cfg.n2 = n2;
    cfg.df = df;
    cfg.use_conv = use_conv;
    cfg.use_fc = use_fc;
    CnnTransfer t(cfg);
    RngStream rng(seed, "theta/test");
    t.init(rng);
    return t;
}

std::vector<double> random_vec(std::size_t d, std::uint64_t seed, const char* label,
                               double scale = 1.0) {
    RngStream rng(seed, label);
    std::vector<double> v(d);
    for (double& x : v) x = rng.normal(0.0, scale);
    return v;
}

// Second straight-line implementation of the CNN forward pass, written
// independently as the test oracle (column-major accumulation, no caching).
std::vector<double> oracle_cnn_forward(const CnnTransfer& t, const std::vector<double>& wp,
                                       const std::vector<double>& wh) {
    const auto& cfg = t.config();
    std::size_t d = cfg.d;
    double norm = 0.0;
    for (double x : wp) norm += x * x;
    norm = std::sqrt(norm) + cfg.epsilon;

    std::vector<std::vector<double>> h0(3, std::vector<double>(d));
    for (std::size_t m = 0; m < d; ++m) {
        h0[0][m] = wp[m];
        h0[1][m] = wh[m];
        h0[2][m] = wp[m] * wh[m] / norm;
    }
    std::vector<std::vector<double>> feat = h0;
    if (cfg.use_conv) {
        std::vector<std::vector<double>> h1(cfg.n1, std::vector<double>(d));
        for (std::size_t m = 0; m < d; ++m)
            for (std::size_t j = 0; j < cfg.n1; ++j)
                h1[j][m] = gelu(t.F1(j, 0) * h0[0][m] + t.F1(j, 1) * h0[1][m] + t.F1(j, 2) * h0[2][m]);
        std::vector<std::vector<double>> h2(cfg.n2, std::vector<double>(d));
        for (std::size_t m = 0; m < d; ++m)
            for (std::size_t j = 0; j < cfg.n2; ++j) {
                double a = 0.0;
                for (std::size_t k = 0; k < cfg.n1; ++k) a += t.F2(j, k) * h1[k][m];
                h2[j][m] = gelu(a);
            }
        feat = h2;
    }
    std::vector<double> flat;
    for (const auto& row : feat) flat.insert(flat.end(), row.begin(), row.end());

    std::vector<double> out(d);
    if (cfg.use_fc) {
        std::vector<double> z(cfg.df);
        for (std::size_t k = 0; k < cfg.df; ++k) {
            double a = t.b1(0, k);
            for (std::size_t i = 0; i < flat.size(); ++i) a += t.Wf(i, k) * flat[i];
            z[k] = gelu(a);
        }
        for (std::size_t m = 0; m < d; ++m) {
            double a = t.b2(0, m);
            for (std::size_t k = 0; k < cfg.df; ++k) a += t.Wo(k, m) * z[k];
            out[m] = a;
        }
    } else {
        for (std::size_t m = 0; m < d; ++m) {
            double a = t.b2(0, m);
            for (std::size_t i = 0; i < flat.size(); ++i) a += t.Wo(i, m) * flat[i];
            out[m] = a;
        }
    }
    return out;
}

}  // namespace

TEST_CASE("stack layer values") {
    // Zero w_prev: the normalized interaction row is exactly zero.
    DenseMatrix h0 = stack(std::vector<double>{0.0, 0.0}, std::vector<double>{1.0, 2.0});
    CHECK(h0(2, 0) == 0.0);
    CHECK(h0(2, 1) == 0.0);

    // w_prev=[1,2], w_hat=[3,4] -> row 2 = [3,8]/sqrt(5), frozen constants.
    DenseMatrix h1 = stack(std::vector<double>{1.0, 2.0}, std::vector<double>{3.0, 4.0});
    CHECK(h1(0, 0) == 1.0);
    CHECK(h1(1, 1) == 4.0);
    CHECK(h1(2, 0) == Catch::Approx(1.3416407864998738).epsilon(1e-12));
    CHECK(h1(2, 1) == Catch::Approx(3.5777087639996635).epsilon(1e-12));

    std::vector<double> v = {0.3, -0.7, 1.1};
    DenseMatrix h2 = stack(v, v);
    for (std::size_t m = 0; m < 3; ++m) {
        CHECK(h2(0, m) == v[m]);
        CHECK(h2(1, m) == v[m]);
    }

    CHECK_THROWS_AS(stack(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}),
                    std::invalid_argument);
}

TEST_CASE("a [-1,1,0] filter expresses the difference w_hat - w_prev") {
    CnnTransfer t = random_cnn(5, 2, 2, 3, 42);
    t.F1(0, 0) = -1.0;
    t.F1(0, 1) = 1.0;
    t.F1(0, 2) = 0.0;
    auto wp = random_vec(5, 1, "wp");
    auto wh = random_vec(5, 1, "wh");
    CnnTransfer::Cache cache;
    std::vector<double> out(5);
    t.forward(wp, wh, cache, out);
    for (std::size_t m = 0; m < 5; ++m)
        CHECK(cache.a1(0, m) == Catch::Approx(wh[m] - wp[m]).margin(1e-12));
}

TEST_CASE("all-zero weights give a zero output") {
    CnnTransferConfig cfg;
    cfg.d = 4;
    cfg.n1 = 3;
    cfg.n2 = 2;
    cfg.df = 6;
    CnnTransfer t(cfg);  // tensors default to zero
    CnnTransfer::Cache cache;
    std::vector<double> out(4, 99.0);
    t.forward(random_vec(4, 2, "a"), random_vec(4, 2, "b"), cache, out);
    for (double v : out) CHECK(v == 0.0);
}

TEST_CASE("forward matches the independent loop oracle") {
    for (std::uint64_t trial = 0; trial < 20; ++trial) {
        CnnTransfer t = random_cnn(6, 4, 3, 5, 300 + trial);
        auto wp = random_vec(6, trial, "wp", 0.8);
        auto wh = random_vec(6, trial, "wh", 0.8);
        CnnTransfer::Cache cache;
        std::vector<double> out(6);
        t.forward(wp, wh, cache, out);
        auto expect = oracle_cnn_forward(t, wp, wh);
        for (std::size_t m = 0; m < 6; ++m)
            CHECK(out[m] == Catch::Approx(expect[m]).epsilon(1e-6).margin(1e-9));
    }
}

TEST_CASE("forward is a pure function (bitwise determinism)") {
    CnnTransfer t = random_cnn(6, 3, 2, 4, 77);
    auto wp = random_vec(6, 7, "wp");
    auto wh = random_vec(6, 7, "wh");
    CnnTransfer::Cache c1, c2;
    std::vector<double> o1(6), o2(6);
    t.forward(wp, wh, c1, o1);
    t.forward(wp, wh, c2, o2);
    CHECK(o1 == o2);
}

TEST_CASE("backward_input: zero upstream, and finite differences on 10 instances") {
    {
        CnnTransfer t = random_cnn(4, 2, 2, 3, 5);
        CnnTransfer::Cache cache;
        std::vector<double> out(4), grad(4, 1.0), zero(4, 0.0);
        t.forward(random_vec(4, 3, "wp"), random_vec(4, 3, "wh"), cache, out);
        t.backward_input(cache, zero, grad);
        for (double v : grad) CHECK(v == 0.0);
    }
    for (std::uint64_t trial = 0; trial < 10; ++trial) {
        RngStream rng(trial, "bi");
        std::size_t d = 2 + rng.below(7);
        CnnTransfer t = random_cnn(d, 1 + rng.below(4), 1 + rng.below(3), 2 + rng.below(5),
                                   400 + trial);
        auto wp = random_vec(d, trial, "wp2", 0.7);
        auto wh = random_vec(d, trial, "wh2", 0.7);
        auto up = random_vec(d, trial, "up", 1.0);

        CnnTransfer::Cache cache;
        std::vector<double> out(d), analytic(d);
        t.forward(wp, wh, cache, out);
        t.backward_input(cache, up, analytic);

        DenseMatrix wh_m(1, d), an_m(1, d);
        for (std::size_t j = 0; j < d; ++j) {
            wh_m(0, j) = wh[j];
            an_m(0, j) = analytic[j];
        }
        auto f = [&](const DenseMatrix& W) {
            CnnTransfer::Cache c;
            std::vector<double> o(d);
            std::vector<double> w(W.data);
            t.forward(wp, w, c, o);
            return dot(std::span<const double>(o), std::span<const double>(up));
        };
        CHECK(finite_diff_check(f, wh_m, an_m, 1e-4, 1e-4).pass);
    }
}

TEST_CASE("backward_params: b2 gradient is the upstream exactly; zero upstream zeroes all") {
    CnnTransfer t = random_cnn(5, 3, 2, 4, 11);
    CnnTransfer::Cache cache;
    std::vector<double> out(5);
    t.forward(random_vec(5, 9, "wp"), random_vec(5, 9, "wh"), cache, out);

    auto up = random_vec(5, 9, "up");
    TransferGrads g = t.zero_grads();
    t.backward_params(cache, up, g);
    const DenseMatrix& gb2 = g.tensors.back();
    for (std::size_t m = 0; m < 5; ++m) CHECK(gb2(0, m) == up[m]);

    TransferGrads gz = t.zero_grads();
    std::vector<double> zero(5, 0.0);
    t.backward_params(cache, zero, gz);
    for (const DenseMatrix& ten : gz.tensors)
        for (double v : ten.data) CHECK(v == 0.0);
}

TEST_CASE("backward_params passes finite differences per tensor on 10 instances") {
    for (std::uint64_t trial = 0; trial < 10; ++trial) {
        RngStream rng(trial, "bp");
        std::size_t d = 2 + rng.below(7);
        CnnTransfer t = random_cnn(d, 1 + rng.below(4), 1 + rng.below(3), 2 + rng.below(5),
                                   500 + trial);
        auto wp = random_vec(d, trial, "wp3", 0.7);
        auto wh = random_vec(d, trial, "wh3", 0.7);
        auto up = random_vec(d, trial, "up3");

        CnnTransfer::Cache cache;
        std::vector<double> out(d);
        t.forward(wp, wh, cache, out);
        TransferGrads g = t.zero_grads();
        t.backward_params(cache, up, g);

        auto refs = t.parameters();
        for (std::size_t i = 0; i < refs.size(); ++i) {
            DenseMatrix saved = *refs[i].tensor;
            auto f = [&](const DenseMatrix& T) {
                *refs[i].tensor = T;
                CnnTransfer::Cache c;
                std::vector<double> o(d);
                t.forward(wp, wh, c, o);
                *refs[i].tensor = saved;
                return dot(std::span<const double>(o), std::span<const double>(up));
            };
            INFO("tensor " << refs[i].name);
            CHECK(finite_diff_check(f, saved, g.tensors[i], 1e-4, 1e-4).pass);
        }
    }
}

TEST_CASE("ablation architectures (no conv / no fc) keep exact gradients") {
    for (int mode = 0; mode < 2; ++mode) {
        bool use_conv = mode == 1;
        CnnTransfer t = random_cnn(4, 2, 2, 3, 600 + mode, use_conv, !use_conv ? true : false);
        auto wp = random_vec(4, 60, "wp4");
        auto wh = random_vec(4, 60, "wh4");
        auto up = random_vec(4, 60, "up4");
        CnnTransfer::Cache cache;
        std::vector<double> out(4), analytic(4);
        t.forward(wp, wh, cache, out);
        t.backward_input(cache, up, analytic);
        DenseMatrix wh_m(1, 4), an_m(1, 4);
        for (std::size_t j = 0; j < 4; ++j) {
            wh_m(0, j) = wh[j];
            an_m(0, j) = analytic[j];
        }
        auto f = [&](const DenseMatrix& W) {
            CnnTransfer::Cache c;
            std::vector<double> o(4);
            t.forward(wp, std::vector<double>(W.data), c, o);
            return dot(std::span<const double>(o), std::span<const double>(up));
        };
        CHECK(finite_diff_check(f, wh_m, an_m, 1e-4, 1e-4).pass);
    }
}

TEST_CASE("weighted_sum endpoints are exact and the backward map is linear") {
    auto wp = random_vec(6, 8, "wsp");
    auto wh = random_vec(6, 8, "wsh");
    std::vector<double> out(6);
    WeightedSumTransfer::Cache cache;

    WeightedSumTransfer a1 = WeightedSumTransfer::fixed(6, 1.0);
    a1.forward(wp, wh, cache, out);
    CHECK(out == wp);

    WeightedSumTransfer a0 = WeightedSumTransfer::fixed(6, 0.0);
    a0.forward(wp, wh, cache, out);
    CHECK(out == wh);

    WeightedSumTransfer mid = WeightedSumTransfer::fixed(6, 0.3);
    auto up = random_vec(6, 8, "wsu");
    std::vector<double> grad(6);
    mid.forward(wp, wh, cache, out);
    mid.backward_input(cache, up, grad);
    for (std::size_t m = 0; m < 6; ++m) CHECK(grad[m] == Catch::Approx(0.7 * up[m]));

    CHECK(a0.parameters().empty());
}

TEST_CASE("weighted_sum learnable alpha gradient matches finite differences") {
    WeightedSumTransfer t = WeightedSumTransfer::learnable(4, 0.4);
    auto wp = random_vec(4, 9, "lwp");
    auto wh = random_vec(4, 9, "lwh");
    auto up = random_vec(4, 9, "lup");
    WeightedSumTransfer::Cache cache;
    std::vector<double> out(4);
    t.forward(wp, wh, cache, out);
    TransferGrads g = t.zero_grads();
    t.backward_params(cache, up, g);

    auto refs = t.parameters();
    REQUIRE(refs.size() == 1);
    DenseMatrix saved = *refs[0].tensor;
    auto f = [&](const DenseMatrix& L) {
        *refs[0].tensor = L;
        WeightedSumTransfer::Cache c;
        std::vector<double> o(4);
        t.forward(wp, wh, c, o);
        *refs[0].tensor = saved;
        return dot(std::span<const double>(o), std::span<const double>(up));
    };
    CHECK(finite_diff_check(f, saved, g.tensors[0], 1e-4, 1e-6).pass);
}

TEST_CASE("mlp transfer gradients pass finite differences") {
    MlpTransfer t(5, {7, 4});
    RngStream rng(31, "mlp");
    t.init(rng);
    auto wp = random_vec(5, 31, "mwp", 0.6);
    auto wh = random_vec(5, 31, "mwh", 0.6);
    auto up = random_vec(5, 31, "mup");

    MlpTransfer::Cache cache;
    std::vector<double> out(5), gin(5);
    t.forward(wp, wh, cache, out);
    t.backward_input(cache, up, gin);

    DenseMatrix wh_m(1, 5), gin_m(1, 5);
    for (std::size_t j = 0; j < 5; ++j) {
        wh_m(0, j) = wh[j];
        gin_m(0, j) = gin[j];
    }
    auto fi = [&](const DenseMatrix& W) {
        MlpTransfer::Cache c;
        std::vector<double> o(5);
        t.forward(wp, std::vector<double>(W.data), c, o);
        return dot(std::span<const double>(o), std::span<const double>(up));
    };
    CHECK(finite_diff_check(fi, wh_m, gin_m, 1e-4, 1e-4).pass);

    TransferGrads g = t.zero_grads();
    t.backward_params(cache, up, g);
    auto refs = t.parameters();
    for (std::size_t i = 0; i < refs.size(); ++i) {
        DenseMatrix saved = *refs[i].tensor;
        auto f = [&](const DenseMatrix& T) {
            *refs[i].tensor = T;
            MlpTransfer::Cache c;
            std::vector<double> o(5);
            t.forward(wp, wh, c, o);
            *refs[i].tensor = saved;
            return dot(std::span<const double>(o), std::span<const double>(up));
        };
        INFO("tensor " << refs[i].name);
        CHECK(finite_diff_check(f, saved, g.tensors[i], 1e-4, 1e-4).pass);
    }
}

TEST_CASE("apply_group: shape preservation, row independence, loop oracle") {
    CnnTransfer t = random_cnn(6, 3, 2, 4, 70);
    RngStream rng(70, "rows");
    DenseMatrix wp(50, 6), wh(50, 6);
    for (double& v : wp.data) v = rng.normal();
    for (double& v : wh.data) v = rng.normal();

    DenseMatrix out = apply_group(t, wp, wh);
    REQUIRE(out.rows == wp.rows);
    REQUIRE(out.cols == wp.cols);

    // Rowwise equal to independent forward calls.
    for (std::size_t r = 0; r < 50; ++r) {
        CnnTransfer::Cache c;
        std::vector<double> o(6);
        t.forward(wp.row(r), wh.row(r), c, o);
        for (std::size_t m = 0; m < 6; ++m) REQUIRE(out(r, m) == o[m]);
    }

    // Permuting input rows permutes output rows identically.
    std::vector<std::size_t> perm(50);
    std::iota(perm.begin(), perm.end(), 0);
    RngStream prng(71, "perm");
    prng.shuffle(perm);
    DenseMatrix wp2(50, 6), wh2(50, 6);
    for (std::size_t r = 0; r < 50; ++r)
        for (std::size_t m = 0; m < 6; ++m) {
            wp2(r, m) = wp(perm[r], m);
            wh2(r, m) = wh(perm[r], m);
        }
    DenseMatrix out2 = apply_group(t, wp2, wh2);
    for (std::size_t r = 0; r < 50; ++r)
        for (std::size_t m = 0; m < 6; ++m) REQUIRE(out2(r, m) == out(perm[r], m));

    DenseMatrix bad(50, 5);
    CHECK_THROWS_AS(apply_group(t, wp, bad), std::invalid_argument);
}

TEST_CASE("column equivariance of the convolutional stack (H2 only)") {
    const std::size_t d = 7;
    CnnTransfer t = random_cnn(d, 4, 3, 5, 90);
    auto wp = random_vec(d, 90, "ewp");
    auto wh = random_vec(d, 90, "ewh");

    std::vector<std::size_t> perm(d);
    std::iota(perm.begin(), perm.end(), 0);
    RngStream prng(91, "perm");
    prng.shuffle(perm);

    std::vector<double> wp2(d), wh2(d);
    for (std::size_t m = 0; m < d; ++m) {
        wp2[m] = wp[perm[m]];
        wh2[m] = wh[perm[m]];
    }

    CnnTransfer::Cache c1, c2;
    std::vector<double> o1(d), o2(d);
    t.forward(wp, wh, c1, o1);
    t.forward(wp2, wh2, c2, o2);
    for (std::size_t j = 0; j < 3; ++j)
        for (std::size_t m = 0; m < d; ++m)
            CHECK(c2.h2(j, m) == Catch::Approx(c1.h2(j, perm[m])).margin(1e-12));
}
