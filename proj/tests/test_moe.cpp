#include <doctest.h>

#include <cmath>

#include "moelab/binomial.hpp"
#include "moelab/moe.hpp"

using namespace moelab;

TEST_CASE("config validation") {
    CHECK_THROWS_AS(make_config(2, 3, 1, 4, Activation::Relu, Gating::EqualHard, false),
                    std::invalid_argument);
    CHECK_THROWS_AS(make_config(0, 0, 1, 4, Activation::Relu, Gating::EqualHard, false),
                    std::invalid_argument);
    CHECK_NOTHROW(make_config(4, 4, 1, 4, Activation::Relu, Gating::EqualHard, false));
}

TEST_CASE("parameter counting convention") {
    MoEConfig cfg = make_config(8, 2, 7, 3, Activation::Relu, Gating::EqualHard, false);
    ParamCount pc = count_params(cfg);
    CHECK(pc.total == 336);   // 2 m w d
    CHECK(pc.active == 84);   // 2 k w d
}

TEST_CASE("configuration counts") {
    CHECK(config_count(6, 2) == 15);
    CHECK(config_count(5, 0) == 1);
    CHECK(config_count(5, 6) == 0);
    CHECK(config_count(256, 8) > BigInt("400000000000000"));
    // log variant tracks the exact one
    CHECK(std::abs(log2_config_count(40, 13) -
                   std::log2(static_cast<double>(config_count(40, 13)))) < 1e-9);
}

TEST_CASE("top-k tie break toward the lower index") {
    Eigen::VectorXd s(4);
    s << 1.0, 2.0, 2.0, 0.5;
    ActiveSet sel = top_k_by_score(s, 2);
    CHECK(sel.indices == std::vector<int>{1, 2});

    s << 3.0, 3.0, 3.0, 3.0;
    sel = top_k_by_score(s, 2);
    CHECK(sel.indices == std::vector<int>{0, 1});
}

TEST_CASE("routing always selects exactly k experts (partition property)") {
    MoEConfig cfg = make_config(6, 3, 2, 8, Activation::Relu, Gating::EqualHard, false);
    MoELayer layer = MoELayer::zeros(cfg);
    Rng rng(11);
    for (int i = 0; i < cfg.m; ++i)
        for (int j = 0; j < cfg.d; ++j) layer.routing(i, j) = rng.normal();
    InputDistribution dist{InputDistribution::Kind::GaussianIso, cfg.d};
    for (int t = 0; t < 500; ++t) {
        ActiveSet sel = route(layer, sample_input_row(dist, rng));
        CHECK(sel.indices.size() == 3);
        for (std::size_t i = 1; i < sel.indices.size(); ++i)
            CHECK(sel.indices[i - 1] < sel.indices[i]);
    }
}

TEST_CASE("equal-hard constant forward sums the selected column sums") {
    MoEConfig cfg = make_config(3, 2, 2, 2, Activation::Constant, Gating::EqualHard, false);
    MoELayer layer = MoELayer::zeros(cfg);
    layer.routing << 1, 0, 0, 1, -1, -1;  // x = (1, 0.5) selects experts {0, 1}
    layer.A[0] << 1, 2, 3, 4;
    layer.A[1] << 10, 0, 0, 10;
    layer.A[2] << 100, 100, 100, 100;
    Eigen::VectorXd x(2);
    x << 1.0, 0.5;
    Eigen::VectorXd y = forward(layer, x);
    CHECK(y(0) == doctest::Approx(1 + 2 + 10));
    CHECK(y(1) == doctest::Approx(3 + 4 + 10));
}

TEST_CASE("gating modes agree at k = 1") {
    MoEConfig hard = make_config(5, 1, 3, 6, Activation::Relu, Gating::EqualHard, false);
    MoEConfig soft = hard;
    soft.gating = Gating::SoftmaxTopK;
    Rng rng(3);
    MoELayer a = MoELayer::zeros(hard);
    for (int i = 0; i < hard.m; ++i)
        for (int j = 0; j < hard.d; ++j) a.routing(i, j) = rng.normal();
    for (int e = 0; e < hard.m; ++e)
        for (int c = 0; c < hard.w; ++c)
            for (int r = 0; r < hard.d; ++r) {
                a.A[e](r, c) = rng.normal();
                a.B[e](r, c) = rng.normal();
            }
    MoELayer b = a;
    b.config = soft;
    InputDistribution dist{InputDistribution::Kind::GaussianIso, hard.d};
    for (int t = 0; t < 50; ++t) {
        Eigen::VectorXd x = sample_input_row(dist, rng);
        CHECK((forward(a, x) - forward(b, x)).norm() < 1e-12);
    }
}

TEST_CASE("batched forward is bit-identical to per-row forward") {
    MoEConfig cfg = make_config(4, 2, 3, 5, Activation::Relu, Gating::SoftmaxTopK, false);
    Rng rng(17);
    MoELayer layer = MoELayer::zeros(cfg);
    for (int i = 0; i < cfg.m; ++i)
        for (int j = 0; j < cfg.d; ++j) layer.routing(i, j) = rng.normal();
    for (int e = 0; e < cfg.m; ++e)
        for (int c = 0; c < cfg.w; ++c)
            for (int r = 0; r < cfg.d; ++r) {
                layer.A[e](r, c) = rng.normal();
                layer.B[e](r, c) = rng.normal();
            }
    Eigen::MatrixXd X = sample_inputs({InputDistribution::Kind::UnitBall, cfg.d}, 32, 23);
    Eigen::MatrixXd Y = forward_batch(layer, X);
    for (int r = 0; r < X.rows(); ++r)
        CHECK((Y.row(r).transpose() - forward(layer, X.row(r).transpose())).norm() == 0.0);
}

TEST_CASE("non-finite output is reported, not clamped") {
    MoEConfig cfg = make_config(2, 1, 1, 2, Activation::Linear, Gating::EqualHard, false);
    MoELayer layer = MoELayer::zeros(cfg);
    layer.routing << 1, 0, 0, 1;
    layer.A[0](0, 0) = std::numeric_limits<double>::infinity();
    layer.B[0](0, 0) = 1.0;
    Eigen::VectorXd x(2);
    x << 1.0, 0.0;
    CHECK_THROWS_AS(forward(layer, x), std::runtime_error);
}

TEST_CASE("input distributions have the advertised scale") {
    const int d = 32;
    Rng rng(29);
    InputDistribution gauss{InputDistribution::Kind::GaussianIso, d};
    InputDistribution ball{InputDistribution::Kind::UnitBall, d};
    double g2 = 0, bmax = 0, b2 = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        g2 += sample_input_row(gauss, rng).squaredNorm();
        double nb = sample_input_row(ball, rng).norm();
        bmax = std::max(bmax, nb);
        b2 += nb * nb;
    }
    CHECK(g2 / n == doctest::Approx(1.0).epsilon(0.05));  // E||x||^2 = 1 for N(0, I/d)
    CHECK(bmax <= 1.0);
    CHECK(b2 / n == doctest::Approx(d / (d + 2.0)).epsilon(0.05));
}
