#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "moelab/checkpoint.hpp"

using namespace moelab;

namespace {

MoELayer random_layer(std::uint64_t seed) {
    MoEConfig cfg = make_config(5, 2, 3, 7, Activation::Relu, Gating::SoftmaxTopK, true);
    MoELayer layer = MoELayer::zeros(cfg);
    Rng rng(seed);
    for (int i = 0; i < cfg.m; ++i) {
        layer.bias(i) = rng.normal();
        for (int j = 0; j < cfg.d; ++j) layer.routing(i, j) = rng.normal();
    }
    for (int e = 0; e < cfg.m; ++e)
        for (int c = 0; c < cfg.w; ++c)
            for (int r = 0; r < cfg.d; ++r) {
                layer.A[e](r, c) = rng.normal();
                layer.B[e](r, c) = rng.normal();
            }
    return layer;
}

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("checkpoint round trip is exact") {
    MoELayer layer = random_layer(123);
    const std::string path = "ckpt_roundtrip.bin";
    save_checkpoint(layer, path, 123);
    MoELayer back = load_checkpoint(path);
    CHECK(back.config.m == layer.config.m);
    CHECK(back.config.k == layer.config.k);
    CHECK(back.config.w == layer.config.w);
    CHECK(back.config.d == layer.config.d);
    CHECK(back.config.activation == layer.config.activation);
    CHECK(back.config.gating == layer.config.gating);
    CHECK(back.config.route_bias == layer.config.route_bias);
    CHECK((back.routing - layer.routing).norm() == 0.0);
    CHECK((back.bias - layer.bias).norm() == 0.0);
    for (int e = 0; e < layer.config.m; ++e) {
        CHECK((back.A[e] - layer.A[e]).norm() == 0.0);
        CHECK((back.B[e] - layer.B[e]).norm() == 0.0);
    }
    std::remove(path.c_str());
}

TEST_CASE("saving twice is byte identical") {
    MoELayer layer = random_layer(7);
    save_checkpoint(layer, "ckpt_a.bin", 7);
    save_checkpoint(layer, "ckpt_b.bin", 7);
    CHECK(slurp("ckpt_a.bin") == slurp("ckpt_b.bin"));
    std::remove("ckpt_a.bin");
    std::remove("ckpt_b.bin");
}

TEST_CASE("header is readable standalone and starts with the magic") {
    MoELayer layer = random_layer(99);
    save_checkpoint(layer, "ckpt_hdr.bin", 4242);
    CHECK(slurp("ckpt_hdr.bin").substr(0, 8) == "MOECKPT1");
    nlohmann::json hdr = read_checkpoint_header("ckpt_hdr.bin");
    CHECK(hdr["seed_provenance"] == 4242);
    CHECK(hdr["config"]["m"] == 5);
    CHECK(hdr["dtype"] == "float64");
    std::remove("ckpt_hdr.bin");
}

TEST_CASE("corrupt magic is rejected") {
    std::ofstream os("ckpt_bad.bin", std::ios::binary);
    os << "NOTACKPTxxxxxxxxxxxxxxxx";
    os.close();
    CHECK_THROWS_AS(load_checkpoint("ckpt_bad.bin"), std::runtime_error);
    CHECK_THROWS_AS(load_checkpoint("ckpt_missing.bin"), std::runtime_error);
    std::remove("ckpt_bad.bin");
}
