#include <doctest.h>

#include <cmath>

#include "moelab/constructions.hpp"
#include "moelab/matching.hpp"
#include "moelab/subsets.hpp"

using namespace moelab;

namespace {

ConfigGraph singleton_graph(const std::vector<double>& caps, int delta_threshold) {
    std::vector<ActiveSet> sets;
    for (std::size_t i = 0; i < caps.size(); ++i) sets.push_back({{static_cast<int>(i)}});
    GraphBuildOptions opt;
    opt.delta_threshold = delta_threshold;
    opt.vertex_mass_cap = 1e9;
    return build_config_graph(sets, caps, caps, opt);
}

} // namespace

TEST_CASE("singletons with threshold 1 form the complete graph") {
    ConfigGraph g = singleton_graph({0.1, 0.2, 0.3, 0.4}, 1);
    CHECK(g.vertices.size() == 4);
    CHECK(g.edges.size() == 6);
}

TEST_CASE("pairs at |S delta S'| = 2 pass a threshold of 2, not 3") {
    std::vector<ActiveSet> sets = {{{1, 2}}, {{1, 3}}};
    std::vector<double> mass = {0.5, 0.5};
    GraphBuildOptions opt;
    opt.vertex_mass_cap = 1.0;
    opt.delta_threshold = 2;
    CHECK(build_config_graph(sets, mass, mass, opt).edges.size() == 1);
    opt.delta_threshold = 3;
    CHECK(build_config_graph(sets, mass, mass, opt).edges.empty());
}

TEST_CASE("vertex mass cap filters heavy regions") {
    std::vector<ActiveSet> sets = {{{0}}, {{1}}, {{2}}};
    std::vector<double> joint = {0.2, 0.2, 0.2};
    std::vector<double> marginal = {0.2, 0.9, 0.2};
    GraphBuildOptions opt;
    opt.delta_threshold = 1;
    opt.vertex_mass_cap = 0.5;
    ConfigGraph g = build_config_graph(sets, joint, marginal, opt);
    CHECK(g.vertices.size() == 2);
    CHECK(g.edges.size() == 1);
}

TEST_CASE("triangle: greedy is maximal but the LP optimum is 1.5x larger") {
    ConfigGraph g = singleton_graph({1.0, 1.0, 1.0}, 1);
    REQUIRE(g.edges.size() == 3);
    MatchingSolution sol = greedy_fractional_matching(g);
    CHECK(sol.total == doctest::Approx(1.0));
    CHECK(matching_is_maximal(g, sol));
    int unsat = 0;
    for (bool s : sol.saturated)
        if (!s) ++unsat;
    CHECK(unsat <= 1);
    CHECK(fractional_matching_lp_optimum(g) == doctest::Approx(1.5));
}

TEST_CASE("path a-b-c by hand") {
    // vertices {0},{1},{2} with caps 1; edges must be (a,b) and (b,c) only,
    // so use sets where |a delta c| is too small: a={1,2}, b={3,4}, c={1,5}
    std::vector<ActiveSet> sets = {{{1, 2}}, {{3, 4}}, {{1, 5}}};
    std::vector<double> caps = {1.0, 1.0, 1.0};
    GraphBuildOptions opt;
    opt.delta_threshold = 3;  // a-c has |delta| = 2, both a-b and b-c have 4
    opt.vertex_mass_cap = 2.0;
    ConfigGraph g = build_config_graph(sets, caps, caps, opt);
    REQUIRE(g.edges.size() == 2);
    MatchingSolution sol = greedy_fractional_matching(g);
    CHECK(sol.total == doctest::Approx(1.0));
    CHECK(fractional_matching_lp_optimum(g) == doctest::Approx(1.0));
    CHECK(matching_is_maximal(g, sol));
    // b saturates; exactly one of the ends stays empty
    CHECK(sol.saturated[1]);
    CHECK(sol.loads[0] + sol.loads[2] == doctest::Approx(1.0));
}

TEST_CASE("no edges means an empty, all-unsaturated solution") {
    ConfigGraph g = singleton_graph({0.5, 0.5}, 3);
    MatchingSolution sol = greedy_fractional_matching(g);
    CHECK(sol.total == 0.0);
    for (bool s : sol.saturated) CHECK(!s);
    CHECK(matching_is_maximal(g, sol));
}

TEST_CASE("adding capacity never decreases the greedy total") {
    std::vector<double> caps = {0.3, 0.7, 0.2, 0.5};
    ConfigGraph g = singleton_graph(caps, 1);
    const double base = greedy_fractional_matching(g).total;
    for (std::size_t v = 0; v < caps.size(); ++v) {
        ConfigGraph g2 = g;
        g2.capacities[v] += 0.25;
        CHECK(greedy_fractional_matching(g2).total >= base - 1e-12);
    }
}

TEST_CASE("hypergraph union rule and degraded-threshold reporting") {
    std::vector<ActiveSet> sets = {{{0, 1}}, {{2, 3}}, {{0, 2}}, {{4, 5}}};
    std::vector<double> mass = {0.25, 0.25, 0.25, 0.25};
    GraphBuildOptions opt;
    opt.rule = OverlapRule::HyperUnion;
    opt.R = 3;
    opt.union_threshold = 5;
    opt.vertex_mass_cap = 1.0;
    ConfigGraph g = build_config_graph(sets, mass, mass, opt);
    CHECK(g.hyper);
    CHECK(!g.degraded);
    CHECK(!g.edges.empty());
    for (const auto& e : g.edges) {
        CHECK(e.size() == 3);
        std::vector<ActiveSet> members;
        for (int v : e) members.push_back(g.vertices[v]);
        CHECK(moelab::set_union(members).indices.size() >= 5);
    }

    opt.union_threshold = 100;  // unreachable -> degrade and report
    ConfigGraph g2 = build_config_graph(sets, mass, mass, opt);
    CHECK(g2.degraded);
    CHECK(g2.effective_union_threshold == 6);
}

TEST_CASE("self-certificate is sound and near zero") {
    AssembledMoE a = assemble_theorem_moe(Activation::Constant, 6, 2, 1, 64, 21, {}, 0);
    InputDistribution dist{InputDistribution::Kind::GaussianIso, 64};
    Certificate cert = error_lower_bound_constant(a.layer, a.layer, dist, 20000, 21);
    CHECK(cert.mc_error == 0.0);
    CHECK(cert.bound <= 1e-12);
    CHECK(cert.sound());
}

TEST_CASE("certificate against the global mean is positive and sound") {
    AssembledMoE a = assemble_theorem_moe(Activation::Constant, 6, 2, 1, 64, 22, {}, 0);
    InputDistribution dist{InputDistribution::Kind::GaussianIso, 64};

    // the best single-region model: one expert outputting the global mean
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(64);
    Rng rng(22);
    const int n_mean = 20000;
    for (int i = 0; i < n_mean; ++i)
        mean += forward(a.layer, sample_input_row(dist, rng));
    mean /= n_mean;
    MoEConfig one = make_config(1, 1, 1, 64, Activation::Constant, Gating::EqualHard, false);
    MoELayer single = MoELayer::zeros(one);
    single.A[0].col(0) = mean;

    Certificate cert = error_lower_bound_constant(a.layer, single, dist, 50000, 23);
    CHECK(cert.bound > 0.0);
    CHECK(cert.sound());
    CHECK(cert.mc_error + 3.0 * cert.mc_stderr >= cert.bound);
}

TEST_CASE("certificate rejects non-constant or soft layers") {
    AssembledMoE relu = assemble_theorem_moe(Activation::Relu, 4, 2, 4, 16, 1, {}, 0);
    InputDistribution dist{InputDistribution::Kind::GaussianIso, 16};
    CHECK_THROWS_AS(error_lower_bound_constant(relu.layer, relu.layer, dist, 100, 1),
                    std::invalid_argument);
}

TEST_CASE("entropy gap: exact big-integer path with log-gamma cross-check") {
    // floor-to-zero case: denominators collapse to 1
    LemmaReport r0 = entropy_gap_check(100, 10, 20, 3, 1.0, 0.05);
    CHECK(r0.pass);
    CHECK(r0.stats["floor_cprime_k"].get<long>() == 0);
    CHECK(r0.stats["conclusion_holds"].get<bool>());  // C(20,3) = 1140 <= C(100,10)/1000

    // ~1e14 single-active experts vs C(256,8): the headline comparison
    LemmaReport r1 = entropy_gap_check(256, 8, 100000000000000L, 1, 1.0, 0.25);
    CHECK(r1.pass);
    CHECK(r1.stats["log2_count_student"].get<double>() ==
          doctest::Approx(std::log2(1e14)).epsilon(1e-6));

    // m = 2k boundary with k = 1000 exercises the big-int path
    LemmaReport r2 = entropy_gap_check(2000, 1000, 100, 5, 1.0, 0.01);
    CHECK(r2.pass);
    CHECK(r2.stats["float_crosscheck_agrees"].get<bool>());
}
