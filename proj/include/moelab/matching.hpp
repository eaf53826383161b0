#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "moelab/lemma_lab.hpp"
#include "moelab/moe.hpp"

namespace moelab {

enum class OverlapRule { SymmetricDifference, HyperUnion };

struct GraphBuildOptions {
    OverlapRule rule = OverlapRule::SymmetricDifference;
    int delta_threshold = 1;    // graph: edge iff |S delta S'| >= delta_threshold
    long union_threshold = 0;   // hypergraph: hyperedge iff |union of tuple| >= threshold
    int R = 2;                  // hyperedge arity
    double vertex_mass_cap = 1.0;  // drop vertices whose unconditional mass exceeds this
    long max_edges = 200000;    // hyperedge enumeration cap; sampled beyond it
    std::uint64_t seed = 0;     // hyperedge sampling
};

struct ConfigGraph {
    std::vector<ActiveSet> vertices;
    std::vector<double> capacities;        // mu_hat(U_S cap V_i)
    std::vector<std::vector<int>> edges;   // indices into vertices; size 2 or R
    bool hyper = false;
    long effective_union_threshold = 0;    // hypergraph; lowered when degraded
    bool degraded = false;                 // union target unreachable
};

// joint_masses[j] = mu_hat(U_{sets[j]} cap V_i); region_masses[j] = mu_hat(U_{sets[j]}).
ConfigGraph build_config_graph(const std::vector<ActiveSet>& sets,
                               const std::vector<double>& joint_masses,
                               const std::vector<double>& region_masses,
                               const GraphBuildOptions& opt);

struct MatchingSolution {
    std::vector<double> weights;   // xi_e per edge
    std::vector<double> loads;     // per-vertex sum of incident weights
    std::vector<bool> saturated;   // load == capacity within 1e-12
    double total = 0.0;
};

// Deterministic greedy maximal fractional matching: edges in given order,
// xi_e = min residual capacity among the edge's vertices, repeated to fixpoint.
MatchingSolution greedy_fractional_matching(const ConfigGraph& graph);

// true iff no edge has all endpoints unsaturated
bool matching_is_maximal(const ConfigGraph& graph, const MatchingSolution& sol);

// Exact LP optimum by dense simplex for small instances (<= 1000 edges),
// used to quantify the greedy gap.
double fractional_matching_lp_optimum(const ConfigGraph& graph);

struct Certificate {
    bool empty = false;
    double mc_error = 0.0;     // direct MC estimate of E||f - f'||^2
    double mc_stderr = 0.0;
    double bound = 0.0;        // matched Young's-inequality lower bound, actual norms
    double bound_floor = 0.0;  // same with the |S delta S'|/(4k) lemma floor
    long n_samples = 0;
    std::uint64_t seed = 0;
    nlohmann::json graph_stats;
    nlohmann::json per_region;

    bool sound(double slack = 3.0) const {
        return empty || mc_error + slack * mc_stderr >= bound - 1e-12;
    }
    nlohmann::json to_json() const;
};

// Theorem-1-style certificate for two constant-activation EqualHard layers:
// one shared MC pass estimates the joint masses, then a per-region greedy
// matching accumulates bound = sum xi_e * 0.5 ||u_S - u_S'||^2.
Certificate error_lower_bound_constant(const MoELayer& f, const MoELayer& f_prime,
                                       const InputDistribution& dist, long n_samples,
                                       std::uint64_t seed, int delta_threshold = 0,
                                       double vertex_cap_factor = 20.0);

// Exact big-integer evaluation of the binomial-gap claims:
// C(m',k') < c*C(m,k)^0.99 and C(m',k') <= (1/1000) C(m,k)/(C(m,fl)C(k,fl)),
// fl = floor(c' k). Pass = the implication claimed by the appendix.
LemmaReport entropy_gap_check(long m, long k, long m_prime, long k_prime,
                              double c, double c_prime);

} // namespace moelab
