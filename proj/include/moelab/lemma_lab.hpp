#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "moelab/constructions.hpp"
#include "moelab/moe.hpp"

namespace moelab {

struct LemmaReport {
    std::string lemma_id;
    nlohmann::json params;
    nlohmann::json stats;
    nlohmann::json thresholds;
    bool pass = false;
    std::uint64_t seed = 0;
    long n = 0;
    double runtime_ms = 0.0;

    nlohmann::json to_json() const;
};

// Wilson score interval for a binomial proportion, z = 1.96 by default.
std::pair<double, double> wilson_interval(long hits, long n, double z = 1.96);

struct RegionRecord {
    ActiveSet set;
    long hits = 0;
    double measure = 0.0;
    double wilson_lo = 0.0;
    double wilson_hi = 0.0;
};

struct RegionCensus {
    std::vector<RegionRecord> regions;  // sparse: observed regions only, sorted
    long n_samples = 0;
    long n_regions_observed = 0;
    long balance_count = 0;         // point-estimate count at the 1/(2 C(m,k)) threshold
    long balance_count_wilson = 0;  // same count using the lower Wilson bound
    double balance_threshold = 0.0;
};

RegionCensus region_census(const MoELayer& layer, const InputDistribution& dist,
                           long n_samples, std::uint64_t seed);

// Routing balance, Eq. (3): pass iff balance_count_wilson >= ceil(C(m,k)/9).
LemmaReport check_routing_balance(const RegionCensus& census, int m, int k);

// f(delta) = P[X_i > X_j for all i in [k], j not in [k]] with the first k
// means shifted by delta. Bound: exp(delta k sqrt(2 log m)) / C(m,k).
LemmaReport order_stat_probability(int m, int k, double delta, long n_trials,
                                   std::uint64_t seed);

// Chi-squared tails: P[Z <= d - 2 sqrt(dx)] and P[Z >= d + 2 sqrt(dx) + 2x],
// both bounded by e^{-x}.
LemmaReport chi2_tail_check(int d, double x, long n_trials, std::uint64_t seed);

// Tube volume: first n_constrained coordinates of x - p confined to width-2t
// intervals. Gaussian case samples N(0, I_d) with bound (t sqrt(2/pi))^n;
// ball case samples Unif[B] with half-width t/sqrt(d) and bound
// 2^{-d+1} + (8t)^n.
LemmaReport tube_volume_estimate(const InputDistribution& dist, const Eigen::VectorXd& center,
                                 double t, int n_constrained, long n_samples,
                                 std::uint64_t seed);

// kappa = ceil(kappa_constant * (1 + ln(1/mu_hat(U)))), capped at d;
// pass iff lambda_{d-kappa+1}(Sigma_U) >= 1/(30000 d).
LemmaReport covariance_rank_check(const InputDistribution& dist,
                                  const std::function<bool(const Eigen::VectorXd&)>& indicator,
                                  double kappa_constant, long n_samples, std::uint64_t seed);

// Rank-tail separation of expert-sum differences: minimum over sampled pairs
// (|S cap S'| <= (1-eps)k) of svd_tail(M_S - M_S', kappa), compared against
// c_const * d * eps.
LemmaReport linear_separation_check(const LinearExperts& experts, int k, double eps,
                                    int kappa, long n_pairs, double c_const,
                                    std::uint64_t seed);

// The hypergraph incoherence statistic for sparse-diagonal ReLU experts:
// eigenvalue tail of sum_j M_{S_j}^T M_{S_j} beyond index kw(1+1/10000),
// cross-checked against the diagonal fast path, the unique-index counting
// bound, and the stacking inequality over sampled rank-kw projections.
LemmaReport relu_incoherence_check(const ReluExperts& experts, int k, int w, int R,
                                   long n_tuples, std::uint64_t seed);

// Unique elements among n uniform draws from [d]: E[X_n] matches
// d(1-(1-1/d)^n); tail P[X <= min(n,d)/12] <= exp(-min(n,d)/18).
LemmaReport unique_count_tail(long n, int d, long n_trials, std::uint64_t seed);

// Monte-Carlo E||f(x)||^2 <= 1 + 3 stderr.
LemmaReport norm_upper_check(const MoELayer& layer, const InputDistribution& dist,
                             long n_samples, std::uint64_t seed);

} // namespace moelab
