#include "moelab/lemma_lab.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "moelab/binomial.hpp"
#include "moelab/spectral.hpp"
#include "moelab/subsets.hpp"

namespace moelab {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// paper indices are 1-based: "sum over i >= threshold" skips ceil(threshold)-1 values
int skip_count(double threshold) {
    return std::max(0, static_cast<int>(std::ceil(threshold)) - 1);
}

double proportion_stderr(double p, long n) {
    return std::sqrt(std::max(p * (1.0 - p), 0.0) / static_cast<double>(n));
}

} // namespace

nlohmann::json LemmaReport::to_json() const {
    return nlohmann::json{{"lemma_id", lemma_id}, {"params", params},
                          {"stats", stats},       {"thresholds", thresholds},
                          {"pass", pass},         {"seed", seed},
                          {"n", n},               {"runtime_ms", runtime_ms}};
}

std::pair<double, double> wilson_interval(long hits, long n, double z) {
    if (n <= 0) return {0.0, 1.0};
    double p = static_cast<double>(hits) / static_cast<double>(n);
    double z2 = z * z;
    double denom = 1.0 + z2 / n;
    double center = (p + z2 / (2.0 * n)) / denom;
    double half = z / denom * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
    return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

RegionCensus region_census(const MoELayer& layer, const InputDistribution& dist,
                           long n_samples, std::uint64_t seed) {
    if (layer.config.gating != Gating::EqualHard)
        throw std::invalid_argument("region_census requires EqualHard routing");
    Rng rng(seed);
    std::map<std::vector<int>, long> tally;
    for (long i = 0; i < n_samples; ++i) {
        Eigen::VectorXd x = sample_input_row(dist, rng);
        tally[route(layer, x).indices] += 1;
    }
    RegionCensus census;
    census.n_samples = n_samples;
    census.n_regions_observed = static_cast<long>(tally.size());
    census.balance_threshold =
        0.5 / config_count(layer.config.m, layer.config.k).convert_to<double>();
    for (const auto& [indices, hits] : tally) {
        RegionRecord rec;
        rec.set = ActiveSet{indices};
        rec.hits = hits;
        rec.measure = static_cast<double>(hits) / static_cast<double>(n_samples);
        std::tie(rec.wilson_lo, rec.wilson_hi) = wilson_interval(hits, n_samples);
        if (rec.measure >= census.balance_threshold) ++census.balance_count;
        if (rec.wilson_lo >= census.balance_threshold) ++census.balance_count_wilson;
        census.regions.push_back(std::move(rec));
    }
    return census;
}

LemmaReport check_routing_balance(const RegionCensus& census, int m, int k) {
    auto t0 = Clock::now();
    double cmk = config_count(m, k).convert_to<double>();
    long required = static_cast<long>(std::ceil(cmk / 9.0));
    LemmaReport rep;
    rep.lemma_id = "routing-balance";
    rep.params = {{"m", m}, {"k", k}};
    rep.n = census.n_samples;
    rep.stats = {{"balance_count", census.balance_count},
                 {"balance_count_wilson", census.balance_count_wilson},
                 {"n_regions_observed", census.n_regions_observed},
                 {"balance_threshold", census.balance_threshold}};
    rep.thresholds = {{"required_count", required}};
    rep.pass = census.balance_count_wilson >= required;
    rep.runtime_ms = ms_since(t0);
    return rep;
}

LemmaReport order_stat_probability(int m, int k, double delta, long n_trials,
                                   std::uint64_t seed) {
    auto t0 = Clock::now();
    Rng rng(seed);
    long hits = 0;
    std::vector<double> x(static_cast<std::size_t>(m));
    for (long t = 0; t < n_trials; ++t) {
        double min_first = std::numeric_limits<double>::infinity();
        double max_rest = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < m; ++i) {
            double v = rng.normal() + (i < k ? delta : 0.0);
            if (i < k) min_first = std::min(min_first, v);
            else max_rest = std::max(max_rest, v);
        }
        if (min_first > max_rest) ++hits;
    }
    double est = static_cast<double>(hits) / n_trials;
    double se = proportion_stderr(est, n_trials);
    double bound = std::exp(delta * k * std::sqrt(2.0 * std::log(static_cast<double>(m)))) /
                   config_count(m, k).convert_to<double>();
    LemmaReport rep;
    rep.lemma_id = "order-statistics";
    rep.params = {{"m", m}, {"k", k}, {"delta", delta}};
    rep.seed = seed;
    rep.n = n_trials;
    rep.stats = {{"estimate", est}, {"stderr", se}};
    rep.thresholds = {{"bound", bound}};
    rep.pass = est - 3.0 * se <= bound;
    rep.runtime_ms = ms_since(t0);
    return rep;
}

LemmaReport chi2_tail_check(int d, double x, long n_trials, std::uint64_t seed) {
    auto t0 = Clock::now();
    Rng rng(seed);
    const double lo = d - 2.0 * std::sqrt(d * x);
    const double hi = d + 2.0 * std::sqrt(d * x) + 2.0 * x;
    long hits_lo = 0, hits_hi = 0;
    for (long t = 0; t < n_trials; ++t) {
        double z = 0.0;
        for (int i = 0; i < d; ++i) {
            double g = rng.normal();
            z += g * g;
        }
        if (z <= lo) ++hits_lo;
        if (z >= hi) ++hits_hi;
    }
    double p_lo = static_cast<double>(hits_lo) / n_trials;
    double p_hi = static_cast<double>(hits_hi) / n_trials;
    double se_lo = proportion_stderr(p_lo, n_trials);
    double se_hi = proportion_stderr(p_hi, n_trials);
    double bound = std::exp(-x);
    LemmaReport rep;
    rep.lemma_id = "chi2-tail";
    rep.params = {{"d", d}, {"x", x}};
    rep.seed = seed;
    rep.n = n_trials;
    rep.stats = {{"lower_tail", p_lo}, {"upper_tail", p_hi},
                 {"stderr_lower", se_lo}, {"stderr_upper", se_hi}};
    rep.thresholds = {{"bound", bound}};
    rep.pass = p_lo <= bound + 3.0 * se_lo && p_hi <= bound + 3.0 * se_hi;
    rep.runtime_ms = ms_since(t0);
    return rep;
}

LemmaReport tube_volume_estimate(const InputDistribution& dist, const Eigen::VectorXd& center,
                                 double t, int n_constrained, long n_samples,
                                 std::uint64_t seed) {
    auto t0 = Clock::now();
    const int d = dist.d;
    if (center.size() != d) throw std::invalid_argument("tube center dimension mismatch");
    const bool gaussian = dist.kind == InputDistribution::Kind::GaussianIso;
    const double half_width = gaussian ? t : t / std::sqrt(static_cast<double>(d));
    Rng rng(seed);
    long hits = 0;
    for (long i = 0; i < n_samples; ++i) {
        Eigen::VectorXd x = sample_input_row(dist, rng);
        if (gaussian) x *= std::sqrt(static_cast<double>(d));  // N(0, I_d) for the lemma's units
        bool inside = true;
        for (int j = 0; j < n_constrained && inside; ++j)
            inside = std::abs(x[j] - center[j]) <= half_width;
        if (inside) ++hits;
    }
    double est = static_cast<double>(hits) / n_samples;
    double se = proportion_stderr(est, n_samples);
    double bound = gaussian
                       ? std::pow(t * std::sqrt(2.0 / M_PI), n_constrained)
                       : std::pow(2.0, -d + 1) + std::pow(8.0 * t, n_constrained);
    LemmaReport rep;
    rep.lemma_id = "tube-volume";
    rep.params = {{"distribution", gaussian ? "gaussian" : "ball"},
                  {"d", d}, {"t", t}, {"n_constrained", n_constrained}};
    rep.seed = seed;
    rep.n = n_samples;
    rep.stats = {{"estimate", est}, {"stderr", se}};
    rep.thresholds = {{"bound", bound}};
    rep.pass = est <= bound + 3.0 * se;
    rep.runtime_ms = ms_since(t0);
    return rep;
}

LemmaReport covariance_rank_check(const InputDistribution& dist,
                                  const std::function<bool(const Eigen::VectorXd&)>& indicator,
                                  double kappa_constant, long n_samples, std::uint64_t seed) {
    auto t0 = Clock::now();
    const int d = dist.d;
    CovarianceEstimate est = conditioned_covariance(dist, indicator, n_samples, seed);
    int kappa_raw = static_cast<int>(
        std::ceil(kappa_constant * (1.0 + std::log(1.0 / est.acceptance_rate))));
    bool vacuous = kappa_raw >= d;
    int kappa = std::min(kappa_raw, d);
    SpectrumResult spec = sym_eig(est.covariance);
    // lambda_{d-kappa+1} in 1-based nonincreasing order
    double lambda = spec.values[static_cast<std::size_t>(d - kappa)];
    double floor_bound = 1.0 / (30000.0 * d);
    LemmaReport rep;
    rep.lemma_id = "covariance-rank";
    rep.params = {{"d", d},
                  {"distribution", dist.kind == InputDistribution::Kind::GaussianIso ? "gaussian" : "ball"},
                  {"kappa_constant", kappa_constant}};
    rep.seed = seed;
    rep.n = n_samples;
    rep.stats = {{"acceptance_rate", est.acceptance_rate},
                 {"n_accepted", est.n_accepted},
                 {"kappa", kappa},
                 {"kappa_uncapped", kappa_raw},
                 {"vacuous", vacuous},
                 {"lambda", lambda}};
    rep.thresholds = {{"floor", floor_bound}};
    rep.pass = lambda >= floor_bound;
    rep.runtime_ms = ms_since(t0);
    return rep;
}

LemmaReport linear_separation_check(const LinearExperts& experts, int k, double eps,
                                    int kappa, long n_pairs, double c_const,
                                    std::uint64_t seed) {
    auto t0 = Clock::now();
    const int m = static_cast<int>(experts.A.size());
    const int d = static_cast<int>(experts.A[0].rows());
    const int w = static_cast<int>(experts.A[0].cols());
    Rng rng(seed);
    double min_stat = std::numeric_limits<double>::infinity();
    long used = 0;
    for (long attempt = 0; used < n_pairs && attempt < 100 * n_pairs; ++attempt) {
        ActiveSet sa = sample_subset(m, k, rng);
        ActiveSet sb = sample_subset(m, k, rng);
        if (intersection_size(sa, sb) > (1.0 - eps) * k) continue;
        Eigen::MatrixXd diff = Eigen::MatrixXd::Zero(d, d);
        for (int i : sa.indices) diff += experts.materialize(i);
        for (int i : sb.indices) diff -= experts.materialize(i);
        min_stat = std::min(min_stat, svd_tail(diff, kappa));
        ++used;
    }
    if (used == 0) throw std::runtime_error("linear_separation_check: no qualifying pairs sampled");
    double threshold = c_const * d * eps;
    LemmaReport rep;
    rep.lemma_id = "linear-separation";
    rep.params = {{"m", m}, {"k", k}, {"w", w}, {"d", d}, {"eps", eps},
                  {"kappa", kappa}, {"c_const", c_const},
                  {"normalization", "experts scaled by 1/sqrt(2kwd)"}};
    rep.seed = seed;
    rep.n = used;
    rep.stats = {{"min_tail", min_stat}, {"margin", min_stat - threshold}};
    rep.thresholds = {{"c_d_eps", threshold}};
    rep.pass = min_stat >= threshold;
    rep.runtime_ms = ms_since(t0);
    return rep;
}

LemmaReport relu_incoherence_check(const ReluExperts& experts, int k, int w, int R,
                                   long n_tuples, std::uint64_t seed) {
    auto t0 = Clock::now();
    const int m = static_cast<int>(experts.positions.size());
    const int d = experts.d;
    const double kw = static_cast<double>(k) * w;
    const int lambda_skip = skip_count(kw * (1.0 + 1.0 / 10000.0));
    const int sigma_skip = skip_count(kw / 10000.0);
    const long union_target = std::min<long>({750L * k, m, static_cast<long>(R) * k});
    Rng rng(seed);

    double min_tail = std::numeric_limits<double>::infinity();
    double min_count_margin = std::numeric_limits<double>::infinity();
    double min_stack_margin = std::numeric_limits<double>::infinity();
    double max_cross_path_gap = 0.0;
    long smallest_union = std::numeric_limits<long>::max();

    for (long tup = 0; tup < n_tuples; ++tup) {
        // greedy tuple sampling toward the union target
        std::vector<ActiveSet> tuple;
        ActiveSet uni;
        for (int j = 0; j < R; ++j) {
            ActiveSet best = sample_subset(m, k, rng);
            long best_gain = set_union({uni, best}).indices.size();
            for (int tries = 0; tries < 20; ++tries) {
                if (static_cast<long>(uni.indices.size()) >= union_target) break;
                ActiveSet cand = sample_subset(m, k, rng);
                long gain = set_union({uni, cand}).indices.size();
                if (gain > best_gain) { best = cand; best_gain = gain; }
            }
            tuple.push_back(best);
            uni = set_union({uni, best});
        }
        smallest_union = std::min(smallest_union, static_cast<long>(uni.indices.size()));

        // sums of diagonals per tuple element; T = sum_j M_{S_j}^T M_{S_j} is diagonal
        Eigen::VectorXd t_diag = Eigen::VectorXd::Zero(d);
        std::vector<Eigen::VectorXd> sum_diags;
        for (const auto& s : tuple) {
            Eigen::VectorXd sd = Eigen::VectorXd::Zero(d);
            for (int i : s.indices) sd += experts.diagonal[static_cast<std::size_t>(i)];
            t_diag += sd.cwiseProduct(sd);
            sum_diags.push_back(std::move(sd));
        }

        // diagonal fast path: tail of sorted entries
        std::vector<double> entries(t_diag.data(), t_diag.data() + d);
        std::sort(entries.begin(), entries.end(), std::greater<>());
        double tail_diag = 0.0;
        for (int i = lambda_skip; i < d; ++i) tail_diag += entries[static_cast<std::size_t>(i)];

        // general path through sym_eig (cross-path oracle)
        Eigen::MatrixXd t_mat = t_diag.asDiagonal();
        SpectrumResult spec = sym_eig(t_mat);
        double tail_general = 0.0;
        for (int i = lambda_skip; i < d; ++i) tail_general += spec.values[static_cast<std::size_t>(i)];
        max_cross_path_gap = std::max(max_cross_path_gap, std::abs(tail_diag - tail_general));
        min_tail = std::min(min_tail, tail_diag);

        // counting lower bound via unique sampled indices in the union
        std::vector<char> seen(static_cast<std::size_t>(d), 0);
        long unique = 0;
        for (int i : uni.indices)
            for (int p : experts.positions[static_cast<std::size_t>(i)])
                if (!seen[static_cast<std::size_t>(p)]) { seen[static_cast<std::size_t>(p)] = 1; ++unique; }
        double count_margin = static_cast<double>(unique) - kw * (1.0 + 1.0 / 10000.0);
        min_count_margin = std::min(min_count_margin, count_margin);
        double scale_sq = experts.scale * experts.scale;
        // exact chain: eigen tail dominates the counting bound in scaled units
        if (tail_diag < scale_sq * std::max(0.0, count_margin) - 1e-9)
            min_stack_margin = std::min(min_stack_margin, -1.0);

        // stacking inequality over a sampled rank-<=kw projection. The R
        // separate rank-sigma_skip approximations stack to rank R*sigma_skip,
        // plus p_rank for the projection, so that is the sound eigenvalue
        // skip on the right-hand side.
        {
            int p_rank = std::min(static_cast<int>(kw), d);
            Eigen::MatrixXd g(d, p_rank);
            for (int c = 0; c < p_rank; ++c)
                for (int r = 0; r < d; ++r) g(r, c) = rng.normal();
            Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
            Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, p_rank);
            Eigen::MatrixXd proj_perp = Eigen::MatrixXd::Identity(d, d) - q * q.transpose();
            double lhs = 0.0;
            for (const auto& sd : sum_diags) {
                Eigen::MatrixXd ms = sd.asDiagonal();
                lhs += svd_tail(ms * proj_perp, sigma_skip);
            }
            const int stack_skip = std::min(R * sigma_skip + p_rank, d);
            double tail_stacked = 0.0;
            for (int i = stack_skip; i < d; ++i)
                tail_stacked += spec.values[static_cast<std::size_t>(i)];
            min_stack_margin = std::min(min_stack_margin, lhs - tail_stacked);
        }
    }

    LemmaReport rep;
    rep.lemma_id = "relu-incoherence";
    rep.params = {{"m", m}, {"k", k}, {"w", w}, {"d", d}, {"R", R},
                  {"R_paper", 1000000}, {"union_target", union_target},
                  {"scale", experts.scale}};
    rep.seed = seed;
    rep.n = n_tuples;
    rep.stats = {{"min_eigen_tail", min_tail},
                 {"min_count_margin", min_count_margin},
                 {"min_stacking_margin", min_stack_margin},
                 {"max_cross_path_gap", max_cross_path_gap},
                 {"smallest_union", smallest_union},
                 {"tail_over_d", min_tail / d}};
    rep.thresholds = {{"count_margin_required", kw / 10000.0},
                      {"cross_path_tol", 1e-8},
                      {"stacking_min", -1e-8}};
    rep.pass = min_count_margin >= kw / 10000.0 && max_cross_path_gap <= 1e-8 &&
               min_stack_margin >= -1e-8;
    rep.runtime_ms = ms_since(t0);
    return rep;
}

LemmaReport unique_count_tail(long n, int d, long n_trials, std::uint64_t seed) {
    auto t0 = Clock::now();
    Rng rng(seed);
    const double tail_cut = std::min<double>(static_cast<double>(n), d) / 12.0;
    long tail_hits = 0;
    double sum = 0.0, sum_sq = 0.0;
    std::vector<long> stamp(static_cast<std::size_t>(d), -1);
    for (long t = 0; t < n_trials; ++t) {
        long unique = 0;
        for (long i = 0; i < n; ++i) {
            auto p = static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(d)));
            if (stamp[p] != t) { stamp[p] = t; ++unique; }
        }
        if (unique <= tail_cut) ++tail_hits;
        sum += static_cast<double>(unique);
        sum_sq += static_cast<double>(unique) * static_cast<double>(unique);
    }
    double mean = sum / n_trials;
    double var = std::max(0.0, sum_sq / n_trials - mean * mean);
    double mean_se = std::sqrt(var / n_trials);
    double exact_mean = d * (1.0 - std::pow(1.0 - 1.0 / d, static_cast<double>(n)));
    double tail_p = static_cast<double>(tail_hits) / n_trials;
    double tail_se = proportion_stderr(tail_p, n_trials);
    double tail_bound = std::exp(-std::min<double>(static_cast<double>(n), d) / 18.0);
    LemmaReport rep;
    rep.lemma_id = "unique-count";
    rep.params = {{"n", n}, {"d", d}};
    rep.seed = seed;
    rep.n = n_trials;
    rep.stats = {{"mean", mean}, {"mean_stderr", mean_se}, {"exact_mean", exact_mean},
                 {"tail_estimate", tail_p}, {"tail_stderr", tail_se}};
    rep.thresholds = {{"tail_bound", tail_bound}};
    // the 1e-12 slack covers degenerate cases where mean_se is exactly zero
    // but exact_mean carries pow() rounding noise
    rep.pass = std::abs(mean - exact_mean) <= 3.0 * mean_se + 1e-12 * std::max(1.0, exact_mean) &&
               tail_p <= tail_bound + 3.0 * tail_se;
    rep.runtime_ms = ms_since(t0);
    return rep;
}

LemmaReport norm_upper_check(const MoELayer& layer, const InputDistribution& dist,
                             long n_samples, std::uint64_t seed) {
    auto t0 = Clock::now();
    Rng rng(seed);
    double sum = 0.0, sum_sq = 0.0;
    for (long i = 0; i < n_samples; ++i) {
        double v = forward(layer, sample_input_row(dist, rng)).squaredNorm();
        sum += v;
        sum_sq += v * v;
    }
    double mean = sum / n_samples;
    double var = std::max(0.0, sum_sq / n_samples - mean * mean);
    double se = std::sqrt(var / n_samples);
    LemmaReport rep;
    rep.lemma_id = "norm-upper";
    rep.params = {{"m", layer.config.m}, {"k", layer.config.k},
                  {"w", layer.config.w}, {"d", layer.config.d},
                  {"activation", to_string(layer.config.activation)}};
    rep.seed = seed;
    rep.n = n_samples;
    rep.stats = {{"mean", mean}, {"stderr", se}};
    rep.thresholds = {{"bound", 1.0}};
    rep.pass = mean <= 1.0 + 3.0 * se;
    rep.runtime_ms = ms_since(t0);
    return rep;
}

} // namespace moelab
