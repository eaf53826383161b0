#include "moelab/constructions.hpp"

#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "moelab/binomial.hpp"
#include "moelab/subsets.hpp"

namespace moelab {

bool ConstructionReport::overall_pass() const {
    for (const auto& c : checks)
        if (!c.pass) return false;
    return true;
}

nlohmann::json ConstructionReport::parameters() const {
    return nlohmann::json{{"m", m}, {"k", k}, {"w", w}, {"d", d}, {"epsilon", epsilon}};
}

nlohmann::json ConstructionReport::to_json() const {
    nlohmann::json jchecks = nlohmann::json::array();
    for (const auto& c : checks)
        jchecks.push_back({{"name", c.name},
                           {"statistic", c.statistic},
                           {"threshold", c.threshold},
                           {"pass", c.pass}});
    return nlohmann::json{{"kind", kind},
                          {"seed", seed},
                          {"parameters", parameters()},
                          {"checks", jchecks},
                          {"warnings", warnings},
                          {"overall_pass", overall_pass()}};
}

Eigen::MatrixXd gaussian_routing(int m, int d, std::uint64_t seed) {
    Rng rng = Rng(seed).split(0x726f7574);  // "rout"
    Eigen::MatrixXd r(m, d);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < d; ++j) r(i, j) = rng.normal();
    return r;
}

Eigen::MatrixXd constant_experts(int m, int k, int d, std::uint64_t seed) {
    Rng rng = Rng(seed).split(0x63657870);  // "cexp"
    const double s = 1.0 / std::sqrt(2.0 * d * k);
    Eigen::MatrixXd u(m, d);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < d; ++j) u(i, j) = s * rng.normal();
    return u;
}

ConstructionReport verify_constant_experts(const Eigen::MatrixXd& u, int k,
                                           const VerifyMode& mode) {
    const int m = static_cast<int>(u.rows());
    const int d = static_cast<int>(u.cols());
    ConstructionReport rep;
    rep.kind = "constant-experts";
    rep.m = m;
    rep.k = k;
    rep.d = d;
    rep.seed = mode.seed;

    double worst_norm = 0.0;
    double worst_sep_margin = std::numeric_limits<double>::infinity();

    auto sum_of = [&](const ActiveSet& s) {
        Eigen::VectorXd v = Eigen::VectorXd::Zero(d);
        for (int i : s.indices) v += u.row(i).transpose();
        return v;
    };

    if (mode.exhaustive) {
        if (config_count(m, k) > 1000000)
            throw std::invalid_argument("exhaustive verification capped at C(m,k) <= 1e6");
        std::vector<ActiveSet> subsets = enumerate_subsets(m, k);
        std::vector<Eigen::VectorXd> sums;
        sums.reserve(subsets.size());
        for (const auto& s : subsets) sums.push_back(sum_of(s));
        for (const auto& v : sums) worst_norm = std::max(worst_norm, v.squaredNorm());
        for (std::size_t a = 0; a < subsets.size(); ++a) {
            for (std::size_t b = a + 1; b < subsets.size(); ++b) {
                int delta = symmetric_difference_size(subsets[a], subsets[b]);
                double sep = (sums[a] - sums[b]).squaredNorm();
                worst_sep_margin = std::min(worst_sep_margin, sep - delta / (4.0 * k));
            }
        }
        if (subsets.size() < 2) worst_sep_margin = 0.0;  // single subset: vacuous
    } else {
        Rng rng(mode.seed);
        for (long t = 0; t < mode.n_pairs; ++t) {
            ActiveSet sa = sample_subset(m, k, rng);
            ActiveSet sb = sample_subset(m, k, rng);
            Eigen::VectorXd va = sum_of(sa);
            Eigen::VectorXd vb = sum_of(sb);
            worst_norm = std::max(worst_norm, std::max(va.squaredNorm(), vb.squaredNorm()));
            int delta = symmetric_difference_size(sa, sb);
            if (delta > 0) {
                double sep = (va - vb).squaredNorm();
                worst_sep_margin = std::min(worst_sep_margin, sep - delta / (4.0 * k));
            }
        }
        if (!std::isfinite(worst_sep_margin)) worst_sep_margin = 0.0;
    }

    rep.checks.push_back({"boundedness_max_norm_sq", worst_norm, 1.0, worst_norm <= 1.0});
    rep.checks.push_back({"separation_worst_margin", worst_sep_margin, 0.0, worst_sep_margin >= 0.0});
    return rep;
}

LinearExperts linear_experts(int m, int k, int w, int d, std::uint64_t seed) {
    Rng rng = Rng(seed).split(0x6c657870);  // "lexp"
    std::vector<Eigen::MatrixXd> A(m), B(m);
    for (int i = 0; i < m; ++i) {
        A[i].resize(d, w);
        for (int c = 0; c < w; ++c)
            for (int r = 0; r < d; ++r) A[i](r, c) = rng.normal();
    }
    for (int i = 0; i < m; ++i) {
        B[i].resize(d, w);
        for (int c = 0; c < w; ++c)
            for (int r = 0; r < d; ++r) B[i](r, c) = rng.normal();
    }
    return linear_experts_from_factors(std::move(A), std::move(B), k);
}

LinearExperts linear_experts_from_factors(std::vector<Eigen::MatrixXd> A,
                                          std::vector<Eigen::MatrixXd> B, int k) {
    if (A.empty() || A.size() != B.size())
        throw std::invalid_argument("linear_experts_from_factors: bad factor lists");
    const int d = static_cast<int>(A[0].rows());
    const int w = static_cast<int>(A[0].cols());
    LinearExperts ex;
    ex.normalization = 1.0 / std::sqrt(2.0 * k * w * d);
    const double half = std::sqrt(ex.normalization);  // split across the two factors
    for (auto& a : A) a *= half;
    for (auto& b : B) b *= half;
    ex.A = std::move(A);
    ex.B = std::move(B);
    return ex;
}

Eigen::MatrixXd ReluExperts::materialize(int i) const {
    return diagonal[static_cast<std::size_t>(i)].asDiagonal();
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> ReluExperts::factorization(int i) const {
    const auto& pos = positions[static_cast<std::size_t>(i)];
    const int wp = static_cast<int>(pos.size());
    Eigen::MatrixXd F = Eigen::MatrixXd::Zero(d, wp);
    const double s = std::sqrt(scale);
    for (int j = 0; j < wp; ++j) F(pos[static_cast<std::size_t>(j)], j) = s;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(d, w);
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(d, w);
    A.leftCols(wp) = F;
    A.middleCols(wp, wp) = -F;
    B.leftCols(wp) = F;
    B.middleCols(wp, wp) = -F;
    return {A, B};
}

ReluExperts relu_experts_from_positions(std::vector<std::vector<int>> positions,
                                        int k, int w, int d) {
    ReluExperts ex;
    ex.d = d;
    ex.w = w;
    ex.scale = std::sqrt(static_cast<double>(d) / (static_cast<double>(k) * w));
    ex.positions = std::move(positions);
    for (const auto& pos : ex.positions) {
        Eigen::VectorXd diag = Eigen::VectorXd::Zero(d);
        for (int p : pos) diag[p] += ex.scale;
        ex.diagonal.push_back(std::move(diag));
    }
    return ex;
}

ReluExperts relu_experts(int m, int k, int w, int d, std::uint64_t seed) {
    Rng rng = Rng(seed).split(0x72657870);  // "rexp"
    const int wp = w / 2;
    std::vector<std::vector<int>> positions(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        positions[static_cast<std::size_t>(i)].resize(static_cast<std::size_t>(wp));
        for (int j = 0; j < wp; ++j)
            positions[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
                static_cast<int>(rng.below(static_cast<std::uint64_t>(d)));
    }
    return relu_experts_from_positions(std::move(positions), k, w, d);
}

namespace {

void regime_warnings(Activation act, int m, int k, int w, int d,
                     const RegimeConstants& rc, std::vector<std::string>& out) {
    const double lm = std::log(std::max(m, 2));
    if (d < rc.regime_c * k * lm * lm)
        out.push_back("d below recommended regime d >= C*k*(log m)^2");
    if (act == Activation::Constant && d < rc.regime_c * k * lm)
        out.push_back("d below recommended regime d >= C*k*log m");
    if ((act == Activation::Linear || act == Activation::Relu) && w < rc.regime_c * lm)
        out.push_back("w below recommended regime w >= C*log m");
    if (act == Activation::Relu && k * w > 0.99 * d)
        out.push_back("kw > 0.99*d: outside the ReLU theorem's regime");
}

} // namespace

AssembledMoE assemble_theorem_moe(Activation activation, int m, int k, int w, int d,
                                  std::uint64_t seed, const RegimeConstants& rc,
                                  long n_norm_samples) {
    MoEConfig cfg = make_config(m, k, w, d, activation, Gating::EqualHard, false);
    MoELayer layer = MoELayer::zeros(cfg);
    layer.routing = gaussian_routing(m, d, seed);

    ConstructionReport rep;
    rep.kind = "assembly-" + to_string(activation);
    rep.seed = seed;
    rep.m = m;
    rep.k = k;
    rep.w = w;
    rep.d = d;
    regime_warnings(activation, m, k, w, d, rc, rep.warnings);

    switch (activation) {
        case Activation::Constant: {
            Eigen::MatrixXd u = constant_experts(m, k, d, seed);
            for (int j = 0; j < m; ++j) layer.A[j].col(0) = u.row(j).transpose();
            VerifyMode mode;
            if (config_count(m, k) <= 1000000 &&
                config_count(m, k) * config_count(m, k) <= 2000000) {
                mode.exhaustive = true;
            } else {
                mode.exhaustive = false;
                mode.n_pairs = 200000;
                mode.seed = seed;
            }
            ConstructionReport sub = verify_constant_experts(u, k, mode);
            for (auto& c : sub.checks) rep.checks.push_back(c);
            break;
        }
        case Activation::Linear: {
            LinearExperts ex = linear_experts(m, k, w, d, seed);
            layer.A = ex.A;
            layer.B = ex.B;
            break;
        }
        case Activation::Relu: {
            ReluExperts ex = relu_experts(m, k, w, d, seed);
            for (int j = 0; j < m; ++j) {
                auto [a, b] = ex.factorization(j);
                layer.A[j] = a;
                layer.B[j] = b;
            }
            break;
        }
    }

    // Monte-Carlo E||f||^2 <= 1, three-stderr slack on the favorable side
    if (n_norm_samples > 0) {
        InputDistribution dist{InputDistribution::Kind::GaussianIso, d};
        Rng rng = Rng(seed).split(0x6e6f726d);  // "norm"
        double sum = 0.0, sum_sq = 0.0;
        for (long i = 0; i < n_norm_samples; ++i) {
            double v = forward(layer, sample_input_row(dist, rng)).squaredNorm();
            sum += v;
            sum_sq += v * v;
        }
        double mean = sum / n_norm_samples;
        double var = std::max(0.0, sum_sq / n_norm_samples - mean * mean);
        double se = std::sqrt(var / n_norm_samples);
        rep.checks.push_back({"norm_bound_mc_mean", mean, 1.0 + 3.0 * se, mean <= 1.0 + 3.0 * se});
    }

    return AssembledMoE{std::move(layer), std::move(rep)};
}

} // namespace moelab
