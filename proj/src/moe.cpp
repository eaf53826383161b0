#include "moelab/moe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace moelab {

std::string to_string(Activation a) {
    switch (a) {
        case Activation::Constant: return "constant";
        case Activation::Linear: return "linear";
        case Activation::Relu: return "relu";
    }
    return "?";
}

std::string to_string(Gating g) {
    return g == Gating::EqualHard ? "equal-hard" : "softmax-topk";
}

Activation activation_from_string(const std::string& s) {
    if (s == "constant") return Activation::Constant;
    if (s == "linear") return Activation::Linear;
    if (s == "relu") return Activation::Relu;
    throw std::invalid_argument("unknown activation: " + s);
}

Gating gating_from_string(const std::string& s) {
    if (s == "equal-hard") return Gating::EqualHard;
    if (s == "softmax-topk") return Gating::SoftmaxTopK;
    throw std::invalid_argument("unknown gating: " + s);
}

MoEConfig make_config(int m, int k, int w, int d, Activation activation,
                      Gating gating, bool route_bias) {
    if (m < 1) throw std::invalid_argument("m must be positive");
    if (k < 1) throw std::invalid_argument("k must be positive");
    if (k > m) throw std::invalid_argument("k must not exceed m");
    if (w < 1) throw std::invalid_argument("w must be positive");
    if (d < 1) throw std::invalid_argument("d must be positive");
    return MoEConfig{m, k, w, d, activation, gating, route_bias};
}

MoELayer MoELayer::zeros(const MoEConfig& cfg) {
    MoELayer layer;
    layer.config = cfg;
    layer.routing = Eigen::MatrixXd::Zero(cfg.m, cfg.d);
    layer.bias = Eigen::VectorXd::Zero(cfg.m);
    layer.A.assign(cfg.m, Eigen::MatrixXd::Zero(cfg.d, cfg.w));
    layer.B.assign(cfg.m, Eigen::MatrixXd::Zero(cfg.d, cfg.w));
    return layer;
}

void MoELayer::check_shapes() const {
    const auto& c = config;
    if (routing.rows() != c.m || routing.cols() != c.d)
        throw std::invalid_argument("routing shape mismatch");
    if (bias.size() != c.m) throw std::invalid_argument("bias size mismatch");
    if (static_cast<int>(A.size()) != c.m || static_cast<int>(B.size()) != c.m)
        throw std::invalid_argument("expert count mismatch");
    for (int j = 0; j < c.m; ++j) {
        if (A[j].rows() != c.d || A[j].cols() != c.w ||
            B[j].rows() != c.d || B[j].cols() != c.w)
            throw std::invalid_argument("expert matrix shape mismatch");
    }
    if (!routing.allFinite() || !bias.allFinite())
        throw std::invalid_argument("non-finite routing parameters");
    for (int j = 0; j < c.m; ++j)
        if (!A[j].allFinite() || !B[j].allFinite())
            throw std::invalid_argument("non-finite expert parameters");
}

Eigen::VectorXd routing_scores(const MoELayer& layer, const Eigen::VectorXd& x) {
    return layer.routing * x + layer.bias;
}

ActiveSet top_k_by_score(const Eigen::VectorXd& scores, int k) {
    const int m = static_cast<int>(scores.size());
    std::vector<int> idx(m);
    std::iota(idx.begin(), idx.end(), 0);
    // higher score first; equal scores resolve to the lower index
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](int a, int b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    ActiveSet s;
    s.indices.assign(idx.begin(), idx.begin() + k);
    std::sort(s.indices.begin(), s.indices.end());
    return s;
}

ActiveSet route(const MoELayer& layer, const Eigen::VectorXd& x) {
    return top_k_by_score(routing_scores(layer, x), layer.config.k);
}

namespace {

Eigen::VectorXd expert_output(const MoELayer& layer, int j, const Eigen::VectorXd& x) {
    switch (layer.config.activation) {
        case Activation::Constant:
            return layer.A[j].rowwise().sum();  // A_j . 1
        case Activation::Linear:
            return layer.A[j] * (layer.B[j].transpose() * x);
        case Activation::Relu: {
            Eigen::VectorXd h = layer.B[j].transpose() * x;
            return layer.A[j] * h.cwiseMax(0.0);
        }
    }
    return Eigen::VectorXd::Zero(layer.config.d);
}

} // namespace

Eigen::VectorXd forward(const MoELayer& layer, const Eigen::VectorXd& x) {
    if (x.size() != layer.config.d)
        throw std::invalid_argument("input dimension mismatch");
    Eigen::VectorXd scores = routing_scores(layer, x);
    ActiveSet s = top_k_by_score(scores, layer.config.k);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(layer.config.d);
    if (layer.config.gating == Gating::EqualHard) {
        for (int j : s.indices) out += expert_output(layer, j, x);
    } else {
        const int k = layer.config.k;
        Eigen::VectorXd sel(k);
        for (int i = 0; i < k; ++i) sel[i] = scores[s.indices[i]];
        double mx = sel.maxCoeff();
        Eigen::VectorXd g = (sel.array() - mx).exp();
        g /= g.sum();
        for (int i = 0; i < k; ++i) out += g[i] * expert_output(layer, s.indices[i], x);
    }
    if (!out.allFinite())
        throw std::runtime_error("non-finite MoE output (parameter blow-up)");
    return out;
}

Eigen::MatrixXd forward_batch(const MoELayer& layer, const Eigen::MatrixXd& X) {
    if (X.cols() != layer.config.d)
        throw std::invalid_argument("batch dimension mismatch");
    Eigen::MatrixXd Y(X.rows(), layer.config.d);
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        Y.row(i) = forward(layer, X.row(i).transpose()).transpose();
    return Y;
}

Eigen::VectorXd sample_input_row(const InputDistribution& dist, Rng& rng) {
    const int d = dist.d;
    Eigen::VectorXd x(d);
    if (dist.kind == InputDistribution::Kind::GaussianIso) {
        const double s = 1.0 / std::sqrt(static_cast<double>(d));
        for (int j = 0; j < d; ++j) x[j] = s * rng.normal();
    } else {
        // Gaussian direction times U^{1/d} radius
        for (int j = 0; j < d; ++j) x[j] = rng.normal();
        double nrm = x.norm();
        if (nrm == 0.0) nrm = 1.0;
        double r = std::pow(rng.uniform_pos(), 1.0 / static_cast<double>(d));
        x *= r / nrm;
    }
    return x;
}

Eigen::MatrixXd sample_inputs(const InputDistribution& dist, long n, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd X(n, dist.d);
    for (long i = 0; i < n; ++i)
        X.row(i) = sample_input_row(dist, rng).transpose();
    return X;
}

} // namespace moelab
