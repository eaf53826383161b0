#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "moelab/rng.hpp"

namespace moelab {

enum class Activation { Constant, Linear, Relu };
enum class Gating { EqualHard, SoftmaxTopK };

std::string to_string(Activation a);
std::string to_string(Gating g);
Activation activation_from_string(const std::string& s);
Gating gating_from_string(const std::string& s);

struct MoEConfig {
    int m = 1;  // expert count
    int k = 1;  // active experts per token (granularity)
    int w = 1;  // neurons per expert
    int d = 1;  // input/output dimension
    Activation activation = Activation::Relu;
    Gating gating = Gating::EqualHard;
    bool route_bias = false;
};

// Validates and returns a config. Throws std::invalid_argument on k > m or
// nonpositive dimensions.
MoEConfig make_config(int m, int k, int w, int d, Activation activation,
                      Gating gating, bool route_bias);

// Canonical k-subset of [0, m): sorted, distinct.
struct ActiveSet {
    std::vector<int> indices;

    bool operator==(const ActiveSet& o) const { return indices == o.indices; }
    bool operator<(const ActiveSet& o) const { return indices < o.indices; }
};

struct MoELayer {
    MoEConfig config;
    Eigen::MatrixXd routing;          // m x d, rows are routing vectors
    Eigen::VectorXd bias;             // m (zero unless route_bias)
    std::vector<Eigen::MatrixXd> A;   // m matrices, d x w
    std::vector<Eigen::MatrixXd> B;   // m matrices, d x w

    // zero-initialized layer of the right shapes
    static MoELayer zeros(const MoEConfig& cfg);
    void check_shapes() const;  // throws std::invalid_argument on mismatch
};

struct InputDistribution {
    enum class Kind { GaussianIso, UnitBall };
    Kind kind = Kind::GaussianIso;
    int d = 1;
};

// Routing scores r_i . x + bias_i
Eigen::VectorXd routing_scores(const MoELayer& layer, const Eigen::VectorXd& x);

// Top-k selection, ties broken toward the lower index.
ActiveSet route(const MoELayer& layer, const Eigen::VectorXd& x);
ActiveSet top_k_by_score(const Eigen::VectorXd& scores, int k);

// Eq.-style forward pass. Throws std::runtime_error if the output is not
// finite (parameter blow-up is reported, never clamped).
Eigen::VectorXd forward(const MoELayer& layer, const Eigen::VectorXd& x);

// Row-wise forward; bit-identical to per-row forward.
Eigen::MatrixXd forward_batch(const MoELayer& layer, const Eigen::MatrixXd& X);

// n x d sample matrix, deterministic per seed.
// GaussianIso: N(0, I_d / d). UnitBall: uniform over the unit ball.
Eigen::MatrixXd sample_inputs(const InputDistribution& dist, long n, std::uint64_t seed);
Eigen::VectorXd sample_input_row(const InputDistribution& dist, Rng& rng);

} // namespace moelab
