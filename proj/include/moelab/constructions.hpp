#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "moelab/moe.hpp"

namespace moelab {

struct ConstructionCheck {
    std::string name;
    double statistic = 0.0;
    double threshold = 0.0;
    bool pass = false;
};

struct ConstructionReport {
    std::string kind;  // routing | constant-experts | linear-experts | relu-experts | assembly
    std::uint64_t seed = 0;
    nlohmann::json parameters() const;
    int m = 0, k = 0, w = 0, d = 0;
    double epsilon = 0.0;
    std::vector<ConstructionCheck> checks;
    std::vector<std::string> warnings;

    bool overall_pass() const;
    nlohmann::json to_json() const;
};

// Regime constant for the paper's unspecified C (d >= C k log m etc).
// Config-exposed; thresholds with explicit constants are used verbatim.
struct RegimeConstants {
    double regime_c = 10.0;
};

// i.i.d. N(0,1) routing vectors, m x d
Eigen::MatrixXd gaussian_routing(int m, int d, std::uint64_t seed);

// m vectors u_i ~ N(0, I_d / (2dk)), returned as rows of an m x d matrix
Eigen::MatrixXd constant_experts(int m, int k, int d, std::uint64_t seed);

struct VerifyMode {
    bool exhaustive = true;
    long n_pairs = 0;         // sampled mode
    std::uint64_t seed = 0;   // sampled mode
};

// Checks boundedness ||u_S||^2 <= 1 and separation
// ||u_S - u_S'||^2 >= |S delta S'| / (4k). Exhaustive mode requires
// C(m,k) <= 1e6.
ConstructionReport verify_constant_experts(const Eigen::MatrixXd& u, int k,
                                           const VerifyMode& mode);

// Linear experts M_i = A_i B_i^T / sqrt(2kwd), stored as factors.
struct LinearExperts {
    std::vector<Eigen::MatrixXd> A;  // d x w, already carrying the normalization
    std::vector<Eigen::MatrixXd> B;  // d x w
    double normalization = 1.0;      // 1/sqrt(2kwd), split across A and B

    Eigen::MatrixXd materialize(int i) const { return A[i] * B[i].transpose(); }
};

LinearExperts linear_experts(int m, int k, int w, int d, std::uint64_t seed);

// Deterministic fixture: build normalized experts from explicit factors.
LinearExperts linear_experts_from_factors(std::vector<Eigen::MatrixXd> A,
                                          std::vector<Eigen::MatrixXd> B, int k);

// Sparse-diagonal ReLU experts: M_i = scale * sum_j e_{p_ij} e_{p_ij}^T with
// w' = floor(w/2) draws, scale = sqrt(d / (kw)). Duplicates accumulate as
// multiplicities.
struct ReluExperts {
    int d = 0, w = 0;
    double scale = 1.0;
    std::vector<std::vector<int>> positions;  // per expert, the w' sampled indices
    std::vector<Eigen::VectorXd> diagonal;    // per expert, scale * multiplicity per coord

    Eigen::MatrixXd materialize(int i) const;
    // width-w factors (A = [F, -F, 0...], B = [F, -F, 0...]) realizing M_i via
    // the ReLU identity  A sigma(B^T x) = M_i x
    std::pair<Eigen::MatrixXd, Eigen::MatrixXd> factorization(int i) const;
};

ReluExperts relu_experts(int m, int k, int w, int d, std::uint64_t seed);

// Deterministic fixture: explicit sampled positions.
ReluExperts relu_experts_from_positions(std::vector<std::vector<int>> positions,
                                        int k, int w, int d);

struct AssembledMoE {
    MoELayer layer;
    ConstructionReport report;
};

// Routing from gaussian_routing, experts per activation, EqualHard gating.
// The report bundles the applicable verifications (Monte-Carlo norm bound,
// boundedness / separation for constant experts) plus regime warnings.
AssembledMoE assemble_theorem_moe(Activation activation, int m, int k, int w, int d,
                                  std::uint64_t seed,
                                  const RegimeConstants& rc = {},
                                  long n_norm_samples = 200000);

} // namespace moelab
