#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "moelab/moe.hpp"

namespace moelab {

struct SpectrumResult {
    std::vector<double> values;  // nonincreasing singular or eigen values
    double frobenius_sq = 0.0;
    std::pair<Eigen::Index, Eigen::Index> source_shape{0, 0};

    // Eckart-Young-Mirsky tail: sum of values[i]^2 for i >= kappa
    double tail_sum_sq(int kappa) const;
};

// Singular values of a dense matrix. Throws on non-finite input.
SpectrumResult svd(const Eigen::MatrixXd& a);

// min over rank-<=kappa B of ||A - B||_F^2 == sum_{i > kappa} sigma_i^2
double svd_tail(const Eigen::MatrixXd& a, int kappa);

// Real eigenvalues of a symmetric matrix, nonincreasing. Throws if the input
// is asymmetric beyond 1e-8.
SpectrumResult sym_eig(const Eigen::MatrixXd& a);

struct CovarianceEstimate {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;  // symmetrized sample covariance
    long n_accepted = 0;
    double acceptance_rate = 0.0;  // mu(U) estimate
};

// Rejection sampling from mu restricted to { x : indicator(x) }.
// Throws std::runtime_error when fewer than 2 samples are accepted.
CovarianceEstimate conditioned_covariance(const InputDistribution& dist,
                                          const std::function<bool(const Eigen::VectorXd&)>& indicator,
                                          long n_samples, std::uint64_t seed);

} // namespace moelab
