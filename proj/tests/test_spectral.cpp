#include <doctest.h>

#include <cmath>

#include "moelab/rng.hpp"
#include "moelab/spectral.hpp"

using namespace moelab;

namespace {

Eigen::MatrixXd random_matrix(int rows, int cols, std::uint64_t seed) {
    Eigen::MatrixXd a(rows, cols);
    Rng rng(seed);
    for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i) a(i, j) = rng.normal();
    return a;
}

// Independent low-rank-fit oracle: alternating least squares on A ~ U V with
// rank kappa, returning the squared Frobenius residual. Knows nothing about
// singular values.
double als_low_rank_residual(const Eigen::MatrixXd& a, int kappa, std::uint64_t seed) {
    if (kappa <= 0) return a.squaredNorm();
    if (kappa >= std::min(a.rows(), a.cols())) return 0.0;
    Eigen::MatrixXd u = random_matrix(static_cast<int>(a.rows()), kappa, seed);
    Eigen::MatrixXd v;
    for (int it = 0; it < 400; ++it) {
        v = (u.transpose() * u).ldlt().solve(u.transpose() * a);
        u = ((v * v.transpose()).ldlt().solve(v * a.transpose())).transpose();
    }
    return (a - u * v).squaredNorm();
}

} // namespace

TEST_CASE("singular values of a diagonal matrix") {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(3, 3);
    a(0, 0) = 1.0;
    a(1, 1) = 3.0;
    a(2, 2) = 2.0;
    SpectrumResult s = svd(a);
    REQUIRE(s.values.size() == 3);
    CHECK(s.values[0] == doctest::Approx(3.0));
    CHECK(s.values[1] == doctest::Approx(2.0));
    CHECK(s.values[2] == doctest::Approx(1.0));
    CHECK(s.frobenius_sq == doctest::Approx(14.0));
    CHECK(s.tail_sum_sq(1) == doctest::Approx(5.0));
    CHECK(s.tail_sum_sq(0) == doctest::Approx(14.0));
    CHECK(s.tail_sum_sq(3) == 0.0);
}

TEST_CASE("rank-one matrix has a single singular value |u||v|") {
    Eigen::VectorXd u = random_matrix(6, 1, 2).col(0);
    Eigen::VectorXd v = random_matrix(4, 1, 3).col(0);
    SpectrumResult s = svd(u * v.transpose());
    CHECK(s.values[0] == doctest::Approx(u.norm() * v.norm()));
    for (std::size_t i = 1; i < s.values.size(); ++i) CHECK(s.values[i] < 1e-10);
}

TEST_CASE("eigenvalues of A^T A are squared singular values (cross-method)") {
    Eigen::MatrixXd a = random_matrix(8, 5, 4);
    SpectrumResult sv = svd(a);
    SpectrumResult ev = sym_eig(a.transpose() * a);
    REQUIRE(ev.values.size() == 5);
    for (int i = 0; i < 5; ++i)
        CHECK(ev.values[i] == doctest::Approx(sv.values[i] * sv.values[i]).epsilon(1e-9));
}

TEST_CASE("sym_eig rejects asymmetric input") {
    Eigen::MatrixXd a = random_matrix(4, 4, 5);
    a(0, 1) += 1.0;
    a(1, 0) -= 1.0;
    CHECK_THROWS_AS(sym_eig(a), std::invalid_argument);
}

TEST_CASE("svd rejects non-finite input") {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2, 2);
    a(1, 1) = std::nan("");
    CHECK_THROWS_AS(svd(a), std::invalid_argument);
}

TEST_CASE("svd_tail equals the alternating-minimization residual") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Eigen::MatrixXd a = random_matrix(12, 12, 100 + seed);
        for (int kappa : {0, 1, 3, 6, 12}) {
            double oracle = als_low_rank_residual(a, kappa, 7 * seed);
            double tail = svd_tail(a, kappa);
            CHECK(std::abs(tail - oracle) <= 1e-4 * std::max(1.0, oracle));
        }
    }
}

TEST_CASE("conditioned covariance of a halfspace matches the truncated-normal moments") {
    const int d = 16;
    InputDistribution dist{InputDistribution::Kind::GaussianIso, d};
    auto ind = [](const Eigen::VectorXd& x) { return x(0) > 0.0; };
    CovarianceEstimate est = conditioned_covariance(dist, ind, 400000, 10);
    CHECK(est.acceptance_rate == doctest::Approx(0.5).epsilon(0.01));
    CHECK((est.covariance - est.covariance.transpose()).norm() == 0.0);
    // x(0) | x(0) > 0 is half-normal with scale 1/sqrt(d):
    // mean sqrt(2/pi)/sqrt(d), variance (1 - 2/pi)/d
    CHECK(est.mean(0) == doctest::Approx(std::sqrt(2.0 / M_PI / d)).epsilon(0.03));
    CHECK(est.covariance(0, 0) == doctest::Approx((1.0 - 2.0 / M_PI) / d).epsilon(0.05));
    // unconditioned coordinates keep variance 1/d and zero mean
    CHECK(est.mean(3) == doctest::Approx(0.0).epsilon(1.0).scale(0.01));
    CHECK(est.covariance(3, 3) == doctest::Approx(1.0 / d).epsilon(0.05));
}

TEST_CASE("conditioned covariance reports an impossible region") {
    InputDistribution dist{InputDistribution::Kind::UnitBall, 4};
    auto never = [](const Eigen::VectorXd&) { return false; };
    CHECK_THROWS_AS(conditioned_covariance(dist, never, 1000, 3), std::runtime_error);
}
