#include "moelab/spectral.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <stdexcept>

namespace moelab {

double SpectrumResult::tail_sum_sq(int kappa) const {
    if (kappa < 0) kappa = 0;
    double s = 0.0;
    for (std::size_t i = static_cast<std::size_t>(kappa); i < values.size(); ++i)
        s += values[i] * values[i];
    return s;
}

SpectrumResult svd(const Eigen::MatrixXd& a) {
    if (!a.allFinite()) throw std::invalid_argument("svd: non-finite input");
    Eigen::BDCSVD<Eigen::MatrixXd> solver(a);
    SpectrumResult r;
    r.values.assign(solver.singularValues().data(),
                    solver.singularValues().data() + solver.singularValues().size());
    r.frobenius_sq = a.squaredNorm();
    r.source_shape = {a.rows(), a.cols()};
    return r;
}

double svd_tail(const Eigen::MatrixXd& a, int kappa) {
    SpectrumResult s = svd(a);
    if (kappa >= static_cast<int>(s.values.size())) return 0.0;
    return s.tail_sum_sq(kappa);
}

SpectrumResult sym_eig(const Eigen::MatrixXd& a) {
    if (!a.allFinite()) throw std::invalid_argument("sym_eig: non-finite input");
    if (a.rows() != a.cols()) throw std::invalid_argument("sym_eig: not square");
    double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale)
        throw std::invalid_argument("sym_eig: input not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(0.5 * (a + a.transpose()),
                                                          Eigen::EigenvaluesOnly);
    SpectrumResult r;
    const auto& ev = solver.eigenvalues();  // ascending
    r.values.resize(static_cast<std::size_t>(ev.size()));
    for (Eigen::Index i = 0; i < ev.size(); ++i)
        r.values[static_cast<std::size_t>(ev.size() - 1 - i)] = ev[i];
    r.frobenius_sq = a.squaredNorm();
    r.source_shape = {a.rows(), a.cols()};
    return r;
}

CovarianceEstimate conditioned_covariance(const InputDistribution& dist,
                                          const std::function<bool(const Eigen::VectorXd&)>& indicator,
                                          long n_samples, std::uint64_t seed) {
    Rng rng(seed);
    const int d = dist.d;
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(d);
    Eigen::MatrixXd sum_outer = Eigen::MatrixXd::Zero(d, d);
    long accepted = 0;
    for (long i = 0; i < n_samples; ++i) {
        Eigen::VectorXd x = sample_input_row(dist, rng);
        if (!indicator(x)) continue;
        ++accepted;
        sum += x;
        sum_outer.selfadjointView<Eigen::Lower>().rankUpdate(x, 1.0);
    }
    if (accepted < 2)
        throw std::runtime_error("conditioned_covariance: fewer than 2 accepted samples (low-mass set)");
    CovarianceEstimate est;
    est.n_accepted = accepted;
    est.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(n_samples);
    est.mean = sum / static_cast<double>(accepted);
    Eigen::MatrixXd second = Eigen::MatrixXd(sum_outer.selfadjointView<Eigen::Lower>()) /
                             static_cast<double>(accepted);
    Eigen::MatrixXd cov = second - est.mean * est.mean.transpose();
    est.covariance = 0.5 * (cov + cov.transpose());
    return est;
}

} // namespace moelab
