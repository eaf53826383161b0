#include "moelab/binomial.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace moelab {

BigInt config_count(long m, long k) {
    if (k < 0 || k > m) return 0;
    if (k > m - k) k = m - k;
    BigInt result = 1;
    for (long i = 1; i <= k; ++i) {
        result *= (m - k + i);
        result /= i;  // exact at every step: result is C(m-k+i, i)
    }
    return result;
}

double log2_config_count(long m, long k) {
    if (k < 0 || k > m) return -std::numeric_limits<double>::infinity();
    const long kk = std::min(k, m - k);
    // lgamma(m+1) - lgamma(m-kk+1) cancels catastrophically when kk << m
    // (e.g. m ~ 1e14, kk = 1), so sum the log ratios directly when cheap.
    if (kk <= (1L << 20)) {
        double ln = 0.0;
        for (long i = 0; i < kk; ++i)
            ln += std::log(static_cast<double>(m - i)) - std::log(static_cast<double>(kk - i));
        return ln / std::log(2.0);
    }
    double ln = std::lgamma(m + 1.0) - std::lgamma(kk + 1.0) - std::lgamma(m - kk + 1.0);
    return ln / std::log(2.0);
}

ParamCount count_params(const MoEConfig& cfg) {
    BigInt wd = BigInt(cfg.w) * cfg.d;
    return ParamCount{2 * BigInt(cfg.m) * wd, 2 * BigInt(cfg.k) * wd};
}

} // namespace moelab
