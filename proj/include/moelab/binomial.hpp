#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include "moelab/moe.hpp"

namespace moelab {

using BigInt = boost::multiprecision::cpp_int;

// Exact C(m, k); returns 0 for k < 0 or k > m.
BigInt config_count(long m, long k);

// log2 C(m, k) via lgamma, for display at large m.
double log2_config_count(long m, long k);

struct ParamCount {
    BigInt total;   // 2 m w d
    BigInt active;  // 2 k w d
};

// Routing parameters (md) excluded by convention.
ParamCount count_params(const MoEConfig& cfg);

} // namespace moelab
