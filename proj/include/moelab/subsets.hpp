#pragma once

#include <cstdint>
#include <vector>

#include "moelab/moe.hpp"
#include "moelab/rng.hpp"

namespace moelab {

// All k-subsets of {0..m-1} in lexicographic order. Caller is responsible
// for keeping C(m,k) within memory (verifiers cap at 1e6).
std::vector<ActiveSet> enumerate_subsets(int m, int k);

// Uniform random k-subset of {0..m-1} (Floyd's algorithm), canonical order.
ActiveSet sample_subset(int m, int k, Rng& rng);

// |S delta S'| for canonical sets
int symmetric_difference_size(const ActiveSet& a, const ActiveSet& b);

// |S intersect S'|
int intersection_size(const ActiveSet& a, const ActiveSet& b);

// union of several canonical sets, canonical order
ActiveSet set_union(const std::vector<ActiveSet>& sets);

} // namespace moelab
