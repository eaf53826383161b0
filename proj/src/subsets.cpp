#include "moelab/subsets.hpp"

#include <algorithm>
#include <set>

namespace moelab {

std::vector<ActiveSet> enumerate_subsets(int m, int k) {
    std::vector<ActiveSet> out;
    std::vector<int> cur(k);
    for (int i = 0; i < k; ++i) cur[i] = i;
    for (;;) {
        out.push_back(ActiveSet{cur});
        int i = k - 1;
        while (i >= 0 && cur[i] == m - k + i) --i;
        if (i < 0) break;
        ++cur[i];
        for (int j = i + 1; j < k; ++j) cur[j] = cur[j - 1] + 1;
    }
    return out;
}

ActiveSet sample_subset(int m, int k, Rng& rng) {
    std::set<int> chosen;
    for (int j = m - k; j < m; ++j) {
        int t = static_cast<int>(rng.below(static_cast<std::uint64_t>(j) + 1));
        if (!chosen.insert(t).second) chosen.insert(j);
    }
    ActiveSet s;
    s.indices.assign(chosen.begin(), chosen.end());
    return s;
}

int intersection_size(const ActiveSet& a, const ActiveSet& b) {
    int n = 0;
    auto ia = a.indices.begin();
    auto ib = b.indices.begin();
    while (ia != a.indices.end() && ib != b.indices.end()) {
        if (*ia < *ib) ++ia;
        else if (*ib < *ia) ++ib;
        else { ++n; ++ia; ++ib; }
    }
    return n;
}

int symmetric_difference_size(const ActiveSet& a, const ActiveSet& b) {
    int inter = intersection_size(a, b);
    return static_cast<int>(a.indices.size() + b.indices.size()) - 2 * inter;
}

ActiveSet set_union(const std::vector<ActiveSet>& sets) {
    std::set<int> u;
    for (const auto& s : sets) u.insert(s.indices.begin(), s.indices.end());
    ActiveSet out;
    out.indices.assign(u.begin(), u.end());
    return out;
}

} // namespace moelab
