#include <doctest.h>

#include <cmath>
#include <set>

#include "moelab/rng.hpp"

using moelab::Rng;

TEST_CASE("same seed, same stream") {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("different seeds and streams diverge") {
    Rng a(42), b(43), c(42, 1);
    CHECK(a.next_u64() != b.next_u64());
    Rng a2(42);
    CHECK(a2.next_u64() != c.next_u64());
}

TEST_CASE("split children are independent of parent consumption") {
    Rng parent(7);
    Rng child_before = parent.split(3);
    parent.next_u64();
    parent.next_u64();
    Rng child_after = parent.split(3);
    // split depends only on key and tag, not on how much the parent consumed
    CHECK(child_before.next_u64() == child_after.next_u64());

    Rng c0 = parent.split(0), c1 = parent.split(1);
    CHECK(c0.next_u64() != c1.next_u64());
}

TEST_CASE("uniform stays in [0,1) and uniform_pos in (0,1]") {
    Rng r(1);
    for (int i = 0; i < 10000; ++i) {
        double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        double v = r.uniform_pos();
        CHECK(v > 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("normal moments") {
    Rng r(5);
    const int n = 200000;
    double s = 0, s2 = 0, s3 = 0;
    for (int i = 0; i < n; ++i) {
        double z = r.normal();
        s += z;
        s2 += z * z;
        s3 += z * z * z;
    }
    CHECK(std::abs(s / n) < 0.01);
    CHECK(std::abs(s2 / n - 1.0) < 0.02);
    CHECK(std::abs(s3 / n) < 0.05);
}

TEST_CASE("below covers the range uniformly enough") {
    Rng r(9);
    std::set<std::uint64_t> seen;
    long counts[7] = {0};
    for (int i = 0; i < 70000; ++i) {
        std::uint64_t v = r.below(7);
        CHECK(v < 7);
        seen.insert(v);
        ++counts[v];
    }
    CHECK(seen.size() == 7);
    for (long c : counts) CHECK(std::abs(c - 10000) < 500);
}
