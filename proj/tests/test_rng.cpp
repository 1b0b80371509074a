#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <vector>

#include "turbsim/counter_rng.hpp"

using namespace turbsim;

TEST(CounterRng, PureFunctionOfCounter) {
    EXPECT_EQ(counter_bits(1, 2, 3), counter_bits(1, 2, 3));
    EXPECT_NE(counter_bits(1, 2, 3), counter_bits(1, 2, 4));
    EXPECT_NE(counter_bits(1, 2, 3), counter_bits(1, 3, 3));
    EXPECT_NE(counter_bits(1, 2, 3), counter_bits(2, 2, 3));
}

TEST(CounterRng, SplitmixReferenceValue) {
    // First output of the reference splitmix64 stream seeded with 0.
    EXPECT_EQ(splitmix64(0), 0xE220A8397B1DCDAFULL);
}

TEST(CounterRng, UniformRange) {
    for (std::uint64_t i = 0; i < 10000; ++i) {
        const double u = counter_uniform(7, 0, i);
        EXPECT_GT(u, 0.0);
        EXPECT_LE(u, 1.0);
    }
}

TEST(CounterRng, NormalMoments) {
    constexpr std::size_t n = 200000;
    std::vector<double> v(n);
    fill_counter_normals(42, 3, v.data(), n);
    double m = 0, m2 = 0, m4 = 0;
    for (double x : v) {
        m += x;
        m2 += x * x;
        m4 += x * x * x * x;
    }
    m /= n;
    m2 /= n;
    m4 /= n;
    EXPECT_NEAR(m, 0.0, 5.0 / std::sqrt(double(n)));
    EXPECT_NEAR(m2, 1.0, 0.015);
    EXPECT_NEAR(m4, 3.0, 0.08);
}

TEST(CounterRng, FillMatchesIndexedAccess) {
    std::vector<double> v(11);
    fill_counter_normals(9, 5, v.data(), v.size());
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(v[i], counter_normal(9, 5, i));
}

TEST(CounterRng, StreamBelowIsUniform) {
    CounterStream s(3, 0);
    std::vector<int> counts(6, 0);
    for (int i = 0; i < 60000; ++i) ++counts[s.below(6)];
    for (int c : counts) EXPECT_NEAR(c, 10000, 400);
}

TEST(CounterRng, DerivedSeedsAreDistinct) {
    std::set<std::uint64_t> seen;
    for (std::uint64_t i = 0; i < 1000; ++i)
        for (std::uint64_t p = 0; p < 4; ++p) seen.insert(derive_seed(5, i, p));
    EXPECT_EQ(seen.size(), 4000u);
}
