#include "hllsh/families.hpp"
#include "hllsh/io.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

using namespace hllsh;

namespace {

constexpr std::uint64_t kSamples = 20000;

std::vector<std::uint64_t> range_tokens(std::uint64_t lo, std::uint64_t hi) {
    std::vector<std::uint64_t> v;
    for (std::uint64_t t = lo; t < hi; ++t) {
        v.push_back(t * 7919 + 13);
    }
    return v;
}

// Fraction of function indices on which x and y agree on all k hashes.
double collision_rate(const HashFamilySpec& f, const DataPoint& x, const DataPoint& y, int k, std::uint64_t m) {
    std::uint64_t hits = 0;
    for (std::uint64_t i = 0; i < m; ++i) {
        bool all = true;
        for (int j = 0; j < k && all; ++j) {
            const std::uint64_t idx = i * static_cast<std::uint64_t>(k) + static_cast<std::uint64_t>(j);
            all = eval_hash(f, idx, x) == eval_hash(f, idx, y);
        }
        hits += all ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(m);
}

DataPoint unit_at_angle(std::uint32_t dim, double theta, bool second) {
    std::vector<double> v(dim, 0.0);
    if (second) {
        v[0] = std::cos(theta);
        v[1] = std::sin(theta);
    } else {
        v[0] = 1.0;
    }
    return make_unit_point(second ? "y" : "x", v);
}

} // namespace

TEST(Jaccard, MatchesSetOracle) {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 200; ++i) {
        std::vector<std::uint64_t> a, b;
        const int na = 1 + static_cast<int>(rng() % 40);
        const int nb = 1 + static_cast<int>(rng() % 40);
        for (int j = 0; j < na; ++j) a.push_back(rng() % 60);
        for (int j = 0; j < nb; ++j) b.push_back(rng() % 60);
        const auto x = make_token_point("x", a);
        const auto y = make_token_point("y", b);
        EXPECT_DOUBLE_EQ(jaccard(std::get<TokenSet>(x.payload), std::get<TokenSet>(y.payload)),
                         oracle::jaccard(a, b));
    }
}

TEST(Distances, NativeScales) {
    const HashFamilySpec mh{FamilyKind::MinHash, 0, 1};
    const auto a = make_token_point("a", {1, 2, 3, 4});
    const auto b = make_token_point("b", {3, 4, 5, 6});
    EXPECT_DOUBLE_EQ(collision_probability(mh, a, b), 2.0 / 6.0);
    EXPECT_DOUBLE_EQ(distance(mh, a, b), 1.0 - 2.0 / 6.0);

    const HashFamilySpec bs{FamilyKind::BitSampling, 8, 1};
    const auto x = make_bit_point("x", parse_hex_bits("0f", 8));
    const auto y = make_bit_point("y", parse_hex_bits("3c", 8));
    EXPECT_EQ(distance(bs, x, y), 4.0);
    EXPECT_DOUBLE_EQ(collision_probability(bs, x, y), 0.5);

    const HashFamilySpec hp{FamilyKind::Hyperplane, 3, 1};
    const auto u = unit_at_angle(3, std::numbers::pi / 3, false);
    const auto v = unit_at_angle(3, std::numbers::pi / 3, true);
    EXPECT_NEAR(distance(hp, u, v), std::numbers::pi / 3, 1e-15);
    EXPECT_NEAR(collision_probability(hp, u, v), 2.0 / 3.0, 1e-15);
}

TEST(Distances, AngleAccurateNearZero) {
    const HashFamilySpec hp{FamilyKind::Hyperplane, 2, 1};
    const auto u = unit_at_angle(2, 1e-9, false);
    const auto v = unit_at_angle(2, 1e-9, true);
    EXPECT_NEAR(distance(hp, u, v), 1e-9, 1e-20);
}

TEST(Thresholds, RoundTrip) {
    const HashFamilySpec bs{FamilyKind::BitSampling, 64, 0};
    const auto [p1, p2] = similarity_to_thresholds(bs, 8, 32);
    EXPECT_DOUBLE_EQ(p1, 0.875);
    EXPECT_DOUBLE_EQ(p2, 0.5);
    EXPECT_DOUBLE_EQ(probability_to_distance(bs, p1), 8.0);
    EXPECT_DOUBLE_EQ(distance_to_probability(bs, 32.0), 0.5);
    EXPECT_THROW(similarity_to_thresholds(bs, 32, 8), InvalidParameter);
    const HashFamilySpec mh{FamilyKind::MinHash, 0, 0};
    EXPECT_THROW(similarity_to_thresholds(mh, 0.2, 0.5), InvalidParameter);
}

TEST(Points, Validation) {
    EXPECT_THROW(make_token_point("e", {}), InvalidParameter);
    EXPECT_THROW(make_unit_point("z", {0.0, 0.0}), InvalidParameter);
    EXPECT_THROW(make_unit_point("far", {2.0, 0.0}), InvalidParameter);
    const auto p = make_unit_point("ok", {1.0005, 0.0});
    EXPECT_DOUBLE_EQ(std::get<UnitVector>(p.payload).values[0], 1.0);
    const auto t = make_token_point("d", {5, 1, 5, 3});
    EXPECT_EQ(std::get<TokenSet>(t.payload).tokens, (std::vector<std::uint64_t>{1, 3, 5}));
}

TEST(Points, KindMismatch) {
    const HashFamilySpec mh{FamilyKind::MinHash, 0, 0};
    const auto v = make_unit_point("v", {1.0, 0.0});
    EXPECT_THROW(eval_hash(mh, 0, v), KindMismatch);
    const HashFamilySpec hp{FamilyKind::Hyperplane, 3, 0};
    EXPECT_THROW(eval_hash(hp, 0, v), KindMismatch); // wrong dimension
}

TEST(Hashes, DeterministicAndSeeded) {
    const auto a = make_token_point("a", range_tokens(0, 50));
    const HashFamilySpec f1{FamilyKind::MinHash, 0, 1};
    const HashFamilySpec f2{FamilyKind::MinHash, 0, 2};
    int differ = 0;
    for (std::uint64_t i = 0; i < 200; ++i) {
        ASSERT_EQ(eval_hash(f1, i, a), eval_hash(f1, i, a));
        differ += eval_hash(f1, i, a) != eval_hash(f2, i, a);
    }
    EXPECT_GT(differ, 150);
}

TEST(Hashes, MinHashReturnsAMember) {
    const auto tokens = range_tokens(0, 30);
    const auto a = make_token_point("a", tokens);
    const HashFamilySpec f{FamilyKind::MinHash, 0, 4};
    for (std::uint64_t i = 0; i < 100; ++i) {
        const auto h = eval_hash(f, i, a);
        EXPECT_NE(std::find(tokens.begin(), tokens.end(), h), tokens.end());
    }
}

TEST(CollisionLaw, MinHash) {
    const HashFamilySpec f{FamilyKind::MinHash, 0, 11};
    const auto x = make_token_point("x", range_tokens(0, 60));
    const auto y = make_token_point("y", range_tokens(30, 90));
    const double p = 30.0 / 90.0;
    for (int k = 1; k <= 3; ++k) {
        const double want = std::pow(p, k);
        EXPECT_NEAR(collision_rate(f, x, y, k, kSamples), want, oracle::three_sigma(want, kSamples)) << k;
    }
}

TEST(CollisionLaw, BitSampling) {
    const HashFamilySpec f{FamilyKind::BitSampling, 64, 12};
    BitVector a = BitVector::zeros(64);
    BitVector b = BitVector::zeros(64);
    for (std::uint32_t i = 0; i < 16; ++i) {
        b.set(i * 4, true);
    }
    const auto x = make_bit_point("x", a);
    const auto y = make_bit_point("y", b);
    const double p = 1.0 - 16.0 / 64.0;
    for (int k = 1; k <= 3; ++k) {
        const double want = std::pow(p, k);
        EXPECT_NEAR(collision_rate(f, x, y, k, kSamples), want, oracle::three_sigma(want, kSamples)) << k;
    }
}

TEST(CollisionLaw, Hyperplane) {
    const HashFamilySpec f{FamilyKind::Hyperplane, 8, 13};
    const double theta = 1.0;
    const auto x = unit_at_angle(8, theta, false);
    const auto y = unit_at_angle(8, theta, true);
    const double p = 1.0 - theta / std::numbers::pi;
    for (int k = 1; k <= 2; ++k) {
        const double want = std::pow(p, k);
        EXPECT_NEAR(collision_rate(f, x, y, k, kSamples), want, oracle::three_sigma(want, kSamples)) << k;
    }
}

TEST(Json, PointRoundTrip) {
    std::stringstream ss;
    ss << R"({"id":"a","tokens":[3,1,2]})" << "\n\n" << R"({"id":7,"tokens":[9]})" << "\n";
    std::uint32_t dim = 0;
    const auto pts = read_jsonl(ss, FamilyKind::MinHash, dim);
    ASSERT_EQ(pts.size(), 2u);
    EXPECT_EQ(pts[1].id, "7");
    std::stringstream out;
    write_jsonl(out, pts);
    EXPECT_EQ(out.str(), "{\"id\":\"a\",\"tokens\":[1,2,3]}\n{\"id\":\"7\",\"tokens\":[9]}\n");
}

TEST(Json, ErrorsCarryLineNumbers) {
    std::stringstream ss;
    ss << R"({"id":"a","tokens":[1]})" << "\n" << R"({"id":"b","tokens":[]})" << "\n";
    std::uint32_t dim = 0;
    try {
        read_jsonl(ss, FamilyKind::MinHash, dim);
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
    std::stringstream bad("{not json\n");
    EXPECT_THROW(read_jsonl(bad, FamilyKind::MinHash, dim), FormatError);
}

TEST(Json, HexBits) {
    const BitVector b = parse_hex_bits("a1", 0);
    EXPECT_EQ(b.dimension, 8u);
    EXPECT_TRUE(b.get(0));
    EXPECT_FALSE(b.get(1));
    EXPECT_TRUE(b.get(5));
    EXPECT_TRUE(b.get(7));
    EXPECT_EQ(format_hex_bits(b), "a1");
    EXPECT_THROW(parse_hex_bits("zz", 0), InvalidParameter);
}

TEST(Json, VectorDimensionIsFixedByFirstRecord) {
    std::stringstream ss;
    ss << R"({"id":"a","vec":[1,0]})" << "\n" << R"({"id":"b","vec":[1,0,0]})" << "\n";
    std::uint32_t dim = 0;
    EXPECT_THROW(read_jsonl(ss, FamilyKind::Hyperplane, dim), FormatError);
}
