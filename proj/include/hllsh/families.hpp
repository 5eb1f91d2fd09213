#pragma once

#include "hllsh/errors.hpp"
#include "hllsh/mix.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace hllsh {

enum class FamilyKind { MinHash, BitSampling, Hyperplane };

inline std::string to_string(FamilyKind k) {
    switch (k) {
    case FamilyKind::MinHash: return "minhash";
    case FamilyKind::BitSampling: return "bit_sampling";
    case FamilyKind::Hyperplane: return "hyperplane";
    }
    return "unknown";
}

inline FamilyKind parse_family_kind(const std::string& s) {
    if (s == "minhash") return FamilyKind::MinHash;
    if (s == "bit_sampling" || s == "bits") return FamilyKind::BitSampling;
    if (s == "hyperplane") return FamilyKind::Hyperplane;
    throw InvalidParameter("unknown hash family '" + s + "'");
}

/// A family of hash functions. Together with a 64-bit function index it
/// names exactly one function; nothing is materialized up front.
struct HashFamilySpec {
    FamilyKind kind = FamilyKind::MinHash;
    std::uint32_t dimension = 0; // bits or reals; ignored by MinHash
    std::uint64_t seed = 0;

    bool operator==(const HashFamilySpec&) const = default;
};

/// Sorted, duplicate-free tokens.
struct TokenSet {
    std::vector<std::uint64_t> tokens;
};

/// Fixed-width bit vector; bit i lives in word i/64 at position i%64.
struct BitVector {
    std::uint32_t dimension = 0;
    std::vector<std::uint64_t> words;

    bool get(std::uint32_t i) const { return (words[i >> 6] >> (i & 63)) & 1U; }
    void set(std::uint32_t i, bool v) {
        const std::uint64_t mask = std::uint64_t{1} << (i & 63);
        words[i >> 6] = v ? (words[i >> 6] | mask) : (words[i >> 6] & ~mask);
    }
    static BitVector zeros(std::uint32_t dimension) {
        return {dimension, std::vector<std::uint64_t>((dimension + 63) / 64, 0)};
    }
};

/// Real vector with Euclidean norm 1.
struct UnitVector {
    std::vector<double> values;
};

using Payload = std::variant<TokenSet, BitVector, UnitVector>;

struct DataPoint {
    std::string id;
    Payload payload;
};

inline FamilyKind payload_kind(const Payload& p) {
    switch (p.index()) {
    case 0: return FamilyKind::MinHash;
    case 1: return FamilyKind::BitSampling;
    default: return FamilyKind::Hyperplane;
    }
}

/// Sorts and de-duplicates tokens. Empty sets are rejected.
inline DataPoint make_token_point(std::string id, std::vector<std::uint64_t> tokens) {
    std::sort(tokens.begin(), tokens.end());
    tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
    if (tokens.empty()) {
        throw InvalidParameter("empty token set: Jaccard similarity is undefined");
    }
    return {std::move(id), TokenSet{std::move(tokens)}};
}

/// Renormalizes vectors whose norm is within 1e-3 of 1; rejects the rest.
inline DataPoint make_unit_point(std::string id, std::vector<double> values) {
    double sq = 0.0;
    for (double v : values) {
        sq += v * v;
    }
    const double norm = std::sqrt(sq);
    if (values.empty() || !(std::abs(norm - 1.0) <= 1e-3)) {
        throw InvalidParameter("vector norm " + std::to_string(norm) + " is not within 1e-3 of 1");
    }
    for (double& v : values) {
        v /= norm;
    }
    return {std::move(id), UnitVector{std::move(values)}};
}

inline DataPoint make_bit_point(std::string id, BitVector bits) {
    if (bits.words.size() != (bits.dimension + 63) / 64) {
        throw InvalidParameter("bit vector storage does not match its dimension");
    }
    return {std::move(id), std::move(bits)};
}

/// Throws KindMismatch unless `p` can be hashed by `spec`.
inline void check_compatible(const HashFamilySpec& spec, const DataPoint& p) {
    if (payload_kind(p.payload) != spec.kind) {
        throw KindMismatch("point '" + p.id + "' is not a " + to_string(spec.kind) + " payload");
    }
    switch (spec.kind) {
    case FamilyKind::MinHash:
        if (std::get<TokenSet>(p.payload).tokens.empty()) {
            throw InvalidParameter("point '" + p.id + "' has an empty token set");
        }
        break;
    case FamilyKind::BitSampling:
        if (std::get<BitVector>(p.payload).dimension != spec.dimension) {
            throw KindMismatch("point '" + p.id + "' has bit dimension " +
                               std::to_string(std::get<BitVector>(p.payload).dimension) + ", expected " +
                               std::to_string(spec.dimension));
        }
        break;
    case FamilyKind::Hyperplane:
        if (std::get<UnitVector>(p.payload).values.size() != spec.dimension) {
            throw KindMismatch("point '" + p.id + "' has dimension " +
                               std::to_string(std::get<UnitVector>(p.payload).values.size()) + ", expected " +
                               std::to_string(spec.dimension));
        }
        break;
    }
}

namespace detail {

inline std::uint64_t function_key(const HashFamilySpec& spec, std::uint64_t function_index) {
    return derive_seed(spec.seed, function_index);
}

// Keyed token mixing for MinHash: two SplitMix rounds with independent key halves.
inline std::uint64_t keyed_token_hash(std::uint64_t key, std::uint64_t token) {
    return splitmix64(splitmix64(token ^ key) ^ rotl64(key, 29));
}

// Standard normal for coordinate j of the direction selected by `key`.
inline double gaussian_coordinate(std::uint64_t key, std::uint64_t j) {
    const double u1 = unit_double(derive_seed(key, 2 * j));
    const double u2 = unit_double(derive_seed(key, 2 * j + 1));
    return std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

} // namespace detail

namespace detail {

// Evaluates the function whose key is `key` (see function_key), without the
// payload check.
inline std::uint64_t eval_keyed(const HashFamilySpec& spec, std::uint64_t key, const DataPoint& point) {
    switch (spec.kind) {
    case FamilyKind::MinHash: {
        const auto& tokens = std::get<TokenSet>(point.payload).tokens;
        std::uint64_t best_token = tokens.front();
        std::uint64_t best = keyed_token_hash(key, best_token);
        for (std::size_t i = 1; i < tokens.size(); ++i) {
            const std::uint64_t h = keyed_token_hash(key, tokens[i]);
            if (h < best) {
                best = h;
                best_token = tokens[i];
            }
        }
        return best_token;
    }
    case FamilyKind::BitSampling: {
        const auto& bits = std::get<BitVector>(point.payload);
        const auto coord = static_cast<std::uint32_t>(splitmix64(key) % bits.dimension);
        return bits.get(coord) ? 1 : 0;
    }
    case FamilyKind::Hyperplane: {
        const auto& v = std::get<UnitVector>(point.payload).values;
        double dot = 0.0;
        for (std::size_t j = 0; j < v.size(); ++j) {
            dot += v[j] * gaussian_coordinate(key, j);
        }
        return dot >= 0.0 ? 1 : 0;
    }
    }
    return 0;
}

// eval_hash without the payload check; callers validate once per point.
inline std::uint64_t eval_hash_unchecked(const HashFamilySpec& spec, std::uint64_t function_index,
                                         const DataPoint& point) {
    return eval_keyed(spec, function_key(spec, function_index), point);
}

} // namespace detail

/// Evaluates hash function `function_index` of `spec` on `point`.
///
/// MinHash returns the token minimizing a keyed 64-bit mix; BitSampling
/// returns one pseudorandomly chosen bit; Hyperplane returns the sign of the
/// dot product with a pseudorandom Gaussian direction (1 for >= 0).
inline std::uint64_t eval_hash(const HashFamilySpec& spec, std::uint64_t function_index, const DataPoint& point) {
    check_compatible(spec, point);
    return detail::eval_hash_unchecked(spec, function_index, point);
}

inline double jaccard(const TokenSet& a, const TokenSet& b) {
    std::size_t inter = 0;
    auto i = a.tokens.begin();
    auto j = b.tokens.begin();
    while (i != a.tokens.end() && j != b.tokens.end()) {
        if (*i < *j) {
            ++i;
        } else if (*j < *i) {
            ++j;
        } else {
            ++inter;
            ++i;
            ++j;
        }
    }
    const std::size_t uni = a.tokens.size() + b.tokens.size() - inter;
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

inline std::uint32_t hamming(const BitVector& a, const BitVector& b) {
    std::uint32_t d = 0;
    for (std::size_t w = 0; w < a.words.size(); ++w) {
        d += static_cast<std::uint32_t>(std::popcount(a.words[w] ^ b.words[w]));
    }
    return d;
}

/// Angle between unit vectors, 2 atan2(|x-y|, |x+y|) for accuracy near 0 and pi.
inline double angle(const UnitVector& a, const UnitVector& b) {
    double diff = 0.0;
    double sum = 0.0;
    for (std::size_t j = 0; j < a.values.size(); ++j) {
        const double d = a.values[j] - b.values[j];
        const double s = a.values[j] + b.values[j];
        diff += d * d;
        sum += s * s;
    }
    return 2.0 * std::atan2(std::sqrt(diff), std::sqrt(sum));
}

namespace detail {

inline void check_same_kind(const HashFamilySpec& spec, const DataPoint& x, const DataPoint& y) {
    check_compatible(spec, x);
    check_compatible(spec, y);
}

} // namespace detail

/// Exact single-hash collision probability: Jaccard, 1 - d/D or 1 - theta/pi.
inline double collision_probability(const HashFamilySpec& spec, const DataPoint& x, const DataPoint& y) {
    detail::check_same_kind(spec, x, y);
    switch (spec.kind) {
    case FamilyKind::MinHash:
        return jaccard(std::get<TokenSet>(x.payload), std::get<TokenSet>(y.payload));
    case FamilyKind::BitSampling:
        return 1.0 - static_cast<double>(hamming(std::get<BitVector>(x.payload), std::get<BitVector>(y.payload))) /
                         spec.dimension;
    case FamilyKind::Hyperplane:
        return 1.0 - angle(std::get<UnitVector>(x.payload), std::get<UnitVector>(y.payload)) / std::numbers::pi;
    }
    return 0.0;
}

/// Distance in the family's native scale: 1 - Jaccard, Hamming distance, or angle in radians.
inline double distance(const HashFamilySpec& spec, const DataPoint& x, const DataPoint& y) {
    detail::check_same_kind(spec, x, y);
    switch (spec.kind) {
    case FamilyKind::MinHash:
        return 1.0 - jaccard(std::get<TokenSet>(x.payload), std::get<TokenSet>(y.payload));
    case FamilyKind::BitSampling:
        return static_cast<double>(hamming(std::get<BitVector>(x.payload), std::get<BitVector>(y.payload)));
    case FamilyKind::Hyperplane:
        return angle(std::get<UnitVector>(x.payload), std::get<UnitVector>(y.payload));
    }
    return 0.0;
}

/// Maps a collision probability to the family's distance scale.
inline double probability_to_distance(const HashFamilySpec& spec, double p) {
    switch (spec.kind) {
    case FamilyKind::MinHash: return 1.0 - p;
    case FamilyKind::BitSampling: return (1.0 - p) * spec.dimension;
    case FamilyKind::Hyperplane: return (1.0 - p) * std::numbers::pi;
    }
    return 0.0;
}

/// Maps a distance in the family's scale to its collision probability.
inline double distance_to_probability(const HashFamilySpec& spec, double d) {
    switch (spec.kind) {
    case FamilyKind::MinHash: return 1.0 - d;
    case FamilyKind::BitSampling: return 1.0 - d / spec.dimension;
    case FamilyKind::Hyperplane: return 1.0 - d / std::numbers::pi;
    }
    return 0.0;
}

/// Near/far thresholds in the family's natural units mapped to (p1, p2).
/// MinHash takes Jaccard similarities (t1 > t2); BitSampling takes Hamming
/// radii and Hyperplane takes angles in radians (t1 < t2).
inline std::pair<double, double> similarity_to_thresholds(const HashFamilySpec& spec, double t1, double t2) {
    double p1 = 0.0;
    double p2 = 0.0;
    switch (spec.kind) {
    case FamilyKind::MinHash:
        p1 = t1;
        p2 = t2;
        break;
    case FamilyKind::BitSampling:
        if (spec.dimension == 0) {
            throw InvalidParameter("bit sampling needs a positive dimension");
        }
        p1 = 1.0 - t1 / spec.dimension;
        p2 = 1.0 - t2 / spec.dimension;
        break;
    case FamilyKind::Hyperplane:
        p1 = 1.0 - t1 / std::numbers::pi;
        p2 = 1.0 - t2 / std::numbers::pi;
        break;
    }
    if (!(p1 > p2)) {
        throw InvalidParameter("near threshold must map to a larger collision probability than the far threshold");
    }
    if (!(p2 >= 0.0 && p1 <= 1.0)) {
        throw InvalidParameter("thresholds fall outside the family's range");
    }
    return {p1, p2};
}

} // namespace hllsh
