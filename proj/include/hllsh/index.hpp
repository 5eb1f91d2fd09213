#pragma once

#include "hllsh/errors.hpp"
#include "hllsh/families.hpp"
#include "hllsh/mix.hpp"
#include "hllsh/parallel.hpp"
#include "hllsh/planner.hpp"

#include <compare>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <unordered_map>
#include <vector>

namespace hllsh {

/// 128-bit mix of a table's concatenated hash values.
struct BucketKey {
    std::uint64_t lo = 0;
    std::uint64_t hi = 0;

    auto operator<=>(const BucketKey&) const = default;
};

struct BucketKeyHash {
    std::size_t operator()(const BucketKey& k) const noexcept {
        return static_cast<std::size_t>(k.lo ^ rotl64(k.hi, 23));
    }
};

using BucketMap = std::unordered_map<BucketKey, std::vector<std::uint32_t>, BucketKeyHash>;

struct HashTable {
    std::uint32_t concat_len = 0;
    BucketMap buckets;
};

using PointStore = std::shared_ptr<const std::vector<DataPoint>>;

/// One independent copy of the structure. Points are shared between copies
/// and referenced in buckets by their position in the store.
struct LshIndex {
    TablePlan plan;
    HashFamilySpec family;
    std::uint64_t master_seed = 0;
    std::uint32_t repetition_index = 0;
    std::vector<HashTable> tables;
    PointStore points;
};

/// All repetitions of a build.
struct IndexSet {
    std::vector<LshIndex> repetitions;

    const TablePlan& plan() const { return repetitions.front().plan; }
    const HashFamilySpec& family() const { return repetitions.front().family; }
    const std::vector<DataPoint>& points() const { return *repetitions.front().points; }
    std::uint64_t master_seed() const { return repetitions.front().master_seed; }
};

/// Upper bound on stored id references, guarding against plans that cannot
/// fit in memory.
inline constexpr std::uint64_t kMaxStoredIds = std::uint64_t{1} << 31;

/// Upper bound on hash tables over all repetitions; each costs a hash map.
inline constexpr std::uint64_t kMaxTables = std::uint64_t{1} << 22;

/// Function index of hash `position` in table `table` of repetition `rep`.
inline std::uint64_t hash_function_index(std::uint64_t master_seed, std::uint32_t rep, std::uint64_t table,
                                         std::uint32_t position) {
    return derive_seed(master_seed, rep, table, position);
}

/// Function keys of the `concat_len` hashes of one table.
inline std::vector<std::uint64_t> table_keys(const HashFamilySpec& family, std::uint64_t master_seed,
                                             std::uint32_t rep, std::uint64_t table, std::uint32_t concat_len) {
    std::vector<std::uint64_t> keys(concat_len);
    for (std::uint32_t pos = 0; pos < concat_len; ++pos) {
        keys[pos] = detail::function_key(family, hash_function_index(master_seed, rep, table, pos));
    }
    return keys;
}

inline BucketKey bucket_key(const HashFamilySpec& family, const std::vector<std::uint64_t>& keys,
                            const DataPoint& point) {
    std::uint64_t lo = 0x243f6a8885a308d3ULL;
    std::uint64_t hi = 0x13198a2e03707344ULL;
    for (std::uint64_t key : keys) {
        const std::uint64_t v = detail::eval_keyed(family, key, point);
        lo = splitmix64(lo ^ splitmix64(v ^ 0xa4093822299f31d0ULL));
        hi = splitmix64(hi + splitmix64(v ^ 0x082efa98ec4e6c89ULL));
    }
    return {lo, hi};
}

inline BucketKey bucket_key(const HashFamilySpec& family, std::uint64_t master_seed, std::uint32_t rep,
                            std::uint64_t table, std::uint32_t concat_len, const DataPoint& point) {
    return bucket_key(family, table_keys(family, master_seed, rep, table, concat_len), point);
}

struct BuildOptions {
    unsigned threads = 1; // 0 = hardware concurrency
};

/// Builds plan.repetitions independent structures over `points`.
/// The result does not depend on the thread count.
inline IndexSet build(const TablePlan& plan, const HashFamilySpec& family, std::vector<DataPoint> points,
                      std::uint64_t master_seed, const BuildOptions& opts = {}) {
    if (points.size() > plan.n) {
        throw CapacityExceeded("index sized for " + std::to_string(plan.n) + " points, got " +
                               std::to_string(points.size()));
    }
    if (points.size() > std::numeric_limits<std::uint32_t>::max()) {
        throw CapacityExceeded("point count exceeds 32-bit ids");
    }
    if (plan.repetitions < 1) {
        throw InvalidParameter("repetitions must be at least 1");
    }
    for (const DataPoint& p : points) {
        check_compatible(family, p);
    }
    const std::uint64_t tables = plan.total_tables();
    const auto reps = static_cast<std::uint32_t>(plan.repetitions);
    const long double refs = static_cast<long double>(points.size()) * tables * reps;
    if (refs > static_cast<long double>(kMaxStoredIds)) {
        throw CapacityExceeded("plan needs " + std::to_string(static_cast<double>(refs)) +
                               " bucket entries, above the supported maximum");
    }
    if (static_cast<long double>(tables) * reps > static_cast<long double>(kMaxTables)) {
        throw CapacityExceeded("plan needs " + std::to_string(tables) + " tables x " + std::to_string(reps) +
                               " repetitions, above the supported maximum");
    }

    auto store = std::make_shared<const std::vector<DataPoint>>(std::move(points));
    IndexSet set;
    set.repetitions.resize(reps);
    for (std::uint32_t r = 0; r < reps; ++r) {
        LshIndex& idx = set.repetitions[r];
        idx.plan = plan;
        idx.family = family;
        idx.master_seed = master_seed;
        idx.repetition_index = r;
        idx.points = store;
        idx.tables.resize(tables);
    }

    parallel_for(tables * reps, opts.threads, [&](std::size_t task) {
        const auto r = static_cast<std::uint32_t>(task / tables);
        const std::uint64_t t = task % tables;
        HashTable& table = set.repetitions[r].tables[t];
        table.concat_len = plan.concat_len(t);
        const auto& pts = *store;
        const std::vector<std::uint64_t> keys = table_keys(family, master_seed, r, t, table.concat_len);
        for (std::uint32_t i = 0; i < pts.size(); ++i) {
            table.buckets[bucket_key(family, keys, pts[i])].push_back(i);
        }
    });
    return set;
}

enum class Outcome { Found, NotFound };

/// Counters: candidates_examined counts every bucket entry retrieved,
/// far_candidates_examined the entries whose point lies at distance >= r2,
/// and distance_computations the unique points whose distance was computed.
struct QueryResult {
    Outcome outcome = Outcome::NotFound;
    std::uint32_t point_index = 0;
    double distance = std::numeric_limits<double>::infinity();
    std::uint32_t found_repetition = 0;
    std::uint64_t found_table = 0;
    std::uint64_t tables_probed = 0;
    std::uint64_t candidates_examined = 0;
    std::uint64_t far_candidates_examined = 0;
    std::uint64_t distance_computations = 0;

    bool found() const { return outcome == Outcome::Found; }
};

struct QueryOptions {
    /// Stop at the first point with distance < r2. When false every table is
    /// probed and the first qualifying point is still reported.
    bool stop_at_first = true;
    /// Probe repetitions [first_repetition, first_repetition + max_repetitions);
    /// max_repetitions 0 means through the last one.
    std::uint32_t first_repetition = 0;
    std::uint32_t max_repetitions = 0;
};

/// Scans repetitions in order and, inside each, high tables before low tables.
/// Returns the first point at distance strictly below r2.
inline QueryResult query(const IndexSet& set, const DataPoint& q, double r2, const QueryOptions& opts = {}) {
    QueryResult res;
    if (set.repetitions.empty()) {
        return res;
    }
    const HashFamilySpec& family = set.family();
    check_compatible(family, q);
    const auto& pts = set.points();
    if (pts.empty()) {
        return res;
    }

    enum : std::uint8_t { kUnseen = 0, kNear = 1, kFar = 2 };
    std::vector<std::uint8_t> state(pts.size(), kUnseen);

    const std::size_t first = std::min<std::size_t>(opts.first_repetition, set.repetitions.size());
    const std::size_t last = opts.max_repetitions == 0
                                 ? set.repetitions.size()
                                 : std::min<std::size_t>(first + opts.max_repetitions, set.repetitions.size());
    for (std::size_t r = first; r < last; ++r) {
        const LshIndex& idx = set.repetitions[r];
        for (std::uint64_t t = 0; t < idx.tables.size(); ++t) {
            const HashTable& table = idx.tables[t];
            ++res.tables_probed;
            const BucketKey key = bucket_key(family, idx.master_seed, idx.repetition_index, t, table.concat_len, q);
            const auto it = table.buckets.find(key);
            if (it == table.buckets.end()) {
                continue;
            }
            for (std::uint32_t id : it->second) {
                ++res.candidates_examined;
                if (state[id] == kUnseen) {
                    const double d = distance(family, q, pts[id]);
                    ++res.distance_computations;
                    state[id] = d < r2 ? kNear : kFar;
                    if (state[id] == kNear && !res.found()) {
                        res.outcome = Outcome::Found;
                        res.point_index = id;
                        res.distance = d;
                        res.found_repetition = static_cast<std::uint32_t>(r);
                        res.found_table = t;
                        if (opts.stop_at_first) {
                            return res;
                        }
                    }
                }
                if (state[id] == kFar) {
                    ++res.far_candidates_examined;
                }
            }
        }
    }
    return res;
}

/// Structural summary of a built index next to the plan's predictions.
struct IndexStats {
    std::uint64_t repetitions = 0;
    std::uint64_t tables_per_repetition = 0;
    std::uint64_t points = 0;
    std::map<std::uint32_t, std::uint64_t> tables_by_length; // per repetition
    std::uint64_t total_buckets = 0;
    std::uint64_t stored_ids = 0;
    std::map<std::uint64_t, std::uint64_t> occupancy_histogram; // bucket size -> buckets
    std::vector<std::uint64_t> ids_per_table;                   // flattened over repetitions
    std::uint64_t memory_bytes = 0;
    double predicted_far_candidates = 0.0;
    double predicted_single_success = 0.0;
    double predicted_repeated_success = 0.0;
    double a_real = 0.0;
    double b_real = 0.0;
};

inline IndexStats stats(const IndexSet& set) {
    IndexStats s;
    if (set.repetitions.empty()) {
        return s;
    }
    const TablePlan& plan = set.plan();
    s.repetitions = set.repetitions.size();
    s.tables_per_repetition = set.repetitions.front().tables.size();
    s.points = set.points().size();
    for (const HashTable& t : set.repetitions.front().tables) {
        ++s.tables_by_length[t.concat_len];
    }
    for (const LshIndex& idx : set.repetitions) {
        for (const HashTable& t : idx.tables) {
            std::uint64_t in_table = 0;
            for (const auto& [key, ids] : t.buckets) {
                ++s.occupancy_histogram[ids.size()];
                in_table += ids.size();
                s.memory_bytes += sizeof(BucketKey) + sizeof(std::vector<std::uint32_t>) + 2 * sizeof(void*) +
                                  ids.capacity() * sizeof(std::uint32_t);
            }
            s.total_buckets += t.buckets.size();
            s.stored_ids += in_table;
            s.ids_per_table.push_back(in_table);
        }
    }
    for (const DataPoint& p : set.points()) {
        s.memory_bytes += sizeof(DataPoint) + p.id.size();
        std::visit(
            [&](const auto& payload) {
                using T = std::decay_t<decltype(payload)>;
                if constexpr (std::is_same_v<T, TokenSet>) {
                    s.memory_bytes += payload.tokens.size() * sizeof(std::uint64_t);
                } else if constexpr (std::is_same_v<T, BitVector>) {
                    s.memory_bytes += payload.words.size() * sizeof(std::uint64_t);
                } else {
                    s.memory_bytes += payload.values.size() * sizeof(double);
                }
            },
            p.payload);
    }
    s.predicted_far_candidates = plan.predicted_far_candidates;
    s.predicted_single_success = plan.predicted_single_success;
    s.predicted_repeated_success = plan.predicted_repeated_success();
    s.a_real = plan.a_real;
    s.b_real = plan.b_real;
    return s;
}

} // namespace hllsh
