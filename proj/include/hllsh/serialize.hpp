#pragma once

// Binary index file:
//
//   "HLLSH1"                      6 magic bytes
//   header_len                    u64, little-endian
//   header                        JSON (plan, family, seeds, counts)
//   per repetition, per table:    varint bucket_count, then buckets in
//                                 ascending key order:
//                                   key   16 bytes (lo then hi, little-endian)
//                                   count varint
//                                   ids   varint each, in insertion order
//   per point:                    varint id_len, id bytes, payload
//     tokens: varint count, varint deltas from the previous token
//     bits:   ceil(D/64) u64 words, little-endian
//     vec:    D IEEE-754 doubles, little-endian

#include "hllsh/errors.hpp"
#include "hllsh/index.hpp"
#include "hllsh/io.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace hllsh {

inline constexpr char kIndexMagic[] = "HLLSH1";
inline constexpr int kIndexFormatVersion = 1;

namespace detail {

inline void put_u64(std::ostream& out, std::uint64_t v) {
    char buf[8];
    for (int i = 0; i < 8; ++i) {
        buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    }
    out.write(buf, 8);
}

inline void put_varint(std::ostream& out, std::uint64_t v) {
    while (v >= 0x80) {
        out.put(static_cast<char>((v & 0x7f) | 0x80));
        v >>= 7;
    }
    out.put(static_cast<char>(v));
}

class Reader {
public:
    explicit Reader(std::istream& in) : in_(in) {}

    std::uint64_t u64() {
        unsigned char buf[8];
        read(buf, 8);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) {
            v = (v << 8) | buf[i];
        }
        return v;
    }

    std::uint64_t varint() {
        std::uint64_t v = 0;
        for (int shift = 0; shift < 64; shift += 7) {
            const int c = in_.get();
            if (c == std::char_traits<char>::eof()) {
                throw FormatError("index file truncated");
            }
            v |= static_cast<std::uint64_t>(c & 0x7f) << shift;
            if ((c & 0x80) == 0) {
                return v;
            }
        }
        throw FormatError("varint longer than 64 bits");
    }

    std::string bytes(std::size_t n) {
        std::string s(n, '\0');
        read(s.data(), n);
        return s;
    }

    void read(void* dst, std::size_t n) {
        in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) {
            throw FormatError("index file truncated");
        }
    }

    bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

private:
    std::istream& in_;
};

} // namespace detail

inline json index_header(const IndexSet& set) {
    json concat = json::array();
    for (const HashTable& t : set.repetitions.front().tables) {
        concat.push_back(t.concat_len);
    }
    std::uint64_t stored = 0;
    for (const LshIndex& idx : set.repetitions) {
        for (const HashTable& t : idx.tables) {
            for (const auto& [key, ids] : t.buckets) {
                stored += ids.size();
            }
        }
    }
    return json{
        {"format", kIndexMagic},
        {"version", kIndexFormatVersion},
        {"endianness", "little"},
        {"plan", set.plan()},
        {"family", set.family()},
        {"master_seed", set.master_seed()},
        {"repetitions", set.repetitions.size()},
        {"tables_per_repetition", set.repetitions.front().tables.size()},
        {"concat_lens", concat},
        {"num_points", set.points().size()},
        {"stored_ids", stored},
    };
}

/// Writes `set` in the binary index format. Output depends only on the
/// index contents, never on hash-map iteration order.
inline void write_index(std::ostream& out, const IndexSet& set) {
    if (set.repetitions.empty()) {
        throw InvalidParameter("cannot serialize an index without repetitions");
    }
    out.write(kIndexMagic, 6);
    const std::string header = index_header(set).dump();
    detail::put_u64(out, header.size());
    out.write(header.data(), static_cast<std::streamsize>(header.size()));

    std::vector<const BucketMap::value_type*> order;
    for (const LshIndex& idx : set.repetitions) {
        for (const HashTable& t : idx.tables) {
            order.clear();
            order.reserve(t.buckets.size());
            for (const auto& entry : t.buckets) {
                order.push_back(&entry);
            }
            std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->first < b->first; });
            detail::put_varint(out, order.size());
            for (const auto* entry : order) {
                detail::put_u64(out, entry->first.lo);
                detail::put_u64(out, entry->first.hi);
                detail::put_varint(out, entry->second.size());
                for (std::uint32_t id : entry->second) {
                    detail::put_varint(out, id);
                }
            }
        }
    }

    for (const DataPoint& p : set.points()) {
        detail::put_varint(out, p.id.size());
        out.write(p.id.data(), static_cast<std::streamsize>(p.id.size()));
        std::visit(
            [&](const auto& payload) {
                using T = std::decay_t<decltype(payload)>;
                if constexpr (std::is_same_v<T, TokenSet>) {
                    detail::put_varint(out, payload.tokens.size());
                    std::uint64_t prev = 0;
                    for (std::uint64_t tok : payload.tokens) {
                        detail::put_varint(out, tok - prev);
                        prev = tok;
                    }
                } else if constexpr (std::is_same_v<T, BitVector>) {
                    for (std::uint64_t w : payload.words) {
                        detail::put_u64(out, w);
                    }
                } else {
                    for (double v : payload.values) {
                        detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
                    }
                }
            },
            p.payload);
    }
}

inline IndexSet read_index(std::istream& in) {
    detail::Reader rd(in);
    if (rd.bytes(6) != std::string(kIndexMagic, 6)) {
        throw FormatError("not an index file (bad magic)");
    }
    const std::uint64_t header_len = rd.u64();
    if (header_len > (std::uint64_t{1} << 32)) {
        throw FormatError("implausible header length");
    }
    json header;
    try {
        header = json::parse(rd.bytes(header_len));
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad index header: ") + e.what());
    }

    TablePlan plan;
    HashFamilySpec family;
    std::uint64_t master_seed = 0;
    std::uint64_t reps = 0;
    std::uint64_t tables = 0;
    std::uint64_t num_points = 0;
    try {
        if (header.at("version").get<int>() != kIndexFormatVersion) {
            throw FormatError("unsupported index format version");
        }
        plan = header.at("plan").get<TablePlan>();
        family = header.at("family").get<HashFamilySpec>();
        master_seed = header.at("master_seed").get<std::uint64_t>();
        reps = header.at("repetitions").get<std::uint64_t>();
        tables = header.at("tables_per_repetition").get<std::uint64_t>();
        num_points = header.at("num_points").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad index header: ") + e.what());
    }
    if (tables != plan.total_tables() || reps != static_cast<std::uint64_t>(plan.repetitions) || reps == 0) {
        throw FormatError("index header counts disagree with its plan");
    }

    IndexSet set;
    set.repetitions.resize(reps);
    for (std::uint64_t r = 0; r < reps; ++r) {
        LshIndex& idx = set.repetitions[r];
        idx.plan = plan;
        idx.family = family;
        idx.master_seed = master_seed;
        idx.repetition_index = static_cast<std::uint32_t>(r);
        idx.tables.resize(tables);
        for (std::uint64_t t = 0; t < tables; ++t) {
            HashTable& table = idx.tables[t];
            table.concat_len = plan.concat_len(t);
            const std::uint64_t buckets = rd.varint();
            table.buckets.reserve(buckets);
            for (std::uint64_t b = 0; b < buckets; ++b) {
                BucketKey key;
                key.lo = rd.u64();
                key.hi = rd.u64();
                const std::uint64_t count = rd.varint();
                if (count > num_points) {
                    throw FormatError("bucket larger than the point set");
                }
                std::vector<std::uint32_t> ids(count);
                for (auto& id : ids) {
                    const std::uint64_t v = rd.varint();
                    if (v >= num_points) {
                        throw FormatError("bucket references an unknown point");
                    }
                    id = static_cast<std::uint32_t>(v);
                }
                table.buckets.emplace(key, std::move(ids));
            }
        }
    }

    auto points = std::make_shared<std::vector<DataPoint>>();
    points->reserve(num_points);
    for (std::uint64_t i = 0; i < num_points; ++i) {
        DataPoint p;
        p.id = rd.bytes(rd.varint());
        switch (family.kind) {
        case FamilyKind::MinHash: {
            TokenSet ts;
            ts.tokens.resize(rd.varint());
            std::uint64_t prev = 0;
            for (auto& tok : ts.tokens) {
                prev += rd.varint();
                tok = prev;
            }
            p.payload = std::move(ts);
            break;
        }
        case FamilyKind::BitSampling: {
            BitVector bits = BitVector::zeros(family.dimension);
            for (auto& w : bits.words) {
                w = rd.u64();
            }
            p.payload = std::move(bits);
            break;
        }
        case FamilyKind::Hyperplane: {
            UnitVector v;
            v.values.resize(family.dimension);
            for (double& x : v.values) {
                x = std::bit_cast<double>(rd.u64());
            }
            p.payload = std::move(v);
            break;
        }
        }
        points->push_back(std::move(p));
    }
    if (!rd.at_end()) {
        throw FormatError("trailing bytes after index data");
    }
    PointStore store = std::move(points);
    for (LshIndex& idx : set.repetitions) {
        idx.points = store;
    }
    return set;
}

inline void save_index(const std::string& path, const IndexSet& set) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot open '" + path + "' for writing");
    }
    write_index(out, set);
    if (!out) {
        throw Error("write to '" + path + "' failed");
    }
}

inline IndexSet load_index(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open '" + path + "'");
    }
    return read_index(in);
}

inline std::string serialize_to_string(const IndexSet& set) {
    std::ostringstream out(std::ios::binary);
    write_index(out, set);
    return std::move(out).str();
}

} // namespace hllsh
