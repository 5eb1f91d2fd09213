#pragma once

#include "hllsh/errors.hpp"
#include "hllsh/families.hpp"
#include "hllsh/planner.hpp"

#include "json.hpp"

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace hllsh {

using json = nlohmann::json;

inline void to_json(json& j, const TablePlan& p) {
    j = json{
        {"mode", to_string(p.mode)},
        {"n", p.n},
        {"p1", p.p1},
        {"p2", p.p2},
        {"rho", p.rho},
        {"kappa", p.kappa},
        {"alpha", p.alpha},
        {"low_len", p.low_len},
        {"high_len", p.high_len},
        {"num_low", p.num_low},
        {"num_high", p.num_high},
        {"a_real", p.a_real},
        {"b_real", p.b_real},
        {"repetitions", p.repetitions},
        {"predicted_far_candidates", p.predicted_far_candidates},
        {"predicted_single_success", p.predicted_single_success},
    };
}

inline void from_json(const json& j, TablePlan& p) {
    const std::string mode = j.at("mode").get<std::string>();
    if (mode == "classic") {
        p.mode = PlanMode::Classic;
    } else if (mode == "high_low") {
        p.mode = PlanMode::HighLow;
    } else {
        throw FormatError("unknown plan mode '" + mode + "'");
    }
    j.at("n").get_to(p.n);
    j.at("p1").get_to(p.p1);
    j.at("p2").get_to(p.p2);
    j.at("rho").get_to(p.rho);
    j.at("kappa").get_to(p.kappa);
    j.at("alpha").get_to(p.alpha);
    j.at("low_len").get_to(p.low_len);
    j.at("high_len").get_to(p.high_len);
    j.at("num_low").get_to(p.num_low);
    j.at("num_high").get_to(p.num_high);
    j.at("a_real").get_to(p.a_real);
    j.at("b_real").get_to(p.b_real);
    j.at("repetitions").get_to(p.repetitions);
    j.at("predicted_far_candidates").get_to(p.predicted_far_candidates);
    j.at("predicted_single_success").get_to(p.predicted_single_success);
}

inline void to_json(json& j, const HashFamilySpec& f) {
    j = json{{"kind", to_string(f.kind)}, {"dimension", f.dimension}, {"seed", f.seed}};
}

inline void from_json(const json& j, HashFamilySpec& f) {
    f.kind = parse_family_kind(j.at("kind").get<std::string>());
    j.at("dimension").get_to(f.dimension);
    j.at("seed").get_to(f.seed);
}

namespace detail {

inline int hex_value(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

} // namespace detail

/// Parses a hex string as an unsigned integer whose bit i becomes
/// coordinate i. `dimension` 0 infers four bits per hex digit.
inline BitVector parse_hex_bits(std::string hex, std::uint32_t dimension) {
    if (hex.rfind("0x", 0) == 0 || hex.rfind("0X", 0) == 0) {
        hex.erase(0, 2);
    }
    if (hex.empty()) {
        throw InvalidParameter("empty bit string");
    }
    if (dimension == 0) {
        dimension = static_cast<std::uint32_t>(hex.size() * 4);
    }
    BitVector bits = BitVector::zeros(dimension);
    for (std::size_t j = 0; j < hex.size(); ++j) {
        const int v = detail::hex_value(hex[hex.size() - 1 - j]);
        if (v < 0) {
            throw InvalidParameter("invalid hex digit in bit string");
        }
        for (int b = 0; b < 4; ++b) {
            if ((v >> b) & 1) {
                const std::size_t i = 4 * j + b;
                if (i >= dimension) {
                    throw InvalidParameter("bit string sets bit " + std::to_string(i) + " beyond dimension " +
                                           std::to_string(dimension));
                }
                bits.set(static_cast<std::uint32_t>(i), true);
            }
        }
    }
    return bits;
}

inline std::string format_hex_bits(const BitVector& bits) {
    static constexpr char digits[] = "0123456789abcdef";
    const std::size_t nibbles = (bits.dimension + 3) / 4;
    std::string out(nibbles, '0');
    for (std::size_t j = 0; j < nibbles; ++j) {
        int v = 0;
        for (int b = 0; b < 4; ++b) {
            const std::size_t i = 4 * j + b;
            if (i < bits.dimension && bits.get(static_cast<std::uint32_t>(i))) {
                v |= 1 << b;
            }
        }
        out[nibbles - 1 - j] = digits[v];
    }
    return out;
}

inline json point_to_json(const DataPoint& p) {
    json j;
    j["id"] = p.id;
    std::visit(
        [&](const auto& payload) {
            using T = std::decay_t<decltype(payload)>;
            if constexpr (std::is_same_v<T, TokenSet>) {
                j["tokens"] = payload.tokens;
            } else if constexpr (std::is_same_v<T, BitVector>) {
                j["bits"] = format_hex_bits(payload);
            } else {
                j["vec"] = payload.values;
            }
        },
        p.payload);
    return j;
}

/// Converts one JSONL record. `dimension` is in/out: 0 means "infer from
/// this record" and is then fixed for the rest of the file.
inline DataPoint point_from_json(const json& j, FamilyKind kind, std::uint32_t& dimension) {
    if (!j.is_object()) {
        throw InvalidParameter("record is not a JSON object");
    }
    std::string id;
    const auto id_it = j.find("id");
    if (id_it == j.end()) {
        throw InvalidParameter("record has no \"id\"");
    } else if (id_it->is_string()) {
        id = id_it->get<std::string>();
    } else if (id_it->is_number_integer()) {
        id = id_it->dump();
    } else {
        throw InvalidParameter("\"id\" must be a string");
    }

    switch (kind) {
    case FamilyKind::MinHash: {
        const auto it = j.find("tokens");
        if (it == j.end() || !it->is_array()) {
            throw InvalidParameter("record '" + id + "' has no \"tokens\" array");
        }
        std::vector<std::uint64_t> tokens;
        tokens.reserve(it->size());
        for (const auto& t : *it) {
            if (!t.is_number_unsigned() && !(t.is_number_integer() && t.get<std::int64_t>() >= 0)) {
                throw InvalidParameter("record '" + id + "' has a non-integer token");
            }
            tokens.push_back(t.get<std::uint64_t>());
        }
        return make_token_point(std::move(id), std::move(tokens));
    }
    case FamilyKind::BitSampling: {
        const auto it = j.find("bits");
        if (it == j.end() || !it->is_string()) {
            throw InvalidParameter("record '" + id + "' has no \"bits\" string");
        }
        BitVector bits = parse_hex_bits(it->get<std::string>(), dimension);
        dimension = bits.dimension;
        return make_bit_point(std::move(id), std::move(bits));
    }
    case FamilyKind::Hyperplane: {
        const auto it = j.find("vec");
        if (it == j.end() || !it->is_array()) {
            throw InvalidParameter("record '" + id + "' has no \"vec\" array");
        }
        std::vector<double> values;
        values.reserve(it->size());
        for (const auto& v : *it) {
            if (!v.is_number()) {
                throw InvalidParameter("record '" + id + "' has a non-numeric coordinate");
            }
            values.push_back(v.get<double>());
        }
        if (dimension == 0) {
            dimension = static_cast<std::uint32_t>(values.size());
        } else if (values.size() != dimension) {
            throw InvalidParameter("record '" + id + "' has dimension " + std::to_string(values.size()) +
                                   ", expected " + std::to_string(dimension));
        }
        return make_unit_point(std::move(id), std::move(values));
    }
    }
    throw InvalidParameter("unknown family kind");
}

/// Reads one point per non-blank line. Errors carry the 1-based line number.
inline std::vector<DataPoint> read_jsonl(std::istream& in, FamilyKind kind, std::uint32_t& dimension) {
    std::vector<DataPoint> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            out.push_back(point_from_json(json::parse(line), kind, dimension));
        } catch (const json::exception& e) {
            throw FormatError(std::string("malformed JSON: ") + e.what(), line_no);
        } catch (const InvalidParameter& e) {
            throw FormatError(e.what(), line_no);
        }
    }
    return out;
}

inline void write_jsonl(std::ostream& out, const std::vector<DataPoint>& points) {
    for (const DataPoint& p : points) {
        out << point_to_json(p).dump() << '\n';
    }
}

} // namespace hllsh
