#pragma once

#include "hllsh/errors.hpp"
#include "hllsh/families.hpp"
#include "hllsh/index.hpp"
#include "hllsh/io.hpp"
#include "hllsh/mix.hpp"
#include "hllsh/parallel.hpp"
#include "hllsh/planner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

namespace hllsh {

struct PlantedOptions {
    /// Starting query-set size for MinHash; grown until both similarities are
    /// exact ratios (or a cap is reached).
    std::uint32_t base_set_size = 100;
    /// Bit count (BitSampling) or vector dimension (Hyperplane).
    std::uint32_t dimension = 64;
};

/// A dataset with one point at collision probability s1 to the query and
/// every other point at exactly the far similarity.
struct PlantedInstance {
    HashFamilySpec family; // seed left at 0; builds pick their own
    std::vector<DataPoint> dataset;
    DataPoint query;
    std::uint32_t planted_index = 0;
    std::string planted_id;
    double requested_s1 = 0.0;
    double requested_s2 = 0.0;
    double realized_s1 = 0.0;    // collision probability of the planted pair
    double far_similarity = 0.0; // collision probability of every far pair
    double near_distance = 0.0;
    double far_distance = 0.0;
    double r2 = 0.0;             // midpoint threshold: near < r2 <= far
};

namespace detail {

// Random k-subset of `from` (Floyd's algorithm), returned sorted.
template <typename Rng>
std::vector<std::uint64_t> random_subset(const std::vector<std::uint64_t>& from, std::size_t k, Rng& rng) {
    const std::size_t m = from.size();
    std::unordered_set<std::size_t> chosen;
    chosen.reserve(k * 2);
    for (std::size_t j = m - k; j < m; ++j) {
        const std::size_t t = std::uniform_int_distribution<std::size_t>(0, j)(rng);
        if (!chosen.insert(t).second) {
            chosen.insert(j);
        }
    }
    std::vector<std::uint64_t> out;
    out.reserve(k);
    for (std::size_t i : chosen) {
        out.push_back(from[i]);
    }
    std::sort(out.begin(), out.end());
    return out;
}

template <typename Rng>
std::vector<std::uint32_t> random_coordinates(std::uint32_t dimension, std::uint32_t k, Rng& rng) {
    std::vector<std::uint32_t> all(dimension);
    for (std::uint32_t i = 0; i < dimension; ++i) {
        all[i] = i;
    }
    for (std::uint32_t i = 0; i < k; ++i) {
        const std::uint32_t j = std::uniform_int_distribution<std::uint32_t>(i, dimension - 1)(rng);
        std::swap(all[i], all[j]);
    }
    all.resize(k);
    return all;
}

template <typename Rng>
std::vector<double> random_unit(std::uint32_t dimension, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (;;) {
        std::vector<double> v(dimension);
        double sq = 0.0;
        for (double& x : v) {
            x = normal(rng);
            sq += x * x;
        }
        if (sq > 1e-20) {
            const double norm = std::sqrt(sq);
            for (double& x : v) {
                x /= norm;
            }
            return v;
        }
    }
}

// Unit vector at exactly `theta` from unit vector q.
template <typename Rng>
std::vector<double> vector_at_angle(const std::vector<double>& q, double theta, Rng& rng) {
    for (;;) {
        std::vector<double> u = random_unit(static_cast<std::uint32_t>(q.size()), rng);
        double dot = 0.0;
        for (std::size_t j = 0; j < q.size(); ++j) {
            dot += u[j] * q[j];
        }
        double sq = 0.0;
        for (std::size_t j = 0; j < q.size(); ++j) {
            u[j] -= dot * q[j];
            sq += u[j] * u[j];
        }
        if (sq < 1e-12) {
            continue;
        }
        const double norm = std::sqrt(sq);
        std::vector<double> out(q.size());
        for (std::size_t j = 0; j < q.size(); ++j) {
            out[j] = std::cos(theta) * q[j] + std::sin(theta) * (u[j] / norm);
        }
        return out;
    }
}

inline bool is_ratio(double s, std::uint64_t m) {
    const double t = std::round(s * static_cast<double>(m));
    return std::abs(t / static_cast<double>(m) - s) <= 1e-9;
}

} // namespace detail

/// Builds a planted instance. Deterministic in `seed`.
///
/// MinHash: the query is a set of m tokens, the planted point an
/// s1*m-subset of it and each far point an s2*m-subset, so Jaccard
/// similarities are exact ratios. m grows from base_set_size until both
/// ratios are exact; failing that the near count rounds up and the far count
/// down, and the realized values are reported.
/// BitSampling/Hyperplane: points at an exact Hamming distance or angle from
/// the query, rounded the same way when (1-s)*D is not an integer.
inline PlantedInstance generate_planted(FamilyKind kind, std::uint64_t n, double s1, double s2, std::uint64_t seed,
                                        const PlantedOptions& opts = {}) {
    if (!(s2 > 0.0 && s2 < s1 && s1 <= 1.0)) {
        throw InvalidParameter("planted instance needs 0 < s2 < s1 <= 1");
    }
    if (n < 2) {
        throw InvalidParameter("planted instance needs n >= 2");
    }
    if (n > std::numeric_limits<std::uint32_t>::max()) {
        throw InvalidParameter("planted instance too large");
    }
    std::mt19937_64 rng(seed);
    PlantedInstance inst;
    inst.requested_s1 = s1;
    inst.requested_s2 = s2;
    inst.family.kind = kind;
    inst.planted_index = static_cast<std::uint32_t>(std::uniform_int_distribution<std::uint64_t>(0, n - 1)(rng));
    inst.dataset.reserve(n);

    auto point_id = [](std::uint64_t i) { return "p" + std::to_string(i); };

    switch (kind) {
    case FamilyKind::MinHash: {
        std::uint64_t m = std::max<std::uint32_t>(opts.base_set_size, 2);
        const std::uint64_t cap = m * 100;
        std::uint64_t exact_m = 0;
        for (std::uint64_t c = m; c <= cap; ++c) {
            if (detail::is_ratio(s1, c) && detail::is_ratio(s2, c) && std::round(s2 * c) >= 1) {
                exact_m = c;
                break;
            }
        }
        std::uint64_t near_shared = 0;
        std::uint64_t far_shared = 0;
        if (exact_m != 0) {
            m = exact_m;
            near_shared = static_cast<std::uint64_t>(std::round(s1 * m));
            far_shared = static_cast<std::uint64_t>(std::round(s2 * m));
        } else {
            for (;; ++m) {
                near_shared = static_cast<std::uint64_t>(std::ceil(s1 * m - 1e-9));
                far_shared = static_cast<std::uint64_t>(std::floor(s2 * m + 1e-9));
                if (far_shared >= 1 && near_shared > far_shared) {
                    break;
                }
            }
        }
        std::unordered_set<std::uint64_t> seen;
        std::vector<std::uint64_t> q_tokens;
        while (q_tokens.size() < m) {
            const std::uint64_t t = rng();
            if (seen.insert(t).second) {
                q_tokens.push_back(t);
            }
        }
        inst.query = make_token_point("q", q_tokens);
        for (std::uint64_t i = 0; i < n; ++i) {
            const std::size_t k = i == inst.planted_index ? near_shared : far_shared;
            inst.dataset.push_back(make_token_point(point_id(i), detail::random_subset(q_tokens, k, rng)));
        }
        break;
    }
    case FamilyKind::BitSampling: {
        const std::uint32_t dim = opts.dimension;
        if (dim == 0) {
            throw InvalidParameter("bit sampling needs a positive dimension");
        }
        inst.family.dimension = dim;
        const auto near_flips = static_cast<std::uint32_t>(std::floor((1.0 - s1) * dim + 1e-9));
        const auto far_flips = static_cast<std::uint32_t>(std::ceil((1.0 - s2) * dim - 1e-9));
        if (far_flips <= near_flips || far_flips > dim) {
            throw InvalidParameter("dimension too small to separate s1 from s2");
        }
        BitVector q = BitVector::zeros(dim);
        for (std::uint32_t i = 0; i < dim; ++i) {
            q.set(i, rng() & 1U);
        }
        inst.query = make_bit_point("q", q);
        for (std::uint64_t i = 0; i < n; ++i) {
            BitVector x = q;
            const std::uint32_t flips = i == inst.planted_index ? near_flips : far_flips;
            for (std::uint32_t c : detail::random_coordinates(dim, flips, rng)) {
                x.set(c, !x.get(c));
            }
            inst.dataset.push_back(make_bit_point(point_id(i), std::move(x)));
        }
        break;
    }
    case FamilyKind::Hyperplane: {
        const std::uint32_t dim = opts.dimension;
        if (dim < 2) {
            throw InvalidParameter("hyperplane instances need dimension >= 2");
        }
        inst.family.dimension = dim;
        const std::vector<double> q = detail::random_unit(dim, rng);
        inst.query = make_unit_point("q", q);
        const double near_theta = (1.0 - s1) * std::numbers::pi;
        const double far_theta = (1.0 - s2) * std::numbers::pi;
        for (std::uint64_t i = 0; i < n; ++i) {
            const double theta = i == inst.planted_index ? near_theta : far_theta;
            inst.dataset.push_back(make_unit_point(point_id(i), detail::vector_at_angle(q, theta, rng)));
        }
        break;
    }
    }

    inst.planted_id = inst.dataset[inst.planted_index].id;
    const DataPoint& planted = inst.dataset[inst.planted_index];
    inst.realized_s1 = collision_probability(inst.family, inst.query, planted);
    inst.near_distance = distance(inst.family, inst.query, planted);
    inst.far_distance = std::numeric_limits<double>::infinity();
    inst.far_similarity = 0.0;
    for (std::uint32_t i = 0; i < inst.dataset.size(); ++i) {
        if (i == inst.planted_index) {
            continue;
        }
        inst.far_distance = std::min(inst.far_distance, distance(inst.family, inst.query, inst.dataset[i]));
        inst.far_similarity =
            std::max(inst.far_similarity, collision_probability(inst.family, inst.query, inst.dataset[i]));
    }
    inst.r2 = 0.5 * (inst.near_distance + inst.far_distance);
    return inst;
}

/// Exact linear scan: index of the nearest point at distance < r, if any.
inline std::optional<std::uint32_t> brute_force_near(const HashFamilySpec& family,
                                                     const std::vector<DataPoint>& dataset, const DataPoint& q,
                                                     double r) {
    std::optional<std::uint32_t> best;
    double best_d = r;
    for (std::uint32_t i = 0; i < dataset.size(); ++i) {
        const double d = distance(family, q, dataset[i]);
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return best;
}

/// Sample mean with its standard error and a normal-approximation 99% CI.
struct Estimate {
    double mean = 0.0;
    double std_error = 0.0;
    double ci99_low = 0.0;
    double ci99_high = 0.0;
};

inline constexpr double kZ99 = 2.5758293035489004;

inline Estimate estimate(const std::vector<double>& xs) {
    Estimate e;
    if (xs.empty()) {
        return e;
    }
    double sum = 0.0;
    for (double x : xs) {
        sum += x;
    }
    const double n = static_cast<double>(xs.size());
    e.mean = sum / n;
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) {
            ss += (x - e.mean) * (x - e.mean);
        }
        e.std_error = std::sqrt(ss / (n - 1.0) / n);
    }
    e.ci99_low = e.mean - kZ99 * e.std_error;
    e.ci99_high = e.mean + kZ99 * e.std_error;
    return e;
}

struct ExperimentConfig {
    FamilyKind kind = FamilyKind::MinHash;
    std::uint64_t n = 4096;
    double s1 = 0.5;
    double s2 = 0.1;
    std::size_t trials = 500;
    PlanMode mode = PlanMode::HighLow;
    int repetitions = kDefaultRepetitions;
    /// When false a HighLow request always yields a HighLow plan, even for p1 >= 1/2.
    bool allow_fallback = true;
    std::uint64_t seed = 1;
    unsigned threads = 1;
    PlantedOptions planted;
};

struct BenchReport {
    ExperimentConfig config;
    TablePlan plan;
    std::uint64_t classic_tables = 0;
    double realized_s1 = 0.0;
    double realized_s2 = 0.0;
    std::uint64_t far_points = 0;

    Estimate single_success;
    Estimate repeated_success;
    /// Far bucket hits per structure when every table is probed.
    Estimate far_candidates;
    /// Far bucket hits per structure under early termination.
    Estimate far_candidates_early;
    Estimate distance_computations;
    std::size_t incorrect_found = 0;

    double predicted_single_success = 0.0;
    double predicted_repeated_success = 0.0;
    /// far_points * sum over table groups of count * p2^len.
    double predicted_far_exact = 0.0;
    /// a + b + 1.
    double far_bound = 0.0;

    double build_seconds = 0.0;
    double query_seconds = 0.0;
};

namespace detail {

struct TrialOutcome {
    double single_success = 0.0;
    double repeated_success = 0.0;
    double far_exhaustive = 0.0;
    double far_early = 0.0;
    double distance_computations = 0.0;
    std::size_t incorrect = 0;
    double build_seconds = 0.0;
    double query_seconds = 0.0;
};

inline bool found_is_correct(const PlantedInstance& inst, const QueryResult& r) {
    if (!r.found()) {
        return true;
    }
    const double d = distance(inst.family, inst.query, inst.dataset[r.point_index]);
    return d < inst.r2 && d == r.distance;
}

} // namespace detail

inline TablePlan experiment_plan(const ExperimentConfig& cfg, double p1, double p2) {
    const SensitivityProfile prof = derive_profile(p1, p2, cfg.n);
    if (cfg.mode == PlanMode::Classic) {
        TablePlan p = plan_classic(prof);
        p.repetitions = cfg.repetitions;
        return p;
    }
    return plan_high_low(prof, {.fallback_to_classic = cfg.allow_fallback, .repetitions = cfg.repetitions});
}

/// Repeats build + query on fresh planted instances. Each trial builds
/// `repetitions` structures; repetition 0 alone gives the single-structure
/// success and all of them together the repeated success. Far-hit counts are
/// averaged over the structures of a trial.
inline BenchReport run_success_experiment(const ExperimentConfig& cfg) {
    if (cfg.trials < 100) {
        throw InvalidParameter("success experiments need at least 100 trials");
    }
    const PlantedInstance probe = generate_planted(cfg.kind, cfg.n, cfg.s1, cfg.s2, 0, cfg.planted);

    BenchReport rep;
    rep.config = cfg;
    rep.realized_s1 = probe.realized_s1;
    rep.realized_s2 = probe.far_similarity;
    rep.far_points = cfg.n - 1;
    rep.plan = experiment_plan(cfg, rep.realized_s1, rep.realized_s2);
    rep.classic_tables = plan_classic(derive_profile(rep.realized_s1, rep.realized_s2, cfg.n)).total_tables();

    const TablePlan& plan = rep.plan;
    rep.predicted_single_success = plan.predicted_single_success;
    rep.predicted_repeated_success = plan.predicted_repeated_success();
    rep.predicted_far_exact =
        static_cast<double>(rep.far_points) *
        (static_cast<double>(plan.num_high) * std::pow(rep.realized_s2, static_cast<double>(plan.high_len)) +
         static_cast<double>(plan.num_low) * std::pow(rep.realized_s2, static_cast<double>(plan.low_len)));
    rep.far_bound = plan.a_real + plan.b_real + 1.0;

    std::vector<detail::TrialOutcome> outcomes(cfg.trials);
    parallel_for(cfg.trials, cfg.threads, [&](std::size_t t) {
        using clock = std::chrono::steady_clock;
        const PlantedInstance inst =
            generate_planted(cfg.kind, cfg.n, cfg.s1, cfg.s2, derive_seed(cfg.seed, t, 0), cfg.planted);
        HashFamilySpec family = inst.family;
        family.seed = derive_seed(cfg.seed, t, 2);

        const auto t0 = clock::now();
        const IndexSet set = build(plan, family, inst.dataset, derive_seed(cfg.seed, t, 1));
        const auto t1 = clock::now();

        detail::TrialOutcome& out = outcomes[t];
        const QueryResult single = query(set, inst.query, inst.r2, {.max_repetitions = 1});
        const QueryResult repeated = query(set, inst.query, inst.r2);
        out.single_success = single.found() ? 1.0 : 0.0;
        out.repeated_success = repeated.found() ? 1.0 : 0.0;
        out.far_early = static_cast<double>(single.far_candidates_examined);
        out.distance_computations = static_cast<double>(single.distance_computations);
        out.incorrect += detail::found_is_correct(inst, single) ? 0 : 1;
        out.incorrect += detail::found_is_correct(inst, repeated) ? 0 : 1;

        double far_sum = 0.0;
        for (std::uint32_t r = 0; r < set.repetitions.size(); ++r) {
            const QueryResult full = query(set, inst.query, inst.r2,
                                           {.stop_at_first = false, .first_repetition = r, .max_repetitions = 1});
            out.incorrect += detail::found_is_correct(inst, full) ? 0 : 1;
            far_sum += static_cast<double>(full.far_candidates_examined);
        }
        out.far_exhaustive = far_sum / static_cast<double>(set.repetitions.size());
        const auto t2 = clock::now();
        out.build_seconds = std::chrono::duration<double>(t1 - t0).count();
        out.query_seconds = std::chrono::duration<double>(t2 - t1).count();
    });

    std::vector<double> single, repeated, far_full, far_early, dist;
    for (const auto& o : outcomes) {
        single.push_back(o.single_success);
        repeated.push_back(o.repeated_success);
        far_full.push_back(o.far_exhaustive);
        far_early.push_back(o.far_early);
        dist.push_back(o.distance_computations);
        rep.incorrect_found += o.incorrect;
        rep.build_seconds += o.build_seconds;
        rep.query_seconds += o.query_seconds;
    }
    rep.single_success = estimate(single);
    rep.repeated_success = estimate(repeated);
    rep.far_candidates = estimate(far_full);
    rep.far_candidates_early = estimate(far_early);
    rep.distance_computations = estimate(dist);
    return rep;
}

/// Analytical savings cell plus the table counts of concrete plans.
struct SavingsRow {
    SavingsCell cell;
    bool planned = false;
    std::uint64_t classic_tables = 0;
    std::uint64_t high_low_tables = 0;
    double measured_saving_exp = 0.0; // log_n(classic_tables / high_low_tables)
};

/// Analytical savings surface over the exponent grid; every cell inside the
/// theorem's region also gets concrete classic and high-low plans.
inline std::vector<SavingsRow> run_savings_experiment(std::uint64_t n, const std::vector<double>& p1_exponents,
                                                      const std::vector<double>& p2_exponents) {
    const double log_n = std::log(static_cast<double>(n));
    std::vector<SavingsRow> rows;
    for (const SavingsCell& cell : savings_grid(n, p1_exponents, p2_exponents)) {
        SavingsRow row;
        row.cell = cell;
        if (cell.valid && cell.in_theorem_region) {
            try {
                const SensitivityProfile prof =
                    derive_profile(std::exp(-cell.p1_exp * log_n), std::exp(-cell.p2_exp * log_n), n);
                row.classic_tables = plan_classic(prof).total_tables();
                row.high_low_tables = plan_high_low(prof, {.fallback_to_classic = false}).total_tables();
                row.measured_saving_exp =
                    std::log(static_cast<double>(row.classic_tables) / static_cast<double>(row.high_low_tables)) /
                    log_n;
                row.planned = true;
            } catch (const InvalidParameter&) {
                row.planned = false;
            }
        }
        rows.push_back(row);
    }
    return rows;
}

// ---- report serialization -------------------------------------------------

inline json to_json_value(const Estimate& e) {
    return json{{"mean", e.mean}, {"std_error", e.std_error}, {"ci99_low", e.ci99_low}, {"ci99_high", e.ci99_high}};
}

/// Flat field list shared by the CSV and JSON forms of a BenchReport.
inline std::vector<std::pair<std::string, json>> bench_fields(const BenchReport& r, bool include_timing) {
    std::vector<std::pair<std::string, json>> f = {
        {"family", to_string(r.config.kind)},
        {"mode", to_string(r.plan.mode)},
        {"n", r.config.n},
        {"s1", r.config.s1},
        {"s2", r.config.s2},
        {"realized_s1", r.realized_s1},
        {"realized_s2", r.realized_s2},
        {"trials", r.config.trials},
        {"repetitions", r.plan.repetitions},
        {"seed", r.config.seed},
        {"tables", r.plan.total_tables()},
        {"num_high", r.plan.num_high},
        {"high_len", r.plan.high_len},
        {"num_low", r.plan.num_low},
        {"low_len", r.plan.low_len},
        {"a_real", r.plan.a_real},
        {"b_real", r.plan.b_real},
        {"classic_tables", r.classic_tables},
        {"single_success", r.single_success.mean},
        {"single_success_ci99_low", r.single_success.ci99_low},
        {"single_success_ci99_high", r.single_success.ci99_high},
        {"predicted_single_success", r.predicted_single_success},
        {"repeated_success", r.repeated_success.mean},
        {"repeated_success_ci99_low", r.repeated_success.ci99_low},
        {"repeated_success_ci99_high", r.repeated_success.ci99_high},
        {"predicted_repeated_success", r.predicted_repeated_success},
        {"mean_far_candidates", r.far_candidates.mean},
        {"mean_far_candidates_ci99_low", r.far_candidates.ci99_low},
        {"mean_far_candidates_ci99_high", r.far_candidates.ci99_high},
        {"predicted_far_candidates", r.predicted_far_exact},
        {"far_bound", r.far_bound},
        {"mean_far_candidates_early", r.far_candidates_early.mean},
        {"mean_distance_computations", r.distance_computations.mean},
        {"incorrect_found", r.incorrect_found},
    };
    if (include_timing) {
        f.emplace_back("build_seconds", r.build_seconds);
        f.emplace_back("query_seconds", r.query_seconds);
    }
    return f;
}

namespace detail {

inline std::string csv_cell(const json& v) {
    if (v.is_string()) {
        return v.get<std::string>();
    }
    if (v.is_number_float()) {
        std::ostringstream os;
        os << std::setprecision(12) << v.get<double>();
        return os.str();
    }
    return v.dump();
}

inline void write_csv_rows(std::ostream& out, const std::vector<std::vector<std::pair<std::string, json>>>& rows) {
    if (rows.empty()) {
        return;
    }
    for (std::size_t i = 0; i < rows.front().size(); ++i) {
        out << (i ? "," : "") << rows.front()[i].first;
    }
    out << '\n';
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            out << (i ? "," : "") << csv_cell(row[i].second);
        }
        out << '\n';
    }
}

inline json fields_to_object(const std::vector<std::pair<std::string, json>>& fields) {
    json j = json::object();
    for (const auto& [k, v] : fields) {
        j[k] = v;
    }
    return j;
}

} // namespace detail

inline void write_bench_csv(std::ostream& out, const BenchReport& r, bool include_timing = true) {
    detail::write_csv_rows(out, {bench_fields(r, include_timing)});
}

inline json bench_to_json(const BenchReport& r, bool include_timing = true) {
    return detail::fields_to_object(bench_fields(r, include_timing));
}

inline std::vector<std::pair<std::string, json>> savings_fields(const SavingsRow& r) {
    const SavingsCell& c = r.cell;
    return {
        {"p1_exp", c.p1_exp},
        {"p2_exp", c.p2_exp},
        {"valid", c.valid},
        {"in_theorem_region", c.in_theorem_region},
        {"rho", c.rho},
        {"classic_exp", c.classic_exp},
        {"high_low_exp", c.high_low_exp},
        {"saving_exp", c.saving_exp},
        {"planned", r.planned},
        {"classic_tables", r.classic_tables},
        {"high_low_tables", r.high_low_tables},
        {"measured_saving_exp", r.measured_saving_exp},
    };
}

inline void write_savings_csv(std::ostream& out, const std::vector<SavingsRow>& rows) {
    std::vector<std::vector<std::pair<std::string, json>>> all;
    for (const auto& r : rows) {
        all.push_back(savings_fields(r));
    }
    detail::write_csv_rows(out, all);
}

inline json savings_to_json(const std::vector<SavingsRow>& rows) {
    json arr = json::array();
    for (const auto& r : rows) {
        arr.push_back(detail::fields_to_object(savings_fields(r)));
    }
    return arr;
}

} // namespace hllsh
