#pragma once

#include "hllsh/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace hllsh {

/// Relative tolerance used when re-verifying the planner's linear constraints.
inline constexpr double kConstraintTolerance = 1e-9;

/// κ values this close to an integer are treated as that integer.
inline constexpr double kKappaSnap = 1e-12;

/// Table-count reals this close (relatively) to an integer round to it.
inline constexpr double kCountSnap = 1e-9;

inline constexpr int kDefaultRepetitions = 16;

/// An (r1, r2, p1, p2)-sensitive family applied to at most n points, with the
/// exponents that drive the table layout.
struct SensitivityProfile {
    double r1 = 0.0;
    double r2 = 0.0;
    double p1 = 0.0;
    double p2 = 0.0;
    std::uint64_t n = 0;

    double rho = 0.0;   // log(1/p1) / log(1/p2)
    double kappa = 0.0; // log(n) / log(1/p2), so p2^kappa = 1/n
    double alpha = 0.0; // ceil(kappa) - kappa, in [0, 1)

    std::uint32_t floor_kappa() const { return static_cast<std::uint32_t>(std::floor(kappa)); }
    std::uint32_t ceil_kappa() const { return static_cast<std::uint32_t>(std::ceil(kappa)); }

    /// n^rho, the table count of an ideal (non-integer) amplification.
    double n_pow_rho() const { return std::exp(rho * std::log(static_cast<double>(n))); }
};

enum class PlanMode { Classic, HighLow };

inline std::string to_string(PlanMode m) {
    return m == PlanMode::Classic ? "classic" : "high_low";
}

/// A table layout. High tables (concatenation length high_len) are listed
/// before low tables (low_len); the index probes them in that order.
struct TablePlan {
    PlanMode mode = PlanMode::Classic;
    std::uint64_t n = 0;
    double p1 = 0.0;
    double p2 = 0.0;
    double rho = 0.0;
    double kappa = 0.0;
    double alpha = 0.0;

    std::uint32_t low_len = 0;
    std::uint32_t high_len = 0;
    std::uint64_t num_low = 0;
    std::uint64_t num_high = 0;
    double a_real = 0.0;
    double b_real = 0.0;
    int repetitions = kDefaultRepetitions;
    double predicted_far_candidates = 0.0;
    double predicted_single_success = 0.0;

    std::uint64_t total_tables() const { return num_high + num_low; }

    /// Hash evaluations plus expected far-point distance checks for one query
    /// on one structure, i.e. sum of L*k plus n*L*p2^k over the table groups.
    double predicted_cost() const {
        return static_cast<double>(num_high) * high_len + static_cast<double>(num_low) * low_len +
               predicted_far_candidates;
    }

    /// Concatenation length of table `t` in probe order.
    std::uint32_t concat_len(std::uint64_t t) const { return t < num_high ? high_len : low_len; }

    /// Success probability of `repetitions` independent copies.
    double predicted_repeated_success() const {
        return 1.0 - std::pow(1.0 - predicted_single_success, repetitions);
    }
};

namespace detail {

inline double snapped_ceil(double x) {
    double r = std::round(x);
    if (std::abs(x - r) <= kCountSnap * std::max(1.0, std::abs(x))) {
        return r;
    }
    return std::ceil(x);
}

inline double snapped_floor(double x) {
    double r = std::round(x);
    if (std::abs(x - r) <= kCountSnap * std::max(1.0, std::abs(x))) {
        return r;
    }
    return std::floor(x);
}

inline std::uint64_t to_count(double x) {
    if (!(x >= 0.0) || x >= 0x1p64) {
        throw InvalidParameter("table count " + std::to_string(x) + " does not fit a 64-bit counter");
    }
    return static_cast<std::uint64_t>(x);
}

// Probability that a pair at single-hash probability p misses every table.
inline double miss_probability(double p, std::uint32_t len, std::uint64_t tables) {
    if (tables == 0) {
        return 1.0;
    }
    double hit = std::pow(p, static_cast<double>(len));
    return std::exp(static_cast<double>(tables) * std::log1p(-hit));
}

} // namespace detail

/// Validates (p1, p2, n) and computes rho, kappa and alpha.
///
/// Throws InvalidParameter unless 0 < p2 < p1 < 1, n >= 2 and r1 <= r2, and
/// AssumptionViolated when p2 <= 1/n.
inline SensitivityProfile derive_profile(double r1, double r2, double p1, double p2, std::uint64_t n) {
    if (!(p1 > 0.0 && p1 < 1.0) || !(p2 > 0.0 && p2 < 1.0)) {
        throw InvalidParameter("p1 and p2 must lie in (0, 1)");
    }
    if (!(p2 < p1)) {
        throw InvalidParameter("p1 <= p2: the family does not separate near from far points");
    }
    if (n < 2) {
        throw InvalidParameter("n must be at least 2");
    }
    if (r1 > r2) {
        throw InvalidParameter("r1 must not exceed r2");
    }
    const double log_n = std::log(static_cast<double>(n));
    if (!(p2 > 1.0 / static_cast<double>(n)) || !(std::log(1.0 / p2) < log_n)) {
        throw AssumptionViolated("p2 <= 1/n: LSH assumption violated; use a brute-force scan");
    }

    SensitivityProfile prof;
    prof.r1 = r1;
    prof.r2 = r2;
    prof.p1 = p1;
    prof.p2 = p2;
    prof.n = n;
    prof.rho = std::log(p1) / std::log(p2);
    double kappa = log_n / -std::log(p2);
    double nearest = std::round(kappa);
    if (std::abs(kappa - nearest) <= kKappaSnap) {
        kappa = nearest;
    }
    prof.kappa = kappa;
    prof.alpha = std::ceil(kappa) - kappa;
    return prof;
}

inline SensitivityProfile derive_profile(double p1, double p2, std::uint64_t n) {
    return derive_profile(0.0, 0.0, p1, p2, n);
}

/// Classical Indyk-Motwani layout: L = ceil(p1^-k) tables of length k = ceil(kappa).
inline TablePlan plan_classic(const SensitivityProfile& prof) {
    TablePlan plan;
    plan.mode = PlanMode::Classic;
    plan.n = prof.n;
    plan.p1 = prof.p1;
    plan.p2 = prof.p2;
    plan.rho = prof.rho;
    plan.kappa = prof.kappa;
    plan.alpha = prof.alpha;
    plan.low_len = prof.ceil_kappa();
    plan.high_len = 0;
    plan.num_high = 0;
    plan.num_low = detail::to_count(
        detail::snapped_ceil(std::pow(prof.p1, -static_cast<double>(plan.low_len))));
    plan.a_real = 0.0;
    plan.b_real = static_cast<double>(plan.num_low);
    plan.predicted_far_candidates = static_cast<double>(prof.n) * static_cast<double>(plan.num_low) *
                                    std::pow(prof.p2, static_cast<double>(plan.low_len));
    plan.predicted_single_success = 1.0 - detail::miss_probability(prof.p1, plan.low_len, plan.num_low);
    return plan;
}

/// Real-valued counts of high (a) and low (b) tables.
struct HighLowSolution {
    double a = 0.0;
    double b = 0.0;
};

/// Solves
///     a p2^(alpha-1) + b p2^alpha = a + b
///     a p1^(alpha-1) + b p1^alpha = n^rho
/// through its closed form. Both components are non-negative on alpha in [0, 1].
inline HighLowSolution solve_high_low(const SensitivityProfile& prof) {
    const double p1 = prof.p1;
    const double p2 = prof.p2;
    const double al = prof.alpha;
    const double high_far = std::pow(p2, al - 1.0); // >= 1
    const double low_far = std::pow(p2, al);        // <= 1
    const double denom = (high_far - 1.0) * std::pow(p1, al) + (1.0 - low_far) * std::pow(p1, al - 1.0);
    if (!(denom > 0.0)) {
        throw InternalError("high/low system has a non-positive determinant");
    }
    const double scale = prof.n_pow_rho() / denom;
    return {scale * (1.0 - low_far), scale * (high_far - 1.0)};
}

/// Relative residuals of the two defining constraints for a candidate solution.
struct ConstraintResiduals {
    double far_balance = 0.0; // |a p2^(α-1) + b p2^α - (a+b)| / (a+b)
    double near_mass = 0.0;   // |a p1^(α-1) + b p1^α - n^ρ| / n^ρ
};

inline ConstraintResiduals constraint_residuals(const SensitivityProfile& prof, const HighLowSolution& s) {
    const double al = prof.alpha;
    const double far = s.a * std::pow(prof.p2, al - 1.0) + s.b * std::pow(prof.p2, al);
    const double near = s.a * std::pow(prof.p1, al - 1.0) + s.b * std::pow(prof.p1, al);
    const double total = s.a + s.b;
    const double target = prof.n_pow_rho();
    return {std::abs(far - total) / total, std::abs(near - target) / target};
}

/// n^rho p1^(rho-1), the table-count bound of the High-Low construction.
inline double high_low_bound(const SensitivityProfile& prof) {
    return prof.n_pow_rho() * std::pow(prof.p1, prof.rho - 1.0);
}

/// n^rho / p1, the classical table-count bound.
inline double classic_bound(const SensitivityProfile& prof) {
    return prof.n_pow_rho() / prof.p1;
}

struct HighLowOptions {
    /// With p1 >= 1/2 the constant-success argument no longer applies; pick
    /// whichever of classic and high-low has the smaller predicted cost.
    bool fallback_to_classic = true;
    int repetitions = kDefaultRepetitions;
};

/// floor(a) tables of length floor(kappa) followed by ceil(b) tables of
/// length ceil(kappa).
inline TablePlan plan_high_low(const SensitivityProfile& prof, const HighLowOptions& opts = {}) {
    const HighLowSolution sol = solve_high_low(prof);

    TablePlan plan;
    plan.mode = PlanMode::HighLow;
    plan.n = prof.n;
    plan.p1 = prof.p1;
    plan.p2 = prof.p2;
    plan.rho = prof.rho;
    plan.kappa = prof.kappa;
    plan.alpha = prof.alpha;
    plan.high_len = prof.floor_kappa();
    plan.low_len = prof.ceil_kappa();
    plan.a_real = sol.a;
    plan.b_real = sol.b;
    plan.num_high = detail::to_count(detail::snapped_floor(sol.a));
    plan.num_low = detail::to_count(detail::snapped_ceil(sol.b));
    plan.repetitions = opts.repetitions;

    const double n = static_cast<double>(prof.n);
    plan.predicted_far_candidates =
        n * (static_cast<double>(plan.num_high) * std::pow(prof.p2, static_cast<double>(plan.high_len)) +
             static_cast<double>(plan.num_low) * std::pow(prof.p2, static_cast<double>(plan.low_len)));
    plan.predicted_single_success =
        1.0 - detail::miss_probability(prof.p1, plan.high_len, plan.num_high) *
                  detail::miss_probability(prof.p1, plan.low_len, plan.num_low);

    if (opts.fallback_to_classic && prof.p1 >= 0.5) {
        TablePlan classic = plan_classic(prof);
        classic.repetitions = opts.repetitions;
        if (classic.predicted_cost() < plan.predicted_cost()) {
            return classic;
        }
    }
    return plan;
}

inline TablePlan make_plan(const SensitivityProfile& prof, PlanMode mode, int repetitions = kDefaultRepetitions) {
    if (mode == PlanMode::Classic) {
        TablePlan p = plan_classic(prof);
        p.repetitions = repetitions;
        return p;
    }
    return plan_high_low(prof, {.fallback_to_classic = true, .repetitions = repetitions});
}

/// Repetitions needed to push the failure probability below delta, given a
/// per-structure failure of at most 2/e.
inline int repetitions_for_failure(double delta) {
    if (!(delta > 0.0 && delta < 1.0)) {
        throw InvalidParameter("target failure probability must lie in (0, 1)");
    }
    return static_cast<int>(std::ceil(std::log(delta) / std::log(2.0 / std::exp(1.0))));
}

/// One cell of the savings surface with p1 = n^-p1_exp and p2 = n^-p2_exp.
/// Exponents are powers of n.
struct SavingsCell {
    double p1_exp = 0.0;
    double p2_exp = 0.0;
    bool valid = false;
    bool in_theorem_region = false; // 1/n < p2 < p1 < 1/2
    double rho = 0.0;
    double classic_exp = 0.0;   // log_n(n^rho / p1)
    double high_low_exp = 0.0;  // log_n(n^rho p1^(rho-1))
    double saving_exp = 0.0;    // log_n(p1^-rho)
};

/// Analytical savings of High-Low over classical LSH across a grid of
/// exponents. Cells with p2 >= p1 are marked invalid.
inline std::vector<SavingsCell> savings_grid(std::uint64_t n, const std::vector<double>& p1_exponents,
                                             const std::vector<double>& p2_exponents) {
    if (n < 2) {
        throw InvalidParameter("n must be at least 2");
    }
    const double log_n = std::log(static_cast<double>(n));
    std::vector<SavingsCell> out;
    out.reserve(p1_exponents.size() * p2_exponents.size());
    for (double e1 : p1_exponents) {
        for (double e2 : p2_exponents) {
            SavingsCell c;
            c.p1_exp = e1;
            c.p2_exp = e2;
            c.valid = e1 >= 0.0 && e2 > e1;
            if (c.valid) {
                c.rho = e1 / e2;
                c.classic_exp = c.rho + e1;
                c.high_low_exp = c.rho + e1 * (1.0 - c.rho);
                c.saving_exp = e1 * c.rho;
                const double p1 = std::exp(-e1 * log_n);
                c.in_theorem_region = e2 < 1.0 && p1 < 0.5;
            }
            out.push_back(c);
        }
    }
    return out;
}

} // namespace hllsh
