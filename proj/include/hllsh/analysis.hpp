#pragma once

#include "hllsh/errors.hpp"
#include "hllsh/planner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace hllsh {

/// Absolute slack applied to every lemma inequality.
inline constexpr double kLemmaSlack = 1e-12;

/// Soft ceiling on p1^(rho-1) / exp(D(rho || x)) reported by the tightness sweep.
inline constexpr double kTightnessSoftLimit = 2.05;

namespace detail {

inline void require_open_unit(double v, const char* name) {
    if (!(v > 0.0 && v < 1.0)) {
        throw std::domain_error(std::string(name) + " must lie in (0, 1)");
    }
}

inline void require_pair(double p1, double p2) {
    require_open_unit(p1, "p1");
    require_open_unit(p2, "p2");
    if (!(p2 < p1)) {
        throw std::domain_error("p2 must be smaller than p1");
    }
}

// log(p1/p2) without cancellation when p1 is close to p2.
inline double log_ratio(double p1, double p2) {
    return std::log1p((p1 - p2) / p2);
}

} // namespace detail

/// Kullback-Leibler divergence between Bernoulli(r) and Bernoulli(x), natural log.
inline double kl_divergence(double r, double x) {
    detail::require_open_unit(r, "r");
    detail::require_open_unit(x, "x");
    return r * std::log(r / x) + (1.0 - r) * std::log((1.0 - r) / (1.0 - x));
}

/// f(alpha) = (a + b) / n^rho for the high/low system at fractional part alpha.
inline double f_alpha(double p1, double p2, double alpha) {
    detail::require_pair(p1, p2);
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw std::domain_error("alpha must lie in [0, 1]");
    }
    const double hi2 = std::pow(p2, alpha - 1.0);
    const double lo2 = std::pow(p2, alpha);
    const double num = hi2 - lo2;
    const double den = (hi2 - 1.0) * std::pow(p1, alpha) + (1.0 - lo2) * std::pow(p1, alpha - 1.0);
    return num / den;
}

/// Closed-form d^2 log f / d alpha^2. Non-positive on the whole domain.
inline double log_f_second_derivative(double p1, double p2, double alpha) {
    detail::require_pair(p1, p2);
    const double l = std::log(1.0 / p2);
    const double d = (1.0 - p1) * p2 + std::pow(p2, alpha) * (p1 - p2);
    return -(1.0 - p1) * (p1 - p2) * std::pow(p2, 1.0 + alpha) * l * l / (d * d);
}

struct AlphaStar {
    double value = 0.0;      // maximizer used, inside [0, 1]
    double unclamped = 0.0;  // stationary point of f before clamping
    bool clamped = false;
};

/// Maximizer of f over [0, 1], from f'(alpha) = 0:
///     p2^alpha = (1-p1) p2 log(p1/p2) / ((p1-p2) log(1/p1)).
inline AlphaStar alpha_star(double p1, double p2) {
    detail::require_pair(p1, p2);
    const double arg = (1.0 - p1) * p2 * detail::log_ratio(p1, p2) / ((p1 - p2) * std::log(1.0 / p1));
    AlphaStar out;
    out.unclamped = std::log(arg) / std::log(p2);
    out.value = std::clamp(out.unclamped, 0.0, 1.0);
    out.clamped = out.value != out.unclamped;
    return out;
}

/// Upper bound of f over alpha:
///     ((p1-p2) log(1/p1) / ((1-p1) log(p1/p2)))^rho * (1-p2) log(p1/p2) / ((p1-p2) log(1/p2)).
inline double f_alpha_max_closed_form(double p1, double p2) {
    detail::require_pair(p1, p2);
    const double rho = std::log(p1) / std::log(p2);
    const double lr = detail::log_ratio(p1, p2);
    const double first = (p1 - p2) * std::log(1.0 / p1) / ((1.0 - p1) * lr);
    const double second = (1.0 - p2) * lr / ((p1 - p2) * std::log(1.0 / p2));
    return std::pow(first, rho) * second;
}

/// x = (1/p1 - 1) / (1/p2 - 1), the second argument of the divergence bound.
inline double divergence_point(double p1, double p2) {
    detail::require_pair(p1, p2);
    return (1.0 - p1) * p2 / ((1.0 - p2) * p1);
}

/// exp(D(rho || x)) with x = divergence_point(p1, p2). 1 - x is formed as
/// (p1 - p2) / ((1 - p2) p1) so nearby p1, p2 keep full precision.
inline double exp_divergence_bound(double p1, double p2) {
    detail::require_pair(p1, p2);
    const double rho = std::log(p1) / std::log(p2);
    const double x = divergence_point(p1, p2);
    const double one_minus_x = (p1 - p2) / ((1.0 - p2) * p1);
    const double one_minus_rho = detail::log_ratio(p1, p2) / std::log(1.0 / p2);
    const double d = rho * std::log(rho / x) + one_minus_rho * std::log(one_minus_rho / one_minus_x);
    return std::exp(d);
}

/// True when log f is concave on a uniform alpha grid (second differences
/// <= 1e-9) and the closed-form second derivative is <= 0 at every node.
inline bool check_log_concavity(double p1, double p2, std::size_t grid_size) {
    detail::require_pair(p1, p2);
    if (grid_size < 3) {
        throw InvalidParameter("grid_size must be at least 3");
    }
    const double h = 1.0 / static_cast<double>(grid_size - 1);
    std::vector<double> log_f(grid_size);
    for (std::size_t i = 0; i < grid_size; ++i) {
        const double al = static_cast<double>(i) * h;
        log_f[i] = std::log(f_alpha(p1, p2, al));
        const double closed = log_f_second_derivative(p1, p2, al);
        if (!(closed <= 0.0)) {
            return false;
        }
    }
    for (std::size_t i = 1; i + 1 < grid_size; ++i) {
        const double second = (log_f[i - 1] - 2.0 * log_f[i] + log_f[i + 1]) / (h * h);
        if (!(second <= 1e-9)) {
            return false;
        }
    }
    return true;
}

/// 1 - (1-p)/r <= p^(1/r) <= p r / (1 - p (1-r)).
inline bool check_p1r_sandwich(double p, double r) {
    detail::require_open_unit(p, "p");
    detail::require_open_unit(r, "r");
    const double lower = 1.0 - (1.0 - p) / r;
    const double mid = std::exp(std::log(p) / r);
    const double upper = p * r / (1.0 - p * (1.0 - r));
    return lower <= mid + kLemmaSlack && mid <= upper + kLemmaSlack;
}

/// The three quantities of the divergence lemma, evaluated in log space.
struct DivergenceLemmaTerms {
    double log_x = 0.0;
    double divergence = 0.0;   // D(r || x)
    double cross_term = 0.0;   // r log(r/x)
    double upper = 0.0;        // (1-r) log(1/p)
};

inline DivergenceLemmaTerms divergence_lemma_terms(double p, double r) {
    detail::require_open_unit(p, "p");
    detail::require_open_unit(r, "r");
    const double log_p = std::log(p);
    // x = (1/p - 1) / (1/p^(1/r) - 1) = ((1-p)/p) p^(1/r) / (1 - p^(1/r))
    const double log_x = std::log1p(-p) - log_p + log_p / r - std::log1p(-std::exp(log_p / r));
    const double log1m_x = std::log1p(-std::exp(log_x));
    DivergenceLemmaTerms t;
    t.log_x = log_x;
    t.cross_term = r * (std::log(r) - log_x);
    t.divergence = t.cross_term + (1.0 - r) * (std::log1p(-r) - log1m_x);
    t.upper = (1.0 - r) * -log_p;
    return t;
}

/// x in (0, r) and D(r || x) <= r log(r/x) <= (1-r) log(1/p).
inline bool check_divergence_lemma(double p, double r) {
    const DivergenceLemmaTerms t = divergence_lemma_terms(p, r);
    const bool x_in_range = std::isfinite(t.log_x) && t.log_x < std::log(r);
    return x_in_range && t.divergence <= t.cross_term + kLemmaSlack && t.cross_term <= t.upper + kLemmaSlack;
}

struct ProfileSample {
    double p1 = 0.0;
    double p2 = 0.0;
    std::uint64_t n = 0;
};

/// Draws (p1, p2, n) with 1/n < p2 < p1 < 1/2. n is log-uniform in
/// [10, 10^12]; -log p2 and -log p1 are uniform on the admissible ranges.
template <typename Rng>
ProfileSample sample_theorem_profile(Rng& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (;;) {
        const double log10_n = 1.0 + 11.0 * unit(rng);
        const auto n = static_cast<std::uint64_t>(std::llround(std::pow(10.0, log10_n)));
        const double log_n = std::log(static_cast<double>(n));
        const double lo = std::log(2.0);
        const double u2 = lo + (log_n - lo) * unit(rng);
        const double u1 = lo + (u2 - lo) * unit(rng);
        const ProfileSample s{std::exp(-u1), std::exp(-u2), n};
        if (s.p1 / s.p2 < 1.0 + 1e-6 || s.p1 >= 0.5 || s.p2 * static_cast<double>(n) <= 1.0 + 1e-9) {
            continue;
        }
        return s;
    }
}

/// Draws 0 < p2 < p1 < 1 with p1 in (e^-20, 0.999) and p1/p2 in (1.0001, e^20).
template <typename Rng>
std::pair<double, double> sample_probability_pair(Rng& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double lo = -std::log(0.999);
    const double p1 = std::exp(-(lo + (20.0 - lo) * unit(rng)));
    const double gap = std::log(1.0001) + (20.0 - std::log(1.0001)) * unit(rng);
    return {p1, p1 * std::exp(-gap)};
}

/// Maximizes f over [0, 1] with a 1001-point grid followed by golden-section
/// refinement around the best node.
inline double numeric_f_max(double p1, double p2) {
    constexpr int grid = 1000;
    int best = 0;
    double best_val = f_alpha(p1, p2, 0.0);
    for (int i = 1; i <= grid; ++i) {
        const double v = f_alpha(p1, p2, static_cast<double>(i) / grid);
        if (v > best_val) {
            best_val = v;
            best = i;
        }
    }
    double lo = std::max(0.0, (best - 1.0) / grid);
    double hi = std::min(1.0, (best + 1.0) / grid);
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = hi - inv_phi * (hi - lo);
    double d = lo + inv_phi * (hi - lo);
    double fc = f_alpha(p1, p2, c);
    double fd = f_alpha(p1, p2, d);
    while (hi - lo > 1e-12) {
        if (fc > fd) {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f_alpha(p1, p2, c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f_alpha(p1, p2, d);
        }
    }
    return std::max({best_val, fc, fd});
}

struct TightnessRow {
    double p1 = 0.0;
    double p2 = 0.0;
    std::uint64_t n = 0;
    double rho = 0.0;
    double kappa = 0.0;
    double alpha = 0.0;
    double f_alpha = 0.0;       // (a+b)/n^rho at this profile's alpha
    double f_alpha_star = 0.0;  // worst case over alpha
    double exp_divergence = 0.0;
    double bound = 0.0;         // p1^(rho-1)
    double ratio = 0.0;         // bound / exp_divergence
    double weak_log_bound = std::numeric_limits<double>::quiet_NaN(); // rho log(p1 rho / (p1+rho-1)), if defined
};

struct TightnessReport {
    std::vector<TightnessRow> rows;
    double max_ratio = 0.0;
    double min_ratio = std::numeric_limits<double>::infinity();
    std::size_t hard_violations = 0;  // rows with exp(D) > p1^(rho-1)
    bool exceeds_soft_limit = false;  // informational
};

/// Measures how much slack the last step of the table-count bound leaves.
inline TightnessReport tightness_report(const std::vector<ProfileSample>& samples) {
    TightnessReport rep;
    rep.rows.reserve(samples.size());
    for (const ProfileSample& s : samples) {
        const SensitivityProfile prof = derive_profile(s.p1, s.p2, s.n);
        TightnessRow row;
        row.p1 = s.p1;
        row.p2 = s.p2;
        row.n = s.n;
        row.rho = prof.rho;
        row.kappa = prof.kappa;
        row.alpha = prof.alpha;
        row.f_alpha = f_alpha(s.p1, s.p2, prof.alpha);
        row.f_alpha_star = f_alpha(s.p1, s.p2, alpha_star(s.p1, s.p2).value);
        row.exp_divergence = exp_divergence_bound(s.p1, s.p2);
        row.bound = std::pow(s.p1, prof.rho - 1.0);
        row.ratio = row.bound / row.exp_divergence;
        if (s.p1 + prof.rho > 1.0) {
            row.weak_log_bound = prof.rho * std::log(s.p1 * prof.rho / (s.p1 + prof.rho - 1.0));
        }
        if (row.ratio < 1.0 - kLemmaSlack) {
            ++rep.hard_violations;
        }
        rep.max_ratio = std::max(rep.max_ratio, row.ratio);
        rep.min_ratio = std::min(rep.min_ratio, row.ratio);
        rep.rows.push_back(row);
    }
    rep.exceeds_soft_limit = rep.max_ratio > kTightnessSoftLimit;
    return rep;
}

struct Violation {
    std::string check;
    double p1 = 0.0;
    double p2 = 0.0;
    double alpha = 0.0;
    std::uint64_t n = 0;
    std::string detail;
};

struct SuiteResult {
    std::string name;
    std::size_t checks = 0;
    std::vector<Violation> violations;
};

struct VerificationReport {
    std::vector<SuiteResult> suites;
    TightnessReport tightness;

    std::size_t total_violations() const {
        std::size_t v = tightness.hard_violations;
        for (const auto& s : suites) {
            v += s.violations.size();
        }
        return v;
    }
    bool ok() const { return total_violations() == 0; }
};

namespace detail {

inline bool rel_close(double got, double want, double tol) {
    return std::abs(got - want) <= tol * std::max(std::abs(want), std::numeric_limits<double>::min());
}

inline std::string fmt_pair(const char* a, double x, const char* b, double y) {
    std::ostringstream os;
    os.precision(17);
    os << a << "=" << x << " " << b << "=" << y;
    return os.str();
}

} // namespace detail

/// Theorem-level checks on one planner profile. Appends violations to `out`.
inline void check_theorem_profile(const ProfileSample& s, SuiteResult& out) {
    const SensitivityProfile prof = derive_profile(s.p1, s.p2, s.n);
    auto fail = [&](const char* check, std::string detail) {
        out.violations.push_back({check, s.p1, s.p2, prof.alpha, s.n, std::move(detail)});
    };
    ++out.checks;

    const HighLowSolution sol = solve_high_low(prof);
    if (!(sol.a >= 0.0 && sol.b >= 0.0)) {
        fail("non_negative", detail::fmt_pair("a", sol.a, "b", sol.b));
    }
    const ConstraintResiduals res = constraint_residuals(prof, sol);
    if (!(res.far_balance <= kConstraintTolerance && res.near_mass <= kConstraintTolerance)) {
        fail("constraints", detail::fmt_pair("far_balance", res.far_balance, "near_mass", res.near_mass));
    }
    const double bound = high_low_bound(prof);
    if (!(sol.a + sol.b <= bound * (1.0 + kConstraintTolerance))) {
        fail("table_bound", detail::fmt_pair("a+b", sol.a + sol.b, "bound", bound));
    }
    const double f_cross = f_alpha(s.p1, s.p2, prof.alpha) * prof.n_pow_rho();
    if (!detail::rel_close(f_cross, sol.a + sol.b, kConstraintTolerance)) {
        fail("f_alpha_identity", detail::fmt_pair("f*n^rho", f_cross, "a+b", sol.a + sol.b));
    }

    // Rounded counts stay in floating point: profiles near n = 1e12 need more
    // tables than a 64-bit counter holds.
    const double num_high = detail::snapped_floor(sol.a);
    const double num_low = detail::snapped_ceil(sol.b);
    const auto high_len = static_cast<double>(prof.floor_kappa());
    const auto low_len = static_cast<double>(prof.ceil_kappa());
    const double log_miss = num_high * std::log1p(-std::pow(s.p1, high_len)) +
                            num_low * std::log1p(-std::pow(s.p1, low_len));
    const double failure = std::exp(log_miss);
    if (!(failure <= 2.0 / std::exp(1.0))) {
        fail("failure_bound", detail::fmt_pair("failure", failure, "limit", 2.0 / std::exp(1.0)));
    }
    const double far = static_cast<double>(s.n) *
                       (num_high * std::pow(s.p2, high_len) + num_low * std::pow(s.p2, low_len));
    const double tables = num_high + num_low;
    if (!(far <= tables + 1.0 + 1e-9 * tables)) {
        fail("far_candidates", detail::fmt_pair("far", far, "tables", tables));
    }

    const double classic_tables = detail::snapped_ceil(std::pow(s.p1, -low_len));
    if (!(classic_tables <= classic_bound(prof) * (1.0 + kConstraintTolerance) + 1.0)) {
        fail("classic_bound", detail::fmt_pair("L", classic_tables, "bound", classic_bound(prof)));
    }
}

/// Checks of the alpha maximizer and log-concavity for one (p1, p2) pair.
inline void check_alpha_pair(double p1, double p2, SuiteResult& concavity, SuiteResult& maximizer) {
    auto fail = [&](SuiteResult& suite, const char* check, double alpha, std::string detail) {
        suite.violations.push_back({check, p1, p2, alpha, 0, std::move(detail)});
    };

    ++concavity.checks;
    if (!check_log_concavity(p1, p2, 101)) {
        fail(concavity, "log_concavity", 0.0, "second difference or closed form positive");
    }

    ++maximizer.checks;
    const AlphaStar star = alpha_star(p1, p2);
    const double f_star = f_alpha(p1, p2, star.value);
    if (star.clamped) {
        fail(maximizer, "alpha_star_clamped", star.unclamped, "stationary point outside [0, 1]");
    }
    const double f_num = numeric_f_max(p1, p2);
    if (!detail::rel_close(f_star, f_num, 1e-6)) {
        fail(maximizer, "alpha_star_numeric", star.value, detail::fmt_pair("f*", f_star, "numeric", f_num));
    }
    const double closed = f_alpha_max_closed_form(p1, p2);
    if (!detail::rel_close(f_star, closed, 1e-9)) {
        fail(maximizer, "alpha_star_closed_form", star.value, detail::fmt_pair("f*", f_star, "closed", closed));
    }
    const double div = exp_divergence_bound(p1, p2);
    if (!detail::rel_close(f_star, div, 1e-9)) {
        fail(maximizer, "alpha_star_divergence", star.value, detail::fmt_pair("f*", f_star, "expD", div));
    }
    for (int i = 0; i <= 100; ++i) {
        const double al = i / 100.0;
        const double v = f_alpha(p1, p2, al);
        if (v > f_star * (1.0 + 1e-12)) {
            fail(maximizer, "alpha_star_dominates", al, detail::fmt_pair("f", v, "f*", f_star));
            break;
        }
    }
}

/// Runs every randomized bound and lemma check. `samples` drives the
/// profile-level and lemma suites; the alpha suites use samples/10 pairs.
inline VerificationReport run_verification(std::size_t samples, std::uint64_t seed) {
    if (samples < 100) {
        throw InvalidParameter("at least 100 samples are required");
    }
    VerificationReport rep;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> open_unit(std::nextafter(0.0, 1.0), 1.0);

    SuiteResult theorem{"theorem_bound", 0, {}};
    std::vector<ProfileSample> profiles;
    profiles.reserve(samples);
    for (std::size_t i = 0; i < samples; ++i) {
        profiles.push_back(sample_theorem_profile(rng));
        check_theorem_profile(profiles.back(), theorem);
    }

    SuiteResult sandwich{"p1r_sandwich", 0, {}};
    SuiteResult divergence{"divergence_lemma", 0, {}};
    for (std::size_t i = 0; i < samples; ++i) {
        const double p = open_unit(rng);
        const double r = open_unit(rng);
        ++sandwich.checks;
        if (!check_p1r_sandwich(p, r)) {
            sandwich.violations.push_back({"p1r_sandwich", p, r, 0.0, 0, detail::fmt_pair("p", p, "r", r)});
        }
        const double p2 = open_unit(rng);
        const double r2 = open_unit(rng);
        ++divergence.checks;
        if (!check_divergence_lemma(p2, r2)) {
            divergence.violations.push_back(
                {"divergence_lemma", p2, r2, 0.0, 0, detail::fmt_pair("p", p2, "r", r2)});
        }
    }

    SuiteResult concavity{"log_concavity", 0, {}};
    SuiteResult maximizer{"alpha_star", 0, {}};
    const std::size_t pairs = std::max<std::size_t>(samples / 10, 10);
    for (std::size_t i = 0; i < pairs; ++i) {
        const auto [p1, p2] = sample_probability_pair(rng);
        check_alpha_pair(p1, p2, concavity, maximizer);
    }

    rep.suites = {std::move(theorem), std::move(sandwich), std::move(divergence), std::move(concavity),
                  std::move(maximizer)};
    rep.tightness = tightness_report(profiles);
    return rep;
}

} // namespace hllsh
