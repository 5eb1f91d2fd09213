#include "hllsh/io.hpp"
#include "hllsh/planner.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

using namespace hllsh;

namespace {

// Frozen with 30-digit mpmath evaluation of the defining formulas.
constexpr double kRho_01_002 = 0.588591910067778954;
constexpr double kKappa_01_002 = 3.53155146040667372;
constexpr double kAlpha_01_002 = 0.468448539593326276;
constexpr double kA_01_002 = 545.454545454545454545;   // 6000/11
constexpr double kB_01_002 = 4545.45454545454545454;   // 50000/11

std::map<std::uint32_t, std::uint64_t> layout(const TablePlan& p) {
    std::map<std::uint32_t, std::uint64_t> m;
    if (p.num_high > 0) {
        m[p.high_len] += p.num_high;
    }
    if (p.num_low > 0) {
        m[p.low_len] += p.num_low;
    }
    return m;
}

} // namespace

TEST(DeriveProfile, IntegerKappa) {
    const auto prof = derive_profile(0.1, 0.01, 1'000'000);
    EXPECT_DOUBLE_EQ(prof.rho, 0.5);
    EXPECT_EQ(prof.kappa, 3.0);
    EXPECT_EQ(prof.alpha, 0.0);
}

TEST(DeriveProfile, MinHashExampleRho) {
    for (std::uint64_t n : {std::uint64_t{1} << 20, std::uint64_t{1'000'000'000}, std::uint64_t{12345}}) {
        const double dn = static_cast<double>(n);
        const auto prof = derive_profile(std::pow(dn, -0.25), std::pow(dn, -0.3), n);
        EXPECT_NEAR(prof.rho, 5.0 / 6.0, 1e-12) << n;
    }
}

TEST(DeriveProfile, FractionalKappa) {
    const auto prof = derive_profile(0.1, 0.02, 1'000'000);
    EXPECT_NEAR(prof.rho, kRho_01_002, 1e-14);
    EXPECT_NEAR(prof.kappa, kKappa_01_002, 1e-13);
    EXPECT_NEAR(prof.alpha, kAlpha_01_002, 1e-13);
}

TEST(DeriveProfile, Identities) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        const auto n = static_cast<std::uint64_t>(std::pow(10.0, 1.0 + 8.0 * u(rng)));
        const double p2 = std::exp(-std::log(2.0) - (std::log(n) - std::log(2.0)) * u(rng)) * (1 + 1e-9);
        const double p1 = p2 + (1.0 - p2) * u(rng) * 0.999 + 1e-12;
        if (!(p2 > 1.0 / n) || !(p1 < 1.0) || !(p2 < p1)) {
            continue;
        }
        const auto prof = derive_profile(p1, p2, n);
        EXPECT_GT(prof.rho, 0.0);
        EXPECT_LT(prof.rho, 1.0);
        EXPECT_GE(prof.alpha, 0.0);
        EXPECT_LT(prof.alpha, 1.0);
        EXPECT_NEAR(std::pow(p2, prof.kappa) * n, 1.0, 1e-9);
        EXPECT_NEAR(std::pow(p1, prof.kappa) / std::pow(static_cast<double>(n), -prof.rho), 1.0, 1e-9);
    }
}

TEST(DeriveProfile, RejectsBadInput) {
    EXPECT_THROW(derive_profile(0.02, 0.1, 1000), InvalidParameter);
    EXPECT_THROW(derive_profile(0.1, 0.1, 1000), InvalidParameter);
    EXPECT_THROW(derive_profile(1.0, 0.1, 1000), InvalidParameter);
    EXPECT_THROW(derive_profile(0.5, 0.0, 1000), InvalidParameter);
    EXPECT_THROW(derive_profile(0.5, 0.1, 1), InvalidParameter);
    EXPECT_THROW(derive_profile(2.0, 1.0, 0.5, 0.1, 1000), InvalidParameter);
}

TEST(DeriveProfile, SmallP2IsDistinctError) {
    EXPECT_THROW(derive_profile(0.5, 1e-4, 1000), AssumptionViolated);
    EXPECT_THROW(derive_profile(0.5, 1e-3, 1000), AssumptionViolated);
    try {
        derive_profile(0.5, 1e-4, 1000);
    } catch (const AssumptionViolated& e) {
        EXPECT_NE(std::string(e.what()).find("p2 <= 1/n"), std::string::npos);
    }
    EXPECT_NO_THROW(derive_profile(0.5, 1.01e-3, 1000));
}

TEST(PlanClassic, IntegerKappa) {
    const auto plan = plan_classic(derive_profile(0.1, 0.01, 1'000'000));
    EXPECT_EQ(plan.mode, PlanMode::Classic);
    EXPECT_EQ(plan.low_len, 3u);
    EXPECT_EQ(plan.num_low, 1000u);
    EXPECT_EQ(plan.num_high, 0u);
    EXPECT_NEAR(plan.predicted_far_candidates, 1e6 * 1000 * 1e-6, 1e-6);
}

TEST(PlanClassic, FractionalKappa) {
    const auto plan = plan_classic(derive_profile(0.1, 0.02, 1'000'000));
    EXPECT_EQ(plan.low_len, 4u);
    EXPECT_EQ(plan.num_low, 10000u);
}

TEST(PlanClassic, MinHashExampleUsesNTables) {
    const std::uint64_t n = std::uint64_t{1} << 20;
    const double dn = static_cast<double>(n);
    const auto plan = plan_classic(derive_profile(std::pow(dn, -0.25), std::pow(dn, -0.3), n));
    EXPECT_EQ(plan.low_len, 4u);
    EXPECT_EQ(plan.num_low, n);
}

TEST(SolveHighLow, MatchesFrozenOracle) {
    const auto prof = derive_profile(0.1, 0.02, 1'000'000);
    const auto sol = solve_high_low(prof);
    EXPECT_NEAR(sol.a / kA_01_002, 1.0, 1e-12);
    EXPECT_NEAR(sol.b / kB_01_002, 1.0, 1e-12);
    const auto res = constraint_residuals(prof, sol);
    EXPECT_LE(res.far_balance, kConstraintTolerance);
    EXPECT_LE(res.near_mass, kConstraintTolerance);
}

TEST(SolveHighLow, MatchesGeneralLinearSolve) {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 2000; ++i) {
        const auto s = [&] {
            std::uniform_real_distribution<double> u(0.0, 1.0);
            const double n = std::pow(10.0, 2.0 + 7.0 * u(rng));
            const double e2 = 0.05 + 0.9 * u(rng);
            const double e1 = e2 * (0.05 + 0.9 * u(rng));
            return std::array<double, 3>{std::pow(n, -e1), std::pow(n, -e2), std::round(n)};
        }();
        const auto n = static_cast<std::uint64_t>(s[2]);
        if (!(s[1] > 1.0 / s[2]) || !(s[0] < 1.0) || !(s[1] < s[0])) {
            continue;
        }
        const auto prof = derive_profile(s[0], s[1], n);
        if (prof.alpha < 1e-6) {
            continue; // the general solver is ill-conditioned near alpha = 0
        }
        const auto sol = solve_high_low(prof);
        const auto ref = oracle::high_low_counts(s[0], s[1], static_cast<double>(n));
        EXPECT_NEAR(sol.a, ref[0], 1e-7 * (ref[0] + ref[1]));
        EXPECT_NEAR(sol.b, ref[1], 1e-7 * (ref[0] + ref[1]));
    }
}

TEST(SolveHighLow, AlphaZeroGivesOnlyLowTables) {
    const auto prof = derive_profile(0.1, 0.01, 1'000'000);
    const auto sol = solve_high_low(prof);
    EXPECT_EQ(sol.a, 0.0);
    EXPECT_NEAR(sol.b, 1000.0, 1e-9);
}

TEST(SolveHighLow, AlphaNearOneGivesOnlyHighTables) {
    // kappa just above 3 gives alpha just below 1.
    const double p2 = 0.01 * (1.0 + 1e-7);
    const auto prof = derive_profile(0.1, p2, 1'000'000);
    ASSERT_GT(prof.alpha, 0.999999);
    const auto sol = solve_high_low(prof);
    EXPECT_LT(sol.b / (sol.a + sol.b), 1e-5);
    EXPECT_NEAR(sol.a / prof.n_pow_rho(), 1.0, 1e-4);
}

TEST(PlanHighLow, FractionalKappaLayout) {
    const auto prof = derive_profile(0.1, 0.02, 1'000'000);
    const auto hl = plan_high_low(prof);
    EXPECT_EQ(hl.mode, PlanMode::HighLow);
    EXPECT_EQ(hl.high_len, 3u);
    EXPECT_EQ(hl.low_len, 4u);
    EXPECT_EQ(hl.num_high, 545u);
    EXPECT_EQ(hl.num_low, 4546u);
    EXPECT_EQ(hl.total_tables(), 5091u);
    EXPECT_EQ(hl.repetitions, 16);
    EXPECT_LT(hl.total_tables(), plan_classic(prof).total_tables());
    EXPECT_LE(hl.predicted_far_candidates, hl.a_real + hl.b_real + 1.0);
    EXPECT_GE(hl.predicted_single_success, 1.0 - 2.0 / std::exp(1.0));
}

TEST(PlanHighLow, MinHashExampleStaysBelowSevenEighths) {
    for (int log_n : {16, 20, 24, 30}) {
        const std::uint64_t n = std::uint64_t{1} << log_n;
        const double dn = static_cast<double>(n);
        const auto hl = plan_high_low(derive_profile(std::pow(dn, -0.25), std::pow(dn, -0.3), n));
        EXPECT_LE(static_cast<double>(hl.total_tables()), std::pow(dn, 7.0 / 8.0) + 2.0) << log_n;
    }
}

TEST(PlanHighLow, AlphaZeroDegeneratesToClassic) {
    const auto prof = derive_profile(0.1, 0.01, 1'000'000);
    const auto hl = plan_high_low(prof);
    const auto cl = plan_classic(prof);
    EXPECT_EQ(hl.num_high, 0u);
    EXPECT_EQ(layout(hl), layout(cl));
}

TEST(PlanHighLow, FallbackPicksCheaperForLargeP1) {
    const auto prof = derive_profile(0.8, 0.3, 1000);
    const auto forced = plan_high_low(prof, {.fallback_to_classic = false});
    const auto classic = plan_classic(prof);
    const auto picked = plan_high_low(prof);
    EXPECT_EQ(forced.mode, PlanMode::HighLow);
    EXPECT_LE(picked.predicted_cost(), std::min(forced.predicted_cost(), classic.predicted_cost()) + 1e-9);
    EXPECT_EQ(picked.repetitions, 16);
}

TEST(PlanHighLow, SmallP1NeverFallsBack) {
    const auto prof = derive_profile(0.3, 0.05, 100000);
    EXPECT_EQ(plan_high_low(prof).mode, PlanMode::HighLow);
}

TEST(PlanHighLow, PropertyOverRandomProfiles) {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int checked = 0;
    while (checked < 10000) {
        const double log_n = std::log(10.0) * (1.0 + 11.0 * u(rng));
        const auto n = static_cast<std::uint64_t>(std::llround(std::exp(log_n)));
        const double u2 = std::log(2.0) + (std::log(static_cast<double>(n)) - std::log(2.0)) * u(rng);
        const double u1 = std::log(2.0) + (u2 - std::log(2.0)) * u(rng);
        const double p1 = std::exp(-u1);
        const double p2 = std::exp(-u2);
        if (p1 / p2 < 1.0 + 1e-6 || p2 * static_cast<double>(n) <= 1.0 + 1e-9 || p1 >= 0.5) {
            continue;
        }
        ++checked;
        const auto prof = derive_profile(p1, p2, n);
        const auto sol = solve_high_low(prof);
        ASSERT_GE(sol.a, 0.0);
        ASSERT_GE(sol.b, 0.0);
        const auto res = constraint_residuals(prof, sol);
        ASSERT_LE(res.far_balance, kConstraintTolerance);
        ASSERT_LE(res.near_mass, kConstraintTolerance);
        ASSERT_LE(sol.a + sol.b, high_low_bound(prof) * (1.0 + 1e-9));

        const auto hl = plan_high_low(prof);
        ASSERT_EQ(hl.mode, PlanMode::HighLow);
        const double nh = static_cast<double>(hl.num_high);
        const double nl = static_cast<double>(hl.num_low);
        ASSERT_LE(nh, sol.a + kCountSnap * std::max(1.0, sol.a));
        ASSERT_GT(nh, sol.a - 1.0);
        ASSERT_GE(nl, sol.b - kCountSnap * std::max(1.0, sol.b));
        ASSERT_LT(nl, sol.b + 1.0);
        ASSERT_LE(hl.predicted_far_candidates, static_cast<double>(hl.total_tables()) + 1.0 + 1e-9 * hl.total_tables());
        const double miss = std::pow(1.0 - std::pow(p1, hl.high_len), static_cast<double>(hl.num_high)) *
                            std::pow(1.0 - std::pow(p1, hl.low_len), static_cast<double>(hl.num_low));
        ASSERT_LE(miss, 2.0 / std::exp(1.0));

        if (std::ceil(std::pow(p1, -std::ceil(prof.kappa))) >= 0x1p64) {
            ASSERT_THROW(plan_classic(prof), InvalidParameter);
            continue;
        }
        const auto cl = plan_classic(prof);
        ASSERT_LE(static_cast<double>(cl.num_low), classic_bound(prof) * (1.0 + 1e-9) + 1.0);
        if (prof.alpha == 0.0) {
            ASSERT_EQ(layout(hl), layout(cl));
        }
    }
}

TEST(Repetitions, FailureFormula) {
    EXPECT_EQ(repetitions_for_failure(0.01), 16);
    EXPECT_EQ(repetitions_for_failure(2.0 / std::exp(1.0) + 1e-9), 1);
    EXPECT_THROW(repetitions_for_failure(0.0), InvalidParameter);
}

TEST(SavingsGrid, FigureCell) {
    const auto cells = savings_grid(1'000'000, {0.25}, {1.0 / 3.0});
    ASSERT_EQ(cells.size(), 1u);
    EXPECT_TRUE(cells[0].valid);
    EXPECT_NEAR(cells[0].saving_exp, 0.1875, 1e-12);
    EXPECT_NEAR(cells[0].classic_exp - cells[0].high_low_exp, 0.1875, 1e-12);
}

TEST(SavingsGrid, MinHashExampleCell) {
    const auto cells = savings_grid(1'000'000, {0.25}, {0.3});
    EXPECT_NEAR(cells[0].saving_exp, 5.0 / 24.0, 1e-12);
    EXPECT_NEAR(cells[0].high_low_exp, 7.0 / 8.0, 1e-12);
    EXPECT_NEAR(cells[0].classic_exp, 13.0 / 12.0, 1e-12);
}

TEST(SavingsGrid, P1AtOneSavesNothing) {
    const auto cells = savings_grid(1'000'000, {0.0}, {0.5});
    EXPECT_TRUE(cells[0].valid);
    EXPECT_FALSE(cells[0].in_theorem_region);
    EXPECT_EQ(cells[0].saving_exp, 0.0);
}

TEST(SavingsGrid, InvalidCellsMarked) {
    const auto cells = savings_grid(1000, {0.2, 0.5}, {0.2, 0.4});
    ASSERT_EQ(cells.size(), 4u);
    EXPECT_FALSE(cells[0].valid); // p1 == p2
    EXPECT_TRUE(cells[1].valid);
    EXPECT_FALSE(cells[2].valid); // p2 > p1
    EXPECT_FALSE(cells[3].valid);
}

TEST(PlanJson, FieldNamesAndRoundTrip) {
    const auto plan = plan_high_low(derive_profile(0.1, 0.02, 1'000'000));
    const json j = plan;
    for (const char* key : {"mode", "low_len", "high_len", "num_low", "num_high", "a_real", "b_real", "repetitions",
                            "predicted_far_candidates", "predicted_single_success"}) {
        EXPECT_TRUE(j.contains(key)) << key;
    }
    EXPECT_EQ(j.at("mode"), "high_low");
    const auto back = j.get<TablePlan>();
    EXPECT_EQ(json(back).dump(), j.dump());
}
