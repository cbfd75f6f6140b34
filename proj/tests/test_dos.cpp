#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

using namespace ddrmpc;

namespace {

/// Direct evaluation of both constraints on every interval, no prefix sums.
bool naive_valid(const Indicators& ind, const AttackParams& p)
{
    const long T = static_cast<long>(ind.size());
    for (long t1 = 0; t1 < T; ++t1)
        for (long t2 = t1 + 1; t2 <= T; ++t2) {
            long on = 0, dur = 0;
            for (long k = t1; k < t2; ++k) {
                const bool a = ind[static_cast<std::size_t>(k)] != 0;
                const bool prev = k > 0 && ind[static_cast<std::size_t>(k - 1)] != 0;
                dur += a;
                on += a && !prev;
            }
            const double len = static_cast<double>(t2 - t1);
            if (static_cast<double>(on) > p.kappa_f + len / p.nu_f + 1e-9) return false;
            if (static_cast<double>(dur) > p.kappa_d + len / p.nu_d + 1e-9) return false;
        }
    return true;
}

Indicators from_string(const std::string& s) { return from_text(s); }

} // namespace

TEST(Counts, DurationAndFrequency)
{
    const Indicators ind = from_string("0110111001");
    EXPECT_EQ(duration_count(ind, 0, 10), 6);
    EXPECT_EQ(frequency_count(ind, 0, 10), 3);
    EXPECT_EQ(duration_count(ind, 2, 5), 2);
    // step 2 continues an attack that started at 1
    EXPECT_EQ(frequency_count(ind, 2, 5), 1);
    EXPECT_EQ(frequency_count(from_string("1"), 0, 1), 1);
    EXPECT_EQ(duration_count(ind, 4, 4), 0);
    EXPECT_THROW(duration_count(ind, 3, 11), PreconditionError);
    EXPECT_THROW(frequency_count(ind, 5, 4), PreconditionError);
}

TEST(Validate, AgreesWithNaiveCheckOnEverySequenceOfLengthTen)
{
    const AttackParams p{1.0, 4.0, 2.0, 2.0};
    for (unsigned code = 0; code < (1u << 10); ++code) {
        Indicators ind(10);
        for (unsigned i = 0; i < 10; ++i) ind[i] = (code >> i) & 1u;
        EXPECT_EQ(static_cast<bool>(validate_schedule(ind, p)), naive_valid(ind, p)) << to_text(ind);
    }
}

TEST(Validate, ReportsViolatingInterval)
{
    const AttackParams p{1.0, 2.0, 1.0, 2.0};
    const ScheduleCheck r = validate_schedule(from_string("0111000"), p);
    ASSERT_FALSE(r.passed);
    EXPECT_EQ(r.bound, "duration");
    EXPECT_EQ(duration_count(from_string("0111000"), r.t1, r.t2) - (1.0 + (r.t2 - r.t1) / 2.0), r.excess);
}

TEST(Params, Preconditions)
{
    EXPECT_THROW((AttackParams{-1.0, 4.0, 0.0, 2.0}.validate()), PreconditionError);
    EXPECT_THROW((AttackParams{0.0, 1.5, 0.0, 2.0}.validate()), PreconditionError);
    EXPECT_THROW((AttackParams{0.0, 4.0, 0.0, 0.5}.validate()), PreconditionError);
    EXPECT_THROW(AttackParams::from_ratio(0.2), PreconditionError);
}

TEST(Params, FromRatioHitsTheRatio)
{
    for (double r : {0.5, 0.8841, 0.9142, 0.9317}) {
        const AttackParams p = AttackParams::from_ratio(r);
        EXPECT_NEAR(p.resilience_margin(), r, 1e-12);
        EXPECT_NO_THROW(p.validate());
    }
}

TEST(InterSuccess, ClosedForm)
{
    EXPECT_EQ(inter_success_bound({1.0, 4.0, 1.0, 4.0}), 5.0);
    EXPECT_NEAR(inter_success_bound({0.0, 4.0, 3.0, 2.0}), 3.0 / 0.25 + 1.0, 1e-12);
    EXPECT_THROW(inter_success_bound({1.0, 2.0, 1.0, 2.0}), ResilienceError);
}

TEST(InterSuccess, ExhaustiveWorstGapWithinBound)
{
    const AttackParams p{1.0, 4.0, 1.0, 4.0};
    const double bound = inter_success_bound(p);
    long worst = 0;
    for (unsigned code = 0; code < (1u << 14); ++code) {
        Indicators ind(14);
        for (unsigned i = 0; i < 14; ++i) ind[i] = (code >> i) & 1u;
        if (!validate_schedule(ind, p)) continue;
        // interior gaps only: both ends delivered
        if (ind.front() || ind.back()) continue;
        worst = std::max(worst, max_success_gap(ind));
    }
    EXPECT_LE(worst, static_cast<long>(std::ceil(bound)));
    EXPECT_GE(worst, 2);
}

TEST(SuccessGap, Examples)
{
    EXPECT_EQ(max_success_gap(from_string("0000")), 1);
    EXPECT_EQ(max_success_gap(from_string("0110")), 3);
    EXPECT_EQ(max_success_gap(from_string("1100")), 3);
    EXPECT_EQ(max_success_gap(from_string("0011")), 3);
    EXPECT_EQ(max_success_gap(from_string("1111")), 5);
    EXPECT_EQ(success_instants(from_string("0110")), (std::vector<long>{0, 3}));
}

TEST(Generators, RandomSchedulesAreAdmissible)
{
    for (double ratio : {0.5, 0.8841, 0.9317}) {
        const AttackParams p = AttackParams::from_ratio(ratio);
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            const DosSchedule s = generate_random(p, 500, seed);
            ASSERT_EQ(s.size(), 500u);
            EXPECT_TRUE(validate_schedule(s)) << ratio << " " << seed;
            EXPECT_LE(max_success_gap(s.indicators), static_cast<long>(std::ceil(inter_success_bound(p))));
            EXPECT_GT(s.attack_ratio(), 0.0);
        }
    }
}

TEST(Generators, RandomIsDeterministicPerSeed)
{
    const AttackParams p = AttackParams::from_ratio(0.8841);
    EXPECT_EQ(generate_random(p, 300, 9).indicators, generate_random(p, 300, 9).indicators);
    EXPECT_NE(generate_random(p, 300, 9).indicators, generate_random(p, 300, 10).indicators);
}

TEST(Generators, WorstCaseIsAdmissibleAndMaximal)
{
    const AttackParams p{1.0, 4.0, 1.0, 4.0};
    const DosSchedule s = generate_worst_case(p, 500);
    EXPECT_TRUE(validate_schedule(s));
    EXPECT_LE(max_success_gap(s.indicators), 5);
    // flipping any delivered step breaks admissibility
    for (std::size_t t = 0; t < 60; ++t) {
        if (s.indicators[t]) continue;
        Indicators more = s.indicators;
        more[t] = 1;
        EXPECT_FALSE(validate_schedule(more, p)) << t;
    }
}

TEST(Generators, NoAttacks)
{
    const DosSchedule s = no_attacks(20);
    EXPECT_EQ(s.attack_ratio(), 0.0);
    EXPECT_EQ(max_success_gap(s.indicators), 1);
}

TEST(Text, RoundTripAndErrors)
{
    const Indicators ind = from_string("0101110");
    EXPECT_EQ(to_text(ind), "0101110");
    EXPECT_EQ(from_text("01\n10\n"), from_string("0110"));
    EXPECT_THROW(from_text("01x"), ConfigError);
}
