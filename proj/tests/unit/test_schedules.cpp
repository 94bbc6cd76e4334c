#include "paradiff/errors.hpp"
#include "paradiff/schedules.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace paradiff;

namespace {

constexpr ScheduleKind kAllKinds[] = {ScheduleKind::paraguide, ScheduleKind::cosine, ScheduleKind::sqrt};

class ScheduleLengths : public ::testing::TestWithParam<int> {};

TEST_P(ScheduleLengths, ParaguideEndpointsAndMidpoint) {
    const int T = GetParam();
    EXPECT_NEAR(alpha_bar(ScheduleKind::paraguide, T, 0), 1.0, 1e-12);
    EXPECT_NEAR(alpha_bar(ScheduleKind::paraguide, T, T), 0.0, 1e-12);
    EXPECT_NEAR(alpha_bar(ScheduleKind::paraguide, T, T / 2), std::sqrt(0.5), 1e-12);
}

TEST_P(ScheduleLengths, ParaguideMatchesClosedFormEverywhere) {
    const int T = GetParam();
    const NoiseSchedule s(ScheduleKind::paraguide, T);
    for (int t = 0; t <= T; ++t) {
        const double expected = std::sqrt(static_cast<double>(T - t) / T);
        ASSERT_NEAR(s.alpha_bar(t), expected, 1e-12) << "t=" << t;
    }
}

TEST_P(ScheduleLengths, AllKindsNonIncreasingInUnitInterval) {
    const int T = GetParam();
    for (const auto kind : kAllKinds) {
        const NoiseSchedule s(kind, T);
        EXPECT_NEAR(s.alpha_bar(0), kind == ScheduleKind::sqrt ? 0.99 : 1.0, 1e-12) << to_string(kind);
        for (int t = 1; t <= T; ++t) {
            ASSERT_LE(s.alpha_bar(t), s.alpha_bar(t - 1)) << to_string(kind) << " t=" << t;
            ASSERT_GE(s.alpha_bar(t), 0.0);
            ASSERT_LE(s.alpha_bar(t), 1.0);
        }
    }
}

INSTANTIATE_TEST_SUITE_P(Lengths, ScheduleLengths, ::testing::Values(10, 200, 5000));

TEST(Schedules, CosineMatchesOracle) {
    const int T = 200;
    const double s = 0.008;
    auto f = [&](int t) {
        const double c = std::cos((static_cast<double>(t) / T + s) / (1.0 + s) * std::numbers::pi / 2.0);
        return c * c;
    };
    for (int t : {0, 1, 50, 100, 199, 200}) {
        EXPECT_NEAR(alpha_bar(ScheduleKind::cosine, T, t), f(t) / f(0), 1e-12) << t;
    }
}

TEST(Schedules, SqrtClampsAtZero) {
    const int T = 100;
    EXPECT_NEAR(alpha_bar(ScheduleKind::sqrt, T, 25), 1.0 - std::sqrt(0.25 + 1e-4), 1e-12);
    EXPECT_EQ(alpha_bar(ScheduleKind::sqrt, T, T), 0.0);
}

TEST(Schedules, CoefficientsAtMidpoint) {
    const NoiseSchedule s(ScheduleKind::paraguide, 200);
    EXPECT_NEAR(s.signal_scale(100), 0.840896415, 1e-9);
    EXPECT_NEAR(s.noise_scale(100), 0.541196100, 1e-9);
    EXPECT_NEAR(s.signal_scale(100) * s.signal_scale(100) + s.noise_scale(100) * s.noise_scale(100), 1.0, 1e-12);
}

TEST(Schedules, TableHasOneEntryPerStep) {
    const NoiseSchedule s(ScheduleKind::cosine, 37);
    EXPECT_EQ(s.table().size(), 38u);
    EXPECT_EQ(s.steps(), 37);
    EXPECT_EQ(s.kind(), ScheduleKind::cosine);
}

TEST(Schedules, RejectsBadArguments) {
    EXPECT_THROW(NoiseSchedule(ScheduleKind::paraguide, 0), DomainError);
    EXPECT_THROW(alpha_bar(ScheduleKind::paraguide, 10, -1), DomainError);
    EXPECT_THROW(alpha_bar(ScheduleKind::paraguide, 10, 11), DomainError);
    const NoiseSchedule s(ScheduleKind::paraguide, 10);
    EXPECT_THROW(s.alpha_bar(11), DomainError);
    EXPECT_THROW(parse_schedule_kind("linear"), ConfigError);
}

TEST(Schedules, NamesRoundTrip) {
    for (const auto kind : kAllKinds) EXPECT_EQ(parse_schedule_kind(to_string(kind)), kind);
}

TEST(GuidanceStrength, ZeroAtBothEnds) {
    for (int T : {1, 10, 200}) {
        for (double lambda : {0.0, 1.0, 1e3}) {
            EXPECT_EQ(guidance_strength(lambda, 0, T), 0.0);
            EXPECT_NEAR(guidance_strength(lambda, T, T), 0.0, 1e-12 * std::max(1.0, lambda));
        }
    }
}

TEST(GuidanceStrength, PeaksAtMidpoint) {
    EXPECT_NEAR(guidance_strength(200.0, 100, 200), 200.0, 1e-9);
    EXPECT_NEAR(guidance_strength(2.0, 50, 200), 2.0 * std::sin(std::numbers::pi / 4.0), 1e-12);
    const GuidanceSchedule g(10.0, 20);
    EXPECT_NEAR(g.at(10), 10.0, 1e-12);
    EXPECT_EQ(g.lambda_base(), 10.0);
}

TEST(GuidanceStrength, RejectsOutOfRange) {
    EXPECT_THROW(guidance_strength(1.0, -1, 10), DomainError);
    EXPECT_THROW(guidance_strength(1.0, 11, 10), DomainError);
    EXPECT_THROW(GuidanceSchedule(-1.0, 10), DomainError);
}

}  // namespace
