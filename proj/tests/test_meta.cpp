#include <gtest/gtest.h>

#include <qosmem/qosmem.hpp>

using namespace qosmem;

namespace {

LdpCounters progress(std::uint64_t done, std::uint64_t total, Cycle elapsed, Cycle period) {
    LdpCounters c;
    c.curr_req = done;
    c.total_req = total;
    c.curr_cyc = elapsed;
    c.total_cyc = period;
    return c;
}

}  // namespace

TEST(Progress, Current) {
    EXPECT_DOUBLE_EQ(current_progress(progress(4, 8, 0, 1)), 0.5);
    EXPECT_DOUBLE_EQ(current_progress(progress(0, 8, 0, 1)), 0.0);
    EXPECT_DOUBLE_EQ(current_progress(progress(0, 0, 0, 1)), 1.0);
}

TEST(Progress, Expected) {
    EXPECT_DOUBLE_EQ(expected_progress(progress(0, 8, 40, 160)), 0.25);
    EXPECT_DOUBLE_EQ(expected_progress(progress(0, 8, 0, 160)), 0.0);
    EXPECT_DOUBLE_EQ(expected_progress(progress(0, 8, 160, 160)), 1.0);
}

TEST(Urgency, Examples) {
    EXPECT_FALSE(classify_ldp_urgency(progress(4, 8, 40, 160), 0.8));
    EXPECT_TRUE(classify_ldp_urgency(progress(4, 8, 80, 160), 0.8));
    EXPECT_TRUE(classify_ldp_urgency(progress(90, 100, 85, 100), 0.8));
    EXPECT_FALSE(classify_ldp_urgency(progress(90, 100, 85, 100), 0.9));
}

TEST(Urgency, EqualityIsExact) {
    // 1/3 of the requests at 1/3 of the period: urgent, with no rounding slop.
    EXPECT_TRUE(classify_ldp_urgency(progress(1, 3, 1000, 3000), 0.9));
    EXPECT_FALSE(classify_ldp_urgency(progress(1, 3, 999, 3000), 0.9));
}

TEST(Urgency, ThresholdOneNeverFiresAlone) {
    for (Cycle e = 0; e < 100; ++e) EXPECT_FALSE(classify_ldp_urgency(progress(100, 100, e, 100), 1.0)) << e;
    EXPECT_TRUE(classify_ldp_urgency(progress(100, 100, 100, 100), 1.0));  // current == expected
    EXPECT_FALSE(classify_ldp_urgency(progress(101, 100, 100, 100), 1.0));
}

TEST(Upl, BaseWindowAndPriorityStart) {
    // Times in ns: tRC 50, period 2000, 16 requests.
    const Cycle slack = 30;
    const std::vector<SdpTask> t{{AgentId{4}, 2000, 16}};
    const auto r = compute_upl(t, 50, slack);
    EXPECT_EQ(r[0].upl, 800 + slack);
    EXPECT_EQ(r[0].priority_cyc, 2000 - (800 + slack));
}

TEST(Upl, ExtensionByHigherPriorityWindows) {
    const std::vector<SdpTask> t{{AgentId{0}, 5000, 16}, {AgentId{1}, 500, 2}};
    const auto r = compute_upl(t, 50, 0);
    EXPECT_EQ(r[1].upl, 100u);
    EXPECT_EQ(r[0].upl, 1000u);  // 800 + ceil(800 / 500) * 100
    EXPECT_EQ(to_index(r[0].id), 0u);
}

TEST(Upl, ExtensionIteratesToFixedPoint) {
    // 450 -> 450 + 1 * 100 = 550, which now overlaps two windows -> 650.
    const std::vector<SdpTask> t{{AgentId{0}, 5000, 9}, {AgentId{1}, 500, 2}};
    const auto r = compute_upl(t, 50, 0);
    EXPECT_EQ(r[0].upl, 650u);
    EXPECT_EQ(r[0].priority_cyc, 4350u);
}

TEST(Upl, EqualPeriodsBreakTiesById) {
    const std::vector<SdpTask> t{{AgentId{7}, 1000, 2}, {AgentId{3}, 1000, 2}};
    const auto r = compute_upl(t, 50, 0);
    EXPECT_EQ(r[1].upl, 100u);
    EXPECT_EQ(r[0].upl, 200u);
}

TEST(Upl, RejectsWindowLongerThanPeriod) {
    const std::vector<SdpTask> t{{AgentId{2}, 700, 16}};
    try {
        compute_upl(t, 50, 0);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.field(), "hwa[2].period");
    }
}

TEST(Pb, ExtremesAreDeterministic) {
    Rng rng(5);
    LdpCounters c;
    c.pb = 0.0;
    for (int i = 0; i < 1000; ++i) EXPECT_EQ(draw_pb(c, rng), PbDraw::no_swap);
    c.pb = 1.0;
    for (int i = 0; i < 1000; ++i) EXPECT_EQ(draw_pb(c, rng), PbDraw::swap);
}

TEST(Pb, SwapFraction) {
    Rng rng(0x5eed);
    LdpCounters c;
    c.pb = 0.3;
    int swaps = 0;
    for (int i = 0; i < 10000; ++i) swaps += draw_pb(c, rng) == PbDraw::swap;
    EXPECT_NEAR(swaps / 10000.0, 0.3, 0.02);
}

TEST(Pb, UpdateSteps) {
    LdpCounters c = progress(1, 10, 50, 100);  // behind
    c.pb = 0.02;
    update_pb(c);
    EXPECT_DOUBLE_EQ(c.pb, 0.0);

    c = progress(9, 10, 50, 100);  // ahead
    c.pb = 0.995;
    update_pb(c);
    EXPECT_DOUBLE_EQ(c.pb, 1.0);

    c.pb = 0.5;
    update_pb(c);
    EXPECT_DOUBLE_EQ(c.pb, 0.51);

    c = progress(5, 10, 50, 100);  // on schedule
    c.pb = 0.4;
    update_pb(c);
    EXPECT_DOUBLE_EQ(c.pb, 0.4);
}

TEST(Pb, StaysClampedUnderAdversarialSequences) {
    Rng rng(17);
    LdpCounters c;
    c.total_req = 100;
    c.total_cyc = 100;
    for (int i = 0; i < 100000; ++i) {
        // Long runs of one sign, then flips.
        const bool ahead = (i / (1 + static_cast<int>(rng.below(300)))) % 2 == 0;
        c.curr_cyc = 50;
        c.curr_req = ahead ? 100 : 0;
        update_pb(c, rng.uniform() * 0.5, rng.uniform() * 0.5);
        ASSERT_GE(c.pb, 0.0);
        ASSERT_LE(c.pb, 1.0);
    }
}

TEST(Placement, FirstTransitionThenReentry) {
    LdpCounters c;
    EXPECT_EQ(place_nonurgent_ldp(c), NonUrgentGroup::group6);
    EXPECT_EQ(place_nonurgent_ldp(c), NonUrgentGroup::group4);
    EXPECT_EQ(place_nonurgent_ldp(c), NonUrgentGroup::group4);
    end_of_period_reset(c, 8, 160);
    EXPECT_EQ(place_nonurgent_ldp(c), NonUrgentGroup::group6);
}

TEST(PeriodReset, LdpKeepsPbAndReloadsTotals) {
    LdpCounters c = progress(5, 8, 100, 160);
    c.pb = 0.37;
    c.urgent = false;
    c.was_nonurgent_before = true;
    end_of_period_reset(c, 8, 160);
    EXPECT_EQ(c.curr_req, 0u);
    EXPECT_EQ(c.curr_cyc, 0u);
    EXPECT_EQ(c.total_req, 8u);
    EXPECT_EQ(c.total_cyc, 160u);
    EXPECT_DOUBLE_EQ(c.pb, 0.37);
    EXPECT_TRUE(c.urgent);
    EXPECT_FALSE(c.was_nonurgent_before);
    end_of_period_reset(c, 20, 500);
    EXPECT_EQ(c.total_req, 20u);
    EXPECT_EQ(c.total_cyc, 500u);
}

TEST(PeriodReset, SdpWindowOpensAtPeriodMinusUpl) {
    SdpCounters c;
    c.upl = 300;
    end_of_period_reset(c, 1000);
    EXPECT_EQ(c.priority_cyc, 700u);
    EXPECT_FALSE(c.urgent);
}

TEST(PeriodReset, VariableScheduleAdvances) {
    HwaSpec s;
    s.name = "rsz";
    s.schedule = {{100, 4}, {300, 9}};
    Hwa h(AgentId{0}, s, ddr3_1333_preset());
    EXPECT_EQ(h.begin_cycle(0)->entry, (PeriodEntry{100, 4}));
    EXPECT_EQ(h.begin_cycle(100)->entry, (PeriodEntry{300, 9}));
    EXPECT_FALSE(h.begin_cycle(399));
    EXPECT_EQ(h.begin_cycle(400)->entry, (PeriodEntry{100, 4}));
}

// The meta-controller keeps a LDP HWA's counters in step with the HWA itself.
TEST(MetaController, TracksHwaProgressInSimulation) {
    SystemConfig s;
    s.dram.channels = 1;
    s.dram.banks_per_rank = 1;
    s.dram.uniform_latency = 10;
    HwaSpec h;
    h.name = "h";
    h.schedule = {{400, 8}};
    s.hwas.push_back(h);
    s.policy.kind = PolicyKind::squash;
    s.policy.scheduling_unit = 40;
    Simulation sim(s);
    for (int i = 0; i < 1000; ++i) {
        sim.step();
        const LdpCounters& c = sim.ldp_counters(0);
        ASSERT_EQ(c.curr_req, sim.hwa(0).completed_this_period());
        ASSERT_EQ(c.total_req, 8u);
        ASSERT_EQ(c.total_cyc, 400u);
    }
}

TEST(MetaController, SdpWindowMakesHwaUrgent) {
    SystemConfig s;
    s.dram.channels = 1;
    s.dram.banks_per_rank = 1;
    s.dram.uniform_latency = 10;
    HwaSpec h;
    h.name = "h";
    h.klass = HwaClass::sdp;
    h.schedule = {{1000, 4}};
    s.hwas.push_back(h);
    s.policy.kind = PolicyKind::squash;
    Simulation sim(s);
    sim.step();
    const SdpCounters& c = sim.sdp_counters(0);
    ASSERT_GT(c.upl, 0u);
    ASSERT_LT(c.upl, 1000u);
    for (Cycle now = 1; now < 2000; ++now) {
        sim.step();
        const Cycle offset = now % 1000;
        EXPECT_EQ(sim.sdp_counters(0).urgent, offset >= c.priority_cyc) << "cycle " << now;
    }
}
