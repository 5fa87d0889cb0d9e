#include <gtest/gtest.h>

#include <set>

#include <qosmem/qosmem.hpp>

using namespace qosmem;

namespace {

DramConfig toy(std::uint32_t channels, std::uint32_t banks) {
    DramConfig d;
    d.channels = channels;
    d.ranks_per_channel = 1;
    d.banks_per_rank = banks;
    d.rows_per_bank = 4;
    d.columns_per_row = 4;
    return d;
}

}  // namespace

TEST(AddressMap, ZeroIsOrigin) {
    const DramConfig d = ddr3_1333_preset();
    EXPECT_EQ(decode_address(0, d), (DramCoords{0, 0, 0, 0, 0}));
}

TEST(AddressMap, NextLineGoesToChannelOne) {
    const DramConfig d = ddr3_1333_preset();
    ASSERT_EQ(d.channels, 2u);
    EXPECT_EQ(decode_address(d.line_size, d), (DramCoords{1, 0, 0, 0, 0}));
}

TEST(AddressMap, EnumerationIsABijection) {
    const DramConfig d = toy(2, 2);
    std::set<std::uint64_t> seen;
    for (Address line = 0; line < d.total_lines(); ++line) {
        const Address a = line * d.line_size;
        const DramCoords c = decode_address(a, d);
        const std::uint64_t flat =
            ((((std::uint64_t{c.row} * d.columns_per_row + c.column) * d.ranks_per_channel + c.rank) * d.banks_per_rank +
              c.bank) *
                 d.channels +
             c.channel);
        EXPECT_LT(flat, d.total_lines());
        EXPECT_TRUE(seen.insert(flat).second) << "collision at line " << line;
        EXPECT_EQ(encode_address(c, d), a);
    }
    EXPECT_EQ(seen.size(), d.total_lines());
    EXPECT_THROW(decode_address(d.total_bytes(), d), ConfigError);
}

TEST(ServiceKind, Definitions) {
    BankState b;
    EXPECT_EQ(service_kind(7, b), ServiceKind::row_closed);
    b.open_row = 7;
    EXPECT_EQ(service_kind(7, b), ServiceKind::row_hit);
    EXPECT_EQ(service_kind(9, b), ServiceKind::row_miss);
}

TEST(Issue, LatenciesComposeFromTimings) {
    const DramConfig d = ddr3_1333_preset();
    const ScaledTiming t = ScaledTiming::from(d);
    const Cycle k = d.cpu_cycles_per_dram_cycle;
    const auto& tp = d.timing;
    const Cycle c = 1000;

    BankState closed;
    EXPECT_EQ(issue(3, AccessKind::read, closed, c, t).completion, c + (tp.tRCD + tp.tCL + tp.tBURST) * k);

    BankState hit;
    hit.open_row = 3;
    EXPECT_EQ(earliest_issue_cycle(3, hit, c, t), c);
    EXPECT_EQ(issue(3, AccessKind::read, hit, c, t).completion, c + (tp.tCL + tp.tBURST) * k);

    BankState miss;
    miss.open_row = 5;
    EXPECT_EQ(issue(3, AccessKind::read, miss, c, t).completion, c + (tp.tRP + tp.tRCD + tp.tCL + tp.tBURST) * k);
}

TEST(Issue, MissCostsMoreThanTwiceAHit) {
    const ScaledTiming t = ScaledTiming::from(ddr3_1333_preset());
    EXPECT_GT(t.service_latency(ServiceKind::row_miss), 2 * t.service_latency(ServiceKind::row_hit));
}

TEST(Issue, BackToBackMissesRespectRowCycle) {
    const ScaledTiming t = ScaledTiming::from(ddr3_1333_preset());
    BankState b;
    const auto first = issue(1, AccessKind::read, b, 0, t);
    const Cycle s = earliest_issue_cycle(2, b, 0, t);
    const auto second = issue(2, AccessKind::read, b, s, t);
    ASSERT_TRUE(first.activate && second.activate);
    EXPECT_GE(*second.activate, *first.activate + t.rc);
    EXPECT_THROW(issue(3, AccessKind::read, b, s, t), InvariantViolation);
}

TEST(Issue, WriteRecoveryDelaysPrecharge) {
    const ScaledTiming t = ScaledTiming::from(ddr3_1333_preset());
    BankState b;
    const auto w = issue(1, AccessKind::write, b, 0, t);
    const Cycle s = earliest_issue_cycle(2, b, 0, t);
    EXPECT_GE(s, w.completion + t.wr);
}

// In-order stream on one bank: each access starts at its earliest legal
// cycle. The reference finds that cycle by scanning an explicit command list.
TEST(Issue, MatchesEventListOnOneBank) {
    DramConfig d = toy(1, 1);
    d.cpu_cycles_per_dram_cycle = 1;
    const ScaledTiming t = ScaledTiming::from(d);
    for (std::uint64_t seed = 1; seed <= 300; ++seed) {
        Rng rng(seed);
        BankState bank;
        std::vector<oracle_detail::Command> history;
        Cycle now = 0;
        for (int i = 0; i < 20; ++i) {
            now += rng.below(40);
            const auto row = static_cast<std::uint32_t>(rng.below(4));
            const AccessKind kind = rng.bernoulli(0.3) ? AccessKind::write : AccessKind::read;

            Cycle ref = now;
            while (!oracle_detail::legal(oracle_detail::plan_at(ref, row, history, t), history, t)) ++ref;
            const auto plan = oracle_detail::plan_at(ref, row, history, t);
            if (plan.pre) history.push_back({oracle_detail::Cmd::pre, *plan.pre, 0});
            if (plan.act) history.push_back({oracle_detail::Cmd::act, *plan.act, row});
            history.push_back({kind == AccessKind::write ? oracle_detail::Cmd::wr : oracle_detail::Cmd::rd, plan.col, row});

            const Cycle got = earliest_issue_cycle(row, bank, now, t);
            ASSERT_EQ(got, ref) << "seed " << seed << " access " << i;
            const auto r = issue(row, kind, bank, got, t);
            ASSERT_EQ(r.completion, plan.col + t.cl + t.burst);
            now = got;
        }
    }
}

TEST(Auditor, FlagsEarlyActivate) {
    const DramConfig d = ddr3_1333_preset();
    const ScaledTiming t = ScaledTiming::from(d);
    TimingAuditor audit(d);
    BankState b;
    const auto first = issue(1, AccessKind::read, b, 0, t);
    EXPECT_FALSE(audit.check(0, 0, AccessKind::read, first));

    IssueResult bad;
    bad.kind = ServiceKind::row_miss;
    bad.start = first.completion;
    bad.precharge = bad.start;
    bad.activate = bad.start + t.rp;
    bad.column = *bad.activate + t.rcd;
    bad.data_start = bad.column + t.cl;
    bad.completion = bad.data_start + t.burst;
    ASSERT_LT(*bad.activate, *first.activate + t.rc);
    const auto err = audit.check(0, 0, AccessKind::read, bad);
    ASSERT_TRUE(err);
    // tRC = tRAS + tRP, so the precharge is already early.
    EXPECT_NE(err->find("tRAS"), std::string::npos) << *err;
    EXPECT_EQ(audit.violations(), 1u);
}

TEST(Config, TimingValidation) {
    DramConfig d = ddr3_1333_preset();
    d.timing.tRC = 10;
    EXPECT_THROW(d.validate(), ConfigError);
    d = ddr3_1333_preset();
    d.banks_per_rank = 0;
    EXPECT_THROW(d.validate(), ConfigError);
}
