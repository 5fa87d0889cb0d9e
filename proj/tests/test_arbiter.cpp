#include <gtest/gtest.h>

#include <qosmem/qosmem.hpp>

using namespace qosmem;

namespace {

PriorityKey random_key(Rng& rng) {
    return PriorityKey{static_cast<int>(1 + rng.below(3)), static_cast<std::int64_t>(rng.below(3)), rng.bernoulli(0.5),
                       rng.below(4), rng.below(1000)};
}

}  // namespace

TEST(PriorityKey, StrictTotalOrder) {
    Rng rng(7);
    for (int i = 0; i < 20000; ++i) {
        PriorityKey a = random_key(rng), b = random_key(rng), c = random_key(rng);
        EXPECT_FALSE(outranks(a, a));
        if (a == b) continue;
        EXPECT_NE(outranks(a, b), outranks(b, a)) << "trichotomy";
        if (outranks(a, b) && outranks(b, c)) EXPECT_TRUE(outranks(a, c)) << "transitivity";
    }
}

TEST(PriorityKey, FieldOrder) {
    EXPECT_TRUE(outranks({1, 9, false, 9, 9}, {2, 0, true, 0, 0}));
    EXPECT_TRUE(outranks({1, 0, false, 9, 9}, {1, 1, true, 0, 0}));
    EXPECT_TRUE(outranks({1, 0, true, 9, 9}, {1, 0, false, 0, 0}));
    EXPECT_TRUE(outranks({1, 0, true, 1, 9}, {1, 0, true, 2, 0}));
    EXPECT_TRUE(outranks({1, 0, true, 1, 1}, {1, 0, true, 1, 2}));
}

TEST(PickNext, SingleIssuableRequest) {
    std::vector<ArbitrationEntry> q{{PriorityKey{1, 0, false, 0, 0}, 0, 30}};
    const auto s = pick_next(q, ChannelView{0, 0, 40, 16});
    ASSERT_TRUE(s);
    EXPECT_EQ(s->index, 0u);
    EXPECT_EQ(s->data_start, 30u);
}

TEST(PickNext, NothingBeyondHorizon) {
    std::vector<ArbitrationEntry> q{{PriorityKey{1, 0, false, 0, 0}, 0, 100}};
    EXPECT_FALSE(pick_next(q, ChannelView{0, 0, 40, 16}));
}

TEST(PickNext, RowHitWinsAtEqualRank) {
    std::vector<ArbitrationEntry> q{{PriorityKey{1, 0, false, 0, 0}, 0, 124},
                                    {PriorityKey{1, 0, true, 5, 1}, 1, 52}};
    const auto s = pick_next(q, ChannelView{0, 0, 124, 16});
    ASSERT_TRUE(s);
    EXPECT_EQ(s->index, 1u);
}

TEST(PickNext, LowerRankFillsGapWithoutDelayingBetterRequest) {
    // The better request on bank 0 is not ready for a while; a request on
    // bank 1 whose burst ends before then may go first.
    std::vector<ArbitrationEntry> q{{PriorityKey{1, 0, true, 0, 0}, 0, 200},
                                    {PriorityKey{2, 0, true, 0, 1}, 1, 60}};
    auto s = pick_next(q, ChannelView{50, 0, 100, 16});
    ASSERT_TRUE(s);
    EXPECT_EQ(s->index, 1u);
    q[1].data_ready = 190;  // would overlap the better request's slot
    s = pick_next(q, ChannelView{100, 0, 100, 16});
    ASSERT_TRUE(s);
    EXPECT_EQ(s->index, 0u);
}

// On a single bank every better request blocks every worse one, so the pick
// is the overall best request if it is issuable and nothing otherwise.
TEST(PickNext, SingleBankMatchesExhaustiveArgmax) {
    Rng rng(11);
    for (int trial = 0; trial < 5000; ++trial) {
        std::vector<ArbitrationEntry> q;
        const auto n = 1 + rng.below(6);
        for (std::uint64_t i = 0; i < n; ++i) {
            PriorityKey k = random_key(rng);
            k.sequence = i;
            q.push_back({k, 0, rng.below(200)});
        }
        const ChannelView ch{50, rng.below(120), 60, 16};
        std::size_t best = 0;
        for (std::size_t i = 1; i < q.size(); ++i)
            if (outranks(q[i].key, q[best].key)) best = i;
        const auto s = pick_next(q, ch);
        if (ch.bus_free > ch.now + ch.horizon || q[best].data_ready > ch.now + ch.horizon) {
            EXPECT_FALSE(s) << "trial " << trial;
        } else {
            ASSERT_TRUE(s) << "trial " << trial;
            EXPECT_EQ(s->index, best);
            EXPECT_EQ(s->data_start, std::max(ch.bus_free, q[best].data_ready));
        }
    }
}

TEST(Controller, SchedulesRowHitsFirstOnOneBank) {
    DramConfig d = oracle_memory(1);
    MemoryController mc(d);
    auto req = [&](std::uint64_t id, std::uint32_t row, Cycle arrival) {
        MemoryRequest m;
        m.id = id;
        m.coords = DramCoords{0, 0, 0, row, 0};
        m.address = encode_address(m.coords, d);
        m.arrival = arrival;
        return m;
    };
    std::vector<IssuedRequest> out;
    const auto flat = [](const MemoryRequest&) { return RankedGroup{1, 0}; };
    mc.enqueue(req(0, 1, 0));
    for (Cycle now = 0; out.empty(); ++now) mc.schedule(now, flat, out);
    const Cycle t = out.back().timing.completion;
    mc.enqueue(req(1, 2, t));
    mc.enqueue(req(2, 1, t));
    for (Cycle now = t; out.size() < 3; ++now) mc.schedule(now, flat, out);
    EXPECT_EQ(out[1].request.id, 2u);
    EXPECT_EQ(out[1].timing.kind, ServiceKind::row_hit);
    EXPECT_EQ(out[2].request.id, 1u);
    EXPECT_EQ(mc.auditor().violations(), 0u);
}
