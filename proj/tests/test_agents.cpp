#include <gtest/gtest.h>

#include <sstream>

#include <qosmem/qosmem.hpp>

using namespace qosmem;

namespace {

struct Recorder {
    std::vector<Emission> sent;
    std::uint64_t operator()(const Emission& e) {
        sent.push_back(e);
        return sent.size() - 1;
    }
};

CpuCore make_core(Trace t, CpuParams p = {}) {
    p.wrap_trace = false;
    return CpuCore(AgentId{0}, std::make_shared<const Trace>(std::move(t)), p);
}

HwaSpec hwa_spec(Cycle period, std::uint32_t requests, std::uint32_t periods_per_frame = 1) {
    HwaSpec h;
    h.name = "h";
    h.schedule = {{period, requests}};
    h.periods_per_frame = periods_per_frame;
    return h;
}

// Runs one period: emits everything, completes all but `missing` requests.
void run_period(Hwa& h, Cycle start, std::uint32_t missing) {
    ASSERT_TRUE(h.begin_cycle(start));
    std::uint32_t emitted = 0;
    h.emit_requests([&](const Emission&) { return ++emitted, true; });
    const std::uint64_t tag = h.period();
    for (std::uint32_t i = 0; i < emitted; ++i) {
        if (i < missing)
            h.on_abandoned(1);
        else
            h.on_complete(tag);
    }
}

}  // namespace

TEST(Trace, ParsesTextFormat) {
    std::istringstream in("# header\n3 0x40 R\n12\n0 80 w  # trailing comment\n\n");
    const Trace t = parse_trace(in);
    ASSERT_EQ(t.size(), 3u);
    EXPECT_EQ(t[0], (TraceRecord{3, 0x40, AccessKind::read}));
    EXPECT_EQ(t[1], (TraceRecord{12, std::nullopt, AccessKind::read}));
    EXPECT_EQ(t[2], (TraceRecord{0, 0x80, AccessKind::write}));

    std::ostringstream out;
    write_trace(out, t);
    std::istringstream back(out.str());
    EXPECT_EQ(parse_trace(back), t);
}

TEST(Trace, RejectsMalformedLines) {
    for (const char* bad : {"x 0x40 R\n", "3 0x40\n", "3 zz R\n", "3 0x40 Q\n", "-1 0x40 R\n", "3 0x40 R extra\n"}) {
        std::istringstream in(bad);
        EXPECT_THROW(parse_trace(in, "t"), ConfigError) << bad;
    }
}

TEST(CpuCore, RetiresComputeThenIssues) {
    CpuCore core = make_core({{3, 0x1000, AccessKind::read}});
    Recorder rec;
    core.tick(true, rec);
    EXPECT_EQ(core.retired_instructions(), 3u);
    EXPECT_TRUE(rec.sent.empty());
    core.tick(true, rec);
    ASSERT_EQ(rec.sent.size(), 1u);
    EXPECT_EQ(rec.sent[0].address, 0x1000u);
    EXPECT_EQ(core.retired_instructions(), 4u);
}

TEST(CpuCore, InflightBudgetBlocksSecondRequest) {
    CpuParams p;
    p.max_inflight = 1;
    CpuCore core = make_core({{0, 0x40, AccessKind::read}, {0, 0x80, AccessKind::read}}, p);
    Recorder rec;
    core.tick(true, rec);
    for (int i = 0; i < 5; ++i) core.tick(true, rec);
    EXPECT_EQ(rec.sent.size(), 1u);
    EXPECT_EQ(core.stall_cycles(), 5u);
    core.on_complete(0);
    core.tick(true, rec);
    EXPECT_EQ(rec.sent.size(), 2u);
}

TEST(CpuCore, FullBufferStalls) {
    CpuCore core = make_core({{0, 0x40, AccessKind::read}});
    Recorder rec;
    core.tick(false, rec);
    EXPECT_TRUE(rec.sent.empty());
    core.tick(true, rec);
    EXPECT_EQ(rec.sent.size(), 1u);
}

TEST(CpuCore, PureComputeTakesCeilNOverWidth) {
    for (std::uint64_t n : {1u, 2u, 3u, 4u, 10u, 11u, 12u, 1000u}) {
        // Split the work over several compute-only records as well.
        for (const Trace& t : {Trace{{n, std::nullopt, AccessKind::read}},
                               Trace{{n / 2, std::nullopt, AccessKind::read}, {n - n / 2, std::nullopt, AccessKind::read}}}) {
            CpuCore core = make_core(t);
            Recorder rec;
            std::uint64_t cycles = 0;
            while (core.retired_instructions() < n) {
                core.tick(true, rec);
                ++cycles;
            }
            EXPECT_EQ(cycles, (n + 2) / 3) << "n=" << n;
            EXPECT_EQ(core.retired_instructions(), n);
        }
    }
}

TEST(CpuCore, ReadWindowLimitsRunahead) {
    CpuParams p;
    p.window = 8;
    CpuCore core = make_core({{0, 0x40, AccessKind::read}, {100, std::nullopt, AccessKind::read}}, p);
    Recorder rec;
    for (int i = 0; i < 20; ++i) core.tick(true, rec);
    EXPECT_EQ(core.retired_instructions(), 8u);
    core.on_complete(0);
    for (int i = 0; i < 40; ++i) core.tick(true, rec);
    EXPECT_EQ(core.retired_instructions(), 101u);
}

TEST(Hwa, AllRequestsCompleteMeetsDeadline) {
    const DramConfig d = ddr3_1333_preset();
    Hwa h(AgentId{1}, hwa_spec(160, 8), d);
    run_period(h, 0, 0);
    EXPECT_FALSE(h.begin_cycle(159));
    const auto r = h.begin_cycle(160);
    ASSERT_TRUE(r);
    EXPECT_TRUE(r->closed_previous);
    EXPECT_TRUE(r->met);
    EXPECT_EQ(h.stats().deadlines_met, 1u);
}

TEST(Hwa, ZeroRequestsAlwaysMeets) {
    Hwa h(AgentId{1}, hwa_spec(10, 0), ddr3_1333_preset());
    for (Cycle c = 0; c <= 100; c += 10) run_period(h, c, 0);
    EXPECT_EQ(h.stats().deadlines_met, 10u);
    EXPECT_EQ(h.stats().deadlines_missed, 0u);
}

TEST(Hwa, EmitsUnderInflightCapInAddressOrder) {
    HwaSpec s = hwa_spec(1000, 40);
    s.base = 4096;
    s.max_inflight = 16;
    const DramConfig d = ddr3_1333_preset();
    Hwa h(AgentId{1}, s, d);
    h.begin_cycle(0);
    std::vector<Address> sent;
    h.emit_requests([&](const Emission& e) { return sent.push_back(e.address), true; });
    ASSERT_EQ(sent.size(), 16u);
    for (std::size_t i = 0; i < sent.size(); ++i) EXPECT_EQ(sent[i], 4096 + i * d.line_size);
    EXPECT_EQ(h.pending_emission(), 24u);
}

TEST(Hwa, CompletionOnBoundaryCycleCounts) {
    SystemConfig s;
    s.dram.channels = 1;
    s.dram.banks_per_rank = 1;
    s.dram.uniform_latency = 10;
    s.hwas.push_back(hwa_spec(10, 1));
    s.policy.kind = PolicyKind::frfcfs;
    Simulation sim(s, SimOptions{false, true});
    const SimResult r = sim.run(31);
    ASSERT_FALSE(r.issues.empty());
    EXPECT_EQ(r.issues[0].completion, 10u);
    EXPECT_EQ(r.hwas[0].stats.deadlines_met, 3u);
    EXPECT_EQ(r.hwas[0].stats.deadlines_missed, 0u);
}

TEST(Frames, AnyMissDropsTheFrame) {
    Hwa h(AgentId{1}, hwa_spec(10, 2, 4), ddr3_1333_preset());
    for (int p = 0; p < 8; ++p) run_period(h, 10 * static_cast<Cycle>(p), p == 2 ? 1 : 0);
    h.begin_cycle(80);
    EXPECT_EQ(h.stats().frames_total, 2u);
    EXPECT_EQ(h.stats().frames_dropped, 1u);
    EXPECT_EQ(h.stats().deadlines_missed, 1u);
}

TEST(Frames, ThirtyFramesOneDroppedIs29Fps) {
    DeadlineStats s;
    for (int f = 0; f < 30; ++f) {
        s.current_frame_missed = f == 7;
        record_frame_outcome(s);
    }
    HwaRunStats h{"h", 30, 0, s.frames_total, s.frames_dropped, 30.0};
    ASSERT_TRUE(frame_rate(h));
    EXPECT_DOUBLE_EQ(*frame_rate(h), 29.0);
}

TEST(Synth, ZeroMpkiHasNoMemoryRecords) {
    const Trace t = synthesize_trace(SynthProfile{0.0, 100000, 0.5, 1}, ddr3_1333_preset());
    EXPECT_EQ(summarize(t).memory_records, 0u);
    EXPECT_EQ(summarize(t).instructions, 100000u);
}

TEST(Synth, RecordCountTracksMpki) {
    const Trace t = synthesize_trace(SynthProfile{25.0, 1'000'000, 0.5, 3}, ddr3_1333_preset());
    const auto s = summarize(t);
    EXPECT_NEAR(static_cast<double>(s.memory_records), 25000.0, 1250.0);
    EXPECT_NEAR(s.mpki(), 25.0, 1.25);
}

TEST(Synth, FullLocalityWalksRows) {
    const DramConfig d = ddr3_1333_preset();
    const Trace t = synthesize_trace(SynthProfile{50.0, 200'000, 1.0, 5}, d);
    ASSERT_GT(t.size(), 1000u);
    std::size_t row_changes = 0;
    for (std::size_t i = 1; i < t.size(); ++i) {
        const DramCoords a = decode_address(*t[i - 1].address, d);
        const DramCoords b = decode_address(*t[i].address, d);
        EXPECT_EQ(a.channel, b.channel);
        EXPECT_EQ(a.bank, b.bank);
        if (a.row == b.row) {
            EXPECT_EQ(b.column, a.column + 1);
        } else {
            ++row_changes;
            EXPECT_EQ(a.column, d.columns_per_row - 1);
            EXPECT_EQ(b.column, 0u);
        }
    }
    EXPECT_LE(row_changes, t.size() / d.columns_per_row + 1);
}

TEST(Synth, SameSeedSameTrace) {
    const SynthProfile p{10.0, 50000, 0.7, 42};
    EXPECT_EQ(synthesize_trace(p, ddr3_1333_preset()), synthesize_trace(p, ddr3_1333_preset()));
}

TEST(Simulation, InflightCapsHold) {
    SystemConfig s;
    for (int i = 0; i < 4; ++i) {
        auto t = std::make_shared<Trace>(synthesize_trace(SynthProfile{80.0, 200'000, 0.5, 10u + i}, s.dram));
        s.cpus.push_back({"c" + std::to_string(i), t, std::nullopt});
    }
    HwaSpec h = hwa_spec(20000, 600);
    h.base = s.dram.total_bytes() / 2;
    s.hwas.push_back(h);
    s.policy.kind = PolicyKind::squash;
    Simulation sim(s);
    for (int i = 0; i < 100000; ++i) {
        sim.step();
        for (std::size_t c = 0; c < s.cpus.size(); ++c) ASSERT_LE(sim.cpu(c).inflight(), 16u);
        ASSERT_LE(sim.hwa(0).inflight(), 16u);
    }
}
