#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "common.hpp"
#include "controller.hpp"
#include "dram.hpp"
#include "rng.hpp"

namespace qosmem {

// Reference model for small single-channel FR-FCFS instances. It keeps an
// explicit per-bank command list, finds every request's earliest legal start
// by trying cycles one at a time, and applies the arbitration rule in its
// declarative form: the best-ranked issuable request that no better-ranked
// request blocks. It shares no code with the controller's timers or arbiter.

struct OracleRequest {
    std::uint64_t id = 0;
    Cycle arrival = 0;
    std::uint32_t bank = 0;
    std::uint32_t row = 0;
    AccessKind kind = AccessKind::read;
};

struct OracleOutcome {
    std::uint64_t id = 0;
    Cycle start = 0;
    Cycle data_start = 0;
    Cycle completion = 0;

    bool operator==(const OracleOutcome&) const = default;
};

namespace oracle_detail {

enum class Cmd : std::uint8_t { pre, act, rd, wr };

struct Command {
    Cmd cmd;
    Cycle at;
    std::uint32_t row;
};

struct Plan {
    std::optional<Cycle> pre, act;
    Cycle col = 0;
};

inline std::optional<std::uint32_t> open_row(const std::vector<Command>& history) {
    std::optional<std::uint32_t> row;
    for (const auto& c : history) {
        if (c.cmd == Cmd::act) row = c.row;
        if (c.cmd == Cmd::pre) row.reset();
    }
    return row;
}

inline Plan plan_at(Cycle t, std::uint32_t row, const std::vector<Command>& history, const ScaledTiming& tm) {
    Plan p;
    const auto open = open_row(history);
    if (open && *open == row) {
        p.col = t;
    } else if (!open) {
        p.act = t;
        p.col = t + tm.rcd;
    } else {
        p.pre = t;
        p.act = t + tm.rp;
        p.col = t + tm.rp + tm.rcd;
    }
    return p;
}

inline bool legal(const Plan& p, const std::vector<Command>& history, const ScaledTiming& tm) {
    for (const auto& c : history) {
        switch (c.cmd) {
            case Cmd::act:
                if (p.pre && *p.pre < c.at + tm.ras) return false;
                if (p.act && *p.act < c.at + tm.rc) return false;
                if (p.col < c.at + tm.rcd) return false;
                break;
            case Cmd::rd:
                if (p.pre && *p.pre < c.at + tm.burst) return false;
                if (p.col < c.at + tm.burst) return false;
                break;
            case Cmd::wr:
                if (p.pre && *p.pre < c.at + tm.cl + tm.burst + tm.wr) return false;
                if (p.col < c.at + tm.burst) return false;
                break;
            case Cmd::pre:
                if (p.act && *p.act < c.at + tm.rp) return false;
                break;
        }
    }
    return true;
}

}  // namespace oracle_detail

/// Completion cycle of every request on one channel with `banks` banks.
inline std::vector<OracleOutcome> oracle_frfcfs(const std::vector<OracleRequest>& requests, std::uint32_t banks,
                                                const ScaledTiming& tm) {
    using namespace oracle_detail;
    if (tm.uniform) throw ConfigError("oracle", "the reference model covers DDR timing only");
    std::vector<std::vector<Command>> history(banks);
    std::vector<std::pair<Cycle, Cycle>> bus;  // reserved data windows
    std::vector<bool> done(requests.size(), false);
    std::vector<OracleOutcome> out;
    const Cycle horizon = tm.rp + tm.rcd + tm.cl;

    for (Cycle now = 0; out.size() < requests.size(); ++now) {
        if (now > 1'000'000) throw InvariantViolation("oracle did not converge");
        Cycle bus_free = 0;
        for (const auto& w : bus) bus_free = std::max(bus_free, w.second);
        if (bus_free > now + horizon) continue;

        struct Cand {
            std::size_t idx;
            Cycle ready;  // earliest first data beat
            Cycle start;
            bool first_ready;
        };
        std::vector<Cand> queued;
        for (std::size_t i = 0; i < requests.size(); ++i) {
            if (done[i] || requests[i].arrival > now) continue;
            const auto& r = requests[i];
            Cycle t = now;
            while (!legal(plan_at(t, r.row, history[r.bank], tm), history[r.bank], tm)) ++t;
            queued.push_back({i, plan_at(t, r.row, history[r.bank], tm).col + tm.cl, t, false});
        }
        for (auto& c : queued) {
            const auto& r = requests[c.idx];
            const auto open = open_row(history[r.bank]);
            const bool hit = open && *open == r.row;
            bool bank_has_hit = false;
            for (const auto& o : queued) {
                const auto& q = requests[o.idx];
                if (q.bank == r.bank && open && *open == q.row) bank_has_hit = true;
            }
            c.first_ready = hit || (!bank_has_hit && c.ready <= bus_free);
        }
        const auto better = [&](const Cand& a, const Cand& b) {
            const auto& x = requests[a.idx];
            const auto& y = requests[b.idx];
            if (a.first_ready != b.first_ready) return a.first_ready;
            if (x.arrival != y.arrival) return x.arrival < y.arrival;
            return x.id < y.id;
        };
        const Cand* chosen = nullptr;
        for (const auto& c : queued) {
            if (c.ready > now + horizon) continue;
            const Cycle slot = std::max(bus_free, c.ready);
            bool blocked = false;
            for (const auto& o : queued)
                if (better(o, c) && (requests[o.idx].bank == requests[c.idx].bank || slot + tm.burst > o.ready))
                    blocked = true;
            if (!blocked && (!chosen || better(c, *chosen))) chosen = &c;
        }
        if (!chosen) continue;

        const auto& r = requests[chosen->idx];
        const Cycle slot = std::max(bus_free, chosen->ready);
        const Cycle lead = chosen->ready - chosen->start;
        const Cycle start = slot - lead;
        const Plan p = plan_at(start, r.row, history[r.bank], tm);
        if (!legal(p, history[r.bank], tm)) throw InvariantViolation("oracle produced an illegal plan");
        if (p.pre) history[r.bank].push_back({Cmd::pre, *p.pre, 0});
        if (p.act) history[r.bank].push_back({Cmd::act, *p.act, r.row});
        history[r.bank].push_back({r.kind == AccessKind::write ? Cmd::wr : Cmd::rd, p.col, r.row});
        const Cycle data = p.col + tm.cl;
        bus.emplace_back(data, data + tm.burst);
        done[chosen->idx] = true;
        out.push_back(OracleOutcome{r.id, start, data, data + tm.burst});
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return out;
}

/// One-channel memory holding `banks` banks with a few short rows.
inline DramConfig oracle_memory(std::uint32_t banks, const TimingParams& timing = {}) {
    DramConfig d;
    d.channels = 1;
    d.ranks_per_channel = 1;
    d.banks_per_rank = banks;
    d.rows_per_bank = 4;
    d.columns_per_row = 4;
    d.timing = timing;
    d.cpu_cycles_per_dram_cycle = 1;
    return d;
}

/// Feeds the same requests through MemoryController with a single priority group.
inline std::vector<OracleOutcome> replay_on_controller(const std::vector<OracleRequest>& requests, const DramConfig& cfg) {
    MemoryController mc(cfg);
    std::vector<IssuedRequest> issued;
    std::vector<OracleOutcome> out;
    std::vector<const OracleRequest*> pending;
    for (const auto& r : requests) pending.push_back(&r);
    std::sort(pending.begin(), pending.end(), [](auto* a, auto* b) { return a->arrival < b->arrival; });
    std::size_t next = 0;
    for (Cycle now = 0; out.size() < requests.size(); ++now) {
        if (now > 1'000'000) throw InvariantViolation("controller replay did not converge");
        for (; next < pending.size() && pending[next]->arrival == now; ++next) {
            const OracleRequest& r = *pending[next];
            MemoryRequest m;
            m.id = r.id;
            m.coords = DramCoords{0, 0, r.bank, r.row, 0};
            m.address = encode_address(m.coords, cfg);
            m.kind = r.kind;
            m.arrival = r.arrival;
            mc.enqueue(m);
        }
        issued.clear();
        mc.schedule(now, [](const MemoryRequest&) { return RankedGroup{1, 0}; }, issued);
        for (const auto& i : issued)
            out.push_back(OracleOutcome{i.request.id, i.timing.start, i.timing.data_start, i.timing.completion});
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return out;
}

/// Up to `max_requests` requests over `banks` banks and 4 rows, arriving in [0, 400).
inline std::vector<OracleRequest> random_tiny_instance(std::uint64_t seed, std::uint32_t banks,
                                                       std::uint32_t max_requests) {
    Rng rng(seed);
    const auto n = static_cast<std::uint32_t>(1 + rng.below(max_requests));
    std::vector<OracleRequest> out;
    for (std::uint32_t i = 0; i < n; ++i) {
        OracleRequest r;
        r.id = i;
        r.arrival = rng.below(400);
        r.bank = static_cast<std::uint32_t>(rng.below(banks));
        r.row = static_cast<std::uint32_t>(rng.below(4));
        r.kind = rng.bernoulli(0.3) ? AccessKind::write : AccessKind::read;
        out.push_back(r);
    }
    return out;
}

}  // namespace qosmem
