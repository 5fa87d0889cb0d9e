#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "arbiter.hpp"
#include "common.hpp"
#include "dram.hpp"

namespace qosmem {

struct MemoryRequest {
    std::uint64_t id = 0;
    AgentId agent{};
    Address address = 0;
    AccessKind kind = AccessKind::read;
    DramCoords coords;
    Cycle arrival = 0;
    std::optional<Cycle> completion;
    std::uint64_t tag = 0;  ///< owner-defined (HWAs store the period index)
};

/// Base priority supplied by the active policy; the controller adds the
/// row-hit flag, arrival and sequence number.
struct RankedGroup {
    int group = 1;
    std::int64_t intra_rank = 0;
};

struct IssuedRequest {
    MemoryRequest request;
    IssueResult timing;
};

/// Request queues, bank state and arbitration for every channel. Each channel
/// issues at most one request per cycle.
///
/// The row-hit flag of a request's key means first-ready: row hits always
/// carry it, and a request that must open its row carries it too when its
/// bank has no queued row hit and its data could still make the next free
/// bus slot. On a backlogged channel this lets an older miss win over a
/// stream of younger hits to other banks.
class MemoryController {
public:
    explicit MemoryController(const DramConfig& cfg)
        : cfg_(cfg), timing_(ScaledTiming::from(cfg)), auditor_(cfg) {
        cfg_.validate();
        banks_.resize(std::size_t{cfg.channels} * cfg.banks_per_channel());
        channels_.resize(cfg.channels);
    }

    const DramConfig& config() const { return cfg_; }
    const ScaledTiming& timing() const { return timing_; }
    const TimingAuditor& auditor() const { return auditor_; }

    const BankState& bank(std::uint32_t channel, std::uint32_t bank_in_channel) const {
        return banks_[std::size_t{channel} * cfg_.banks_per_channel() + bank_in_channel];
    }

    void enqueue(MemoryRequest r) {
        auto& ch = channels_.at(r.coords.channel);
        ch.queue.push_back(std::move(r));
        ch.wake = 0;
        ++queued_;
    }

    std::size_t queued() const { return queued_; }
    std::size_t queued(std::uint32_t channel) const { return channels_[channel].queue.size(); }

    /// Removes every queued (not yet issued) request matching `pred`; returns them.
    template <class Pred>
    std::vector<MemoryRequest> purge(Pred&& pred) {
        std::vector<MemoryRequest> removed;
        for (auto& ch : channels_) {
            auto it = std::stable_partition(ch.queue.begin(), ch.queue.end(),
                                            [&](const MemoryRequest& r) { return !pred(r); });
            for (auto j = it; j != ch.queue.end(); ++j) removed.push_back(std::move(*j));
            ch.queue.erase(it, ch.queue.end());
        }
        queued_ -= removed.size();
        return removed;
    }

    /// Runs one arbitration step on every channel at `now`. `rank(request)`
    /// returns the policy's RankedGroup. Issued requests are appended to `out`.
    template <class RankFn>
    void schedule(Cycle now, RankFn&& rank, std::vector<IssuedRequest>& out) {
        for (std::uint32_t c = 0; c < cfg_.channels; ++c) schedule_channel(c, now, rank, out);
    }

private:
    struct Channel {
        std::vector<MemoryRequest> queue;
        Cycle bus_free = 0;
        Cycle wake = 0;
    };

    BankState& bank_of(const DramCoords& c) {
        return banks_[std::size_t{c.channel} * cfg_.banks_per_channel() + c.bank_in_channel(cfg_)];
    }

    template <class RankFn>
    void schedule_channel(std::uint32_t c, Cycle now, RankFn& rank, std::vector<IssuedRequest>& out) {
        Channel& ch = channels_[c];
        if (ch.queue.empty() || now < ch.wake) return;
        const Cycle horizon = timing_.decision_horizon();
        if (ch.bus_free > now + horizon) {
            ch.wake = ch.bus_free - horizon;
            return;
        }
        entries_.clear();
        kinds_.clear();
        bank_has_hit_.assign(cfg_.banks_per_channel(), false);
        for (const auto& r : ch.queue) {
            const ServiceKind kind = service_kind(r.coords.row, bank_of(r.coords));
            kinds_.push_back(kind);
            if (kind == ServiceKind::row_hit) bank_has_hit_[r.coords.bank_in_channel(cfg_)] = true;
        }
        Cycle min_ready = std::numeric_limits<Cycle>::max();
        for (std::size_t i = 0; i < ch.queue.size(); ++i) {
            const MemoryRequest& r = ch.queue[i];
            const ServiceKind kind = kinds_[i];
            const Cycle start = earliest_issue_cycle(r.coords.row, bank_of(r.coords), now, timing_);
            const RankedGroup g = rank(r);
            ArbitrationEntry e;
            e.bank = r.coords.bank_in_channel(cfg_);
            e.data_ready = start + timing_.data_offset(kind);
            const bool ready = kind == ServiceKind::row_hit || (!bank_has_hit_[e.bank] && e.data_ready <= ch.bus_free);
            e.key = PriorityKey{g.group, g.intra_rank, ready, r.arrival, r.id};
            min_ready = std::min(min_ready, e.data_ready);
            entries_.push_back(e);
        }
        const auto sel = pick_next(entries_, ChannelView{now, ch.bus_free, horizon, timing_.burst});
        if (!sel) {
            ch.wake = min_ready <= now + horizon ? now + 1 : std::max(now + 1, min_ready - horizon);
            return;
        }
        MemoryRequest req = std::move(ch.queue[sel->index]);
        ch.queue.erase(ch.queue.begin() + static_cast<std::ptrdiff_t>(sel->index));
        --queued_;

        BankState& b = bank_of(req.coords);
        const ServiceKind kind = service_kind(req.coords.row, b);
        const Cycle start = sel->data_start - timing_.data_offset(kind);
        IssueResult res = issue(req.coords.row, req.kind, b, start, timing_);
        if (auto err = auditor_.check(c, req.coords.bank_in_channel(cfg_), req.kind, res))
            throw InvariantViolation("timing audit: " + *err);
        ch.bus_free = res.completion;
        ch.wake = std::max(now + 1, ch.bus_free > horizon ? ch.bus_free - horizon : 0);
        req.completion = res.completion;
        out.push_back(IssuedRequest{std::move(req), res});
    }

    DramConfig cfg_;
    ScaledTiming timing_;
    TimingAuditor auditor_;
    std::vector<BankState> banks_;
    std::vector<Channel> channels_;
    std::vector<ArbitrationEntry> entries_;
    std::vector<ServiceKind> kinds_;
    std::vector<bool> bank_has_hit_;
    std::size_t queued_ = 0;
};

}  // namespace qosmem
