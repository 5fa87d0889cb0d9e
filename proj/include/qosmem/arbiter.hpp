#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "common.hpp"

namespace qosmem {

/// Total order over queued requests. Lower group wins, then lower intra_rank,
/// then row hits over misses, then older arrival. `sequence` (the request id)
/// breaks the remaining ties so the order is strict.
struct PriorityKey {
    int group = 1;
    std::int64_t intra_rank = 0;
    bool row_hit = false;
    Cycle arrival = 0;
    std::uint64_t sequence = 0;

    bool operator==(const PriorityKey&) const = default;
};

/// True iff `a` is served before `b`.
constexpr bool outranks(const PriorityKey& a, const PriorityKey& b) {
    if (a.group != b.group) return a.group < b.group;
    if (a.intra_rank != b.intra_rank) return a.intra_rank < b.intra_rank;
    if (a.row_hit != b.row_hit) return a.row_hit;
    if (a.arrival != b.arrival) return a.arrival < b.arrival;
    return a.sequence < b.sequence;
}

/// One queued request as seen by a channel arbiter.
struct ArbitrationEntry {
    PriorityKey key;
    std::uint32_t bank = 0;  ///< bank index within the channel
    Cycle data_ready = 0;    ///< earliest first data beat allowed by bank timing alone
};

/// Channel-wide state that constrains a decision.
struct ChannelView {
    Cycle now = 0;
    Cycle bus_free = 0;  ///< first cycle the data bus is unreserved
    Cycle horizon = 0;   ///< how far ahead of the data slot a decision is made
    Cycle burst = 1;     ///< data bus occupancy of one request
};

struct Selection {
    std::size_t index = 0;
    Cycle data_start = 0;
};

namespace detail {

inline bool blocks(const ArbitrationEntry& higher, const ArbitrationEntry& lower, Cycle lower_slot, Cycle burst) {
    return higher.bank == lower.bank || lower_slot + burst > higher.data_ready;
}

}  // namespace detail

/// Picks the request that claims the channel's next data slot.
///
/// A request is issuable when its bank lets data start within `horizon` of
/// `now`. Walking the queue in priority order, the first issuable request
/// wins unless it would delay a higher-priority request that is not yet
/// issuable: same bank, or a data burst that runs past that request's ready
/// cycle. Such a request is passed over and protects everything below it.
inline std::optional<Selection> pick_next(std::span<const ArbitrationEntry> entries, const ChannelView& ch) {
    const Cycle limit = ch.now + ch.horizon;
    if (ch.bus_free > limit) return std::nullopt;

    const auto issuable = [&](const ArbitrationEntry& e) { return e.data_ready <= limit; };
    const auto slot_of = [&](const ArbitrationEntry& e) { return std::max(ch.bus_free, e.data_ready); };

    // Fast path: best issuable request, checked against the few better ones that are not issuable.
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < entries.size(); ++i)
        if (issuable(entries[i]) && (!best || outranks(entries[i].key, entries[*best].key))) best = i;
    if (!best) return std::nullopt;

    const ArbitrationEntry& b = entries[*best];
    const Cycle slot = slot_of(b);
    bool clear = true;
    for (const auto& e : entries)
        if (!issuable(e) && outranks(e.key, b.key) && detail::blocks(e, b, slot, ch.burst)) {
            clear = false;
            break;
        }
    if (clear) return Selection{*best, slot};

    // Slow path: the full priority-order walk.
    std::vector<std::size_t> order(entries.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t x, std::size_t y) { return outranks(entries[x].key, entries[y].key); });
    std::vector<std::size_t> passed;
    for (std::size_t i : order) {
        const auto& e = entries[i];
        if (issuable(e)) {
            const Cycle s = slot_of(e);
            const bool ok = std::none_of(passed.begin(), passed.end(),
                                         [&](std::size_t p) { return detail::blocks(entries[p], e, s, ch.burst); });
            if (ok) return Selection{i, s};
        }
        passed.push_back(i);
    }
    return std::nullopt;
}

}  // namespace qosmem
