#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "common.hpp"
#include "rng.hpp"

namespace qosmem {

/// Progress counters of a long-deadline-period HWA.
struct LdpCounters {
    std::uint64_t curr_req = 0;
    std::uint64_t total_req = 0;
    Cycle curr_cyc = 0;
    Cycle total_cyc = 1;
    double pb = 0.0;
    bool was_nonurgent_before = false;  ///< set by the first non-urgent placement of a period
    bool urgent = true;
};

/// Urgent-window counters of a short-deadline-period HWA.
struct SdpCounters {
    Cycle priority_cyc = 0;  ///< offset within the period where the urgent window opens
    Cycle curr_cyc = 0;
    Cycle total_cyc = 1;
    Cycle upl = 0;
    bool urgent = false;
};

/// Fraction of this period's requests completed; 1.0 when the period has none.
inline double current_progress(const LdpCounters& c) {
    if (c.total_req == 0) return 1.0;
    return static_cast<double>(c.curr_req) / static_cast<double>(c.total_req);
}

/// Fraction of the period elapsed.
inline double expected_progress(const LdpCounters& c) {
    return static_cast<double>(c.curr_cyc) / static_cast<double>(c.total_cyc);
}

/// Sign of current - expected progress, evaluated exactly in integers.
inline int compare_progress(const LdpCounters& c) {
    const unsigned __int128 done = c.total_req ? c.curr_req : 1;
    const unsigned __int128 total = c.total_req ? c.total_req : 1;
    const unsigned __int128 lhs = done * c.total_cyc;
    const unsigned __int128 rhs = static_cast<unsigned __int128>(c.curr_cyc) * total;
    return lhs < rhs ? -1 : (lhs > rhs ? 1 : 0);
}

/// Urgent iff CurrentProgress <= ExpectedProgress, or ExpectedProgress > threshold.
inline bool classify_ldp_urgency(const LdpCounters& c, double emergent_threshold) {
    return compare_progress(c) <= 0 || expected_progress(c) > emergent_threshold;
}

struct SdpTask {
    AgentId id{};
    Cycle period = 1;
    std::uint32_t requests = 0;
};

struct UplResult {
    AgentId id{};
    Cycle upl = 0;
    Cycle priority_cyc = 0;
};

/// Urgent period lengths for a set of SDP HWAs.
///
/// Shorter period means higher priority (ties: lower id). Each HWA starts
/// from tRC * requests + slack and is extended by ceil(upl / period(i)) whole
/// urgent windows of every higher-priority HWA i, re-evaluated on the extended
/// window until it stops growing. Results are returned in input order.
/// Throws ConfigError if an extended window exceeds its period.
inline std::vector<UplResult> compute_upl(std::span<const SdpTask> tasks, Cycle trc, Cycle slack) {
    std::vector<std::size_t> order(tasks.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (tasks[a].period != tasks[b].period) return tasks[a].period < tasks[b].period;
        return to_index(tasks[a].id) < to_index(tasks[b].id);
    });
    std::vector<UplResult> out(tasks.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
        const SdpTask& x = tasks[order[k]];
        if (x.period < 1) throw ConfigError("hwa.period", "must be >= 1 cycle");
        const Cycle base = trc * x.requests + slack;
        Cycle upl = base;
        for (;;) {
            Cycle next = base;
            for (std::size_t j = 0; j < k; ++j) {
                const SdpTask& hp = tasks[order[j]];
                next += (upl + hp.period - 1) / hp.period * out[order[j]].upl;
            }
            // Monotone in upl, so this either settles or passes the period.
            if (next == upl || next > x.period) {
                upl = next;
                break;
            }
            upl = next;
        }
        if (upl > x.period)
            throw ConfigError("hwa[" + std::to_string(to_index(x.id)) + "].period",
                              "urgent period length " + std::to_string(upl) + " exceeds the deadline period " +
                                  std::to_string(x.period) + "; deadline cannot be guaranteed");
        out[order[k]] = UplResult{x.id, upl, x.period - upl};
    }
    return out;
}

enum class PbDraw : std::uint8_t { swap, no_swap };

/// swap: memory-intensive CPUs outrank this HWA until the next draw.
inline PbDraw draw_pb(const LdpCounters& c, Rng& rng) {
    return rng.bernoulli(c.pb) ? PbDraw::swap : PbDraw::no_swap;
}

inline void update_pb(LdpCounters& c, double inc = 0.01, double dec = 0.05) {
    const int cmp = compare_progress(c);
    if (cmp > 0)
        c.pb += inc;
    else if (cmp < 0)
        c.pb -= dec;
    c.pb = std::clamp(c.pb, 0.0, 1.0);
}

enum class NonUrgentGroup : std::uint8_t { group4, group6 };

/// Group for an LDP HWA entering the non-urgent state: group 6 the first time
/// in a period, group 4 on every later re-entry.
inline NonUrgentGroup place_nonurgent_ldp(LdpCounters& c) {
    if (!c.was_nonurgent_before) {
        c.was_nonurgent_before = true;
        return NonUrgentGroup::group6;
    }
    return NonUrgentGroup::group4;
}

/// New period: counters restart, totals reload, pb carries over, and the HWA
/// starts out urgent.
inline void end_of_period_reset(LdpCounters& c, std::uint64_t total_req, Cycle total_cyc) {
    c.curr_req = 0;
    c.curr_cyc = 0;
    c.total_req = total_req;
    c.total_cyc = std::max<Cycle>(total_cyc, 1);
    c.was_nonurgent_before = false;
    c.urgent = true;
}

inline void end_of_period_reset(SdpCounters& c, Cycle total_cyc) {
    c.curr_cyc = 0;
    c.total_cyc = std::max<Cycle>(total_cyc, 1);
    c.priority_cyc = c.total_cyc > c.upl ? c.total_cyc - c.upl : 0;
    c.urgent = c.priority_cyc == 0;
}

}  // namespace qosmem
