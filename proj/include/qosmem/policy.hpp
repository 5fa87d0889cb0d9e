#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "agents.hpp"
#include "common.hpp"
#include "controller.hpp"
#include "meta.hpp"
#include "rng.hpp"

namespace qosmem {

// Policies assign one RankedGroup per agent (indexed by agent id). Every
// queued request of an agent shares it; the controller completes the key
// with the request's row-hit flag, arrival cycle and id.

enum class PolicyKind : std::uint8_t { frfcfs, frfcfs_st, tcm_st, frfcfs_dyn, squash };

inline const char* to_string(PolicyKind k) {
    switch (k) {
        case PolicyKind::frfcfs: return "frfcfs";
        case PolicyKind::frfcfs_st: return "frfcfs-st";
        case PolicyKind::tcm_st: return "tcm-st";
        case PolicyKind::frfcfs_dyn: return "frfcfs-dyn";
        case PolicyKind::squash: return "squash";
    }
    return "?";
}

inline PolicyKind parse_policy_kind(const std::string& name) {
    for (PolicyKind k : {PolicyKind::frfcfs, PolicyKind::frfcfs_st, PolicyKind::tcm_st, PolicyKind::frfcfs_dyn,
                         PolicyKind::squash})
        if (name == to_string(k)) return k;
    throw ConfigError("policy.name", "unknown policy '" + name + "' (frfcfs|frfcfs-st|tcm-st|frfcfs-dyn|squash)");
}

/// Which parts of the squash priority scheme are active.
///  - app_aware: CPU clustering and a separate group for re-entered non-urgent LDP HWAs
///  - short_deadline: worst-case urgent windows for SDP HWAs and the six-group order
///  - probabilistic: Pb swaps between non-urgent LDP HWAs and intensive CPUs
struct SquashComponents {
    bool app_aware = true;
    bool short_deadline = true;
    bool probabilistic = true;

    bool operator==(const SquashComponents&) const = default;
};

/// "D", "D+L", "D+L+S" or "D+L+S+P".
inline SquashComponents parse_squash_components(const std::string& s) {
    if (s == "D") return {false, false, false};
    if (s == "D+L") return {true, false, false};
    if (s == "D+L+S") return {true, true, false};
    if (s == "D+L+S+P") return {true, true, true};
    throw ConfigError("policy.components", "expected D, D+L, D+L+S or D+L+S+P, got '" + s + "'");
}

inline std::string to_string(const SquashComponents& c) {
    std::string s = "D";
    if (c.app_aware) s += "+L";
    if (c.short_deadline) s += "+S";
    if (c.probabilistic) s += "+P";
    return s;
}

// ---------------------------------------------------------------------------
// TCM clustering
// ---------------------------------------------------------------------------

struct CpuRank {
    Cluster cluster = Cluster::non_intensive;
    std::int64_t rank = 0;

    bool operator==(const CpuRank&) const = default;
};

struct CoreQuantumStats {
    double mpki = 0.0;
    std::uint64_t bandwidth_bytes = 0;
};

struct TcmState {
    double cluster_factor = 0.2;
    Cycle quantum = 1'000'000;
    Cycle shuffle_interval = 800;
    std::vector<CpuRank> ranks;                ///< per core
    std::vector<std::uint32_t> permutation;    ///< intensive cores, highest rank first
    Rng rng{0};
};

inline void refresh_intensive_ranks(TcmState& s) {
    for (std::size_t i = 0; i < s.permutation.size(); ++i)
        s.ranks[s.permutation[i]].rank = static_cast<std::int64_t>(i);
}

/// Clusters from static MPKI estimates: above 5 is intensive. Non-intensive
/// cores rank by ascending MPKI, intensive ones start in ascending-MPKI order.
inline void tcm_initialize(TcmState& s, std::span<const double> mpki_estimates) {
    std::vector<std::uint32_t> order(mpki_estimates.size());
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return mpki_estimates[a] < mpki_estimates[b]; });
    s.ranks.assign(mpki_estimates.size(), CpuRank{});
    s.permutation.clear();
    std::int64_t next = 0;
    for (std::uint32_t core : order) {
        if (mpki_estimates[core] > 5.0)
            s.permutation.push_back(core);
        else
            s.ranks[core] = CpuRank{Cluster::non_intensive, next++};
    }
    for (std::uint32_t core : s.permutation) s.ranks[core].cluster = Cluster::intensive;
    refresh_intensive_ranks(s);
}

/// Admission scan at a quantum boundary: cores sorted by ascending MPKI join
/// the non-intensive cluster while their cumulative bandwidth stays within
/// cluster_factor of the total; the rest are intensive.
inline void tcm_requantize(TcmState& s, std::span<const CoreQuantumStats> stats) {
    if (!(s.cluster_factor >= 0.0 && s.cluster_factor <= 1.0))
        throw ConfigError("policy.cluster_factor", "must lie in [0, 1]");
    std::vector<std::uint32_t> order(stats.size());
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return stats[a].mpki < stats[b].mpki; });
    std::uint64_t total = 0;
    for (const auto& c : stats) total += c.bandwidth_bytes;

    s.ranks.assign(stats.size(), CpuRank{});
    std::vector<std::uint32_t> intensive;
    const long double budget = static_cast<long double>(s.cluster_factor) * static_cast<long double>(total);
    std::uint64_t used = 0;
    bool admitting = true;
    std::int64_t next = 0;
    for (std::uint32_t core : order) {
        if (admitting && (total == 0 || static_cast<long double>(used + stats[core].bandwidth_bytes) <= budget)) {
            used += stats[core].bandwidth_bytes;
            s.ranks[core] = CpuRank{Cluster::non_intensive, next++};
        } else {
            admitting = false;
            intensive.push_back(core);
        }
    }
    // Cores staying intensive keep their relative order; newcomers go last.
    std::vector<std::uint32_t> perm;
    for (std::uint32_t core : s.permutation)
        if (std::find(intensive.begin(), intensive.end(), core) != intensive.end()) perm.push_back(core);
    for (std::uint32_t core : intensive)
        if (std::find(perm.begin(), perm.end(), core) == perm.end()) perm.push_back(core);
    s.permutation = std::move(perm);
    for (std::uint32_t core : s.permutation) s.ranks[core].cluster = Cluster::intensive;
    refresh_intensive_ranks(s);
}

/// Uniformly random reordering of the intensive cluster.
inline void tcm_shuffle(TcmState& s) {
    s.rng.shuffle(std::span<std::uint32_t>(s.permutation));
    refresh_intensive_ranks(s);
}

// ---------------------------------------------------------------------------
// Group assignment
// ---------------------------------------------------------------------------

/// Agent layout: CPUs occupy ids [0, cpus), HWAs follow.
struct AgentLayout {
    std::size_t cpus = 0;
    std::size_t hwas = 0;

    std::size_t total() const { return cpus + hwas; }
    std::size_t hwa_index(std::size_t h) const { return cpus + h; }
};

inline std::vector<RankedGroup> assign_frfcfs(const AgentLayout& layout) {
    return std::vector<RankedGroup>(layout.total(), RankedGroup{1, 0});
}

/// HWAs in group 1; CPUs in group 2, ranked by TCM when `tcm` is given
/// (non-intensive cores ahead of intensive ones).
inline std::vector<RankedGroup> assign_static_hwa_first(const AgentLayout& layout,
                                                        std::span<const CpuRank> tcm = {}) {
    std::vector<RankedGroup> out(layout.total(), RankedGroup{1, 0});
    for (std::size_t c = 0; c < layout.cpus; ++c) {
        if (tcm.empty()) {
            out[c] = RankedGroup{2, 0};
        } else {
            const CpuRank& r = tcm[c];
            out[c] = RankedGroup{r.cluster == Cluster::non_intensive ? 2 : 3, r.rank};
        }
    }
    return out;
}

enum class DynLevel : std::uint8_t { above, same, below };

/// HWA placement relative to the CPUs from its progress.
inline DynLevel dyn_level(const LdpCounters& c, double emergent_threshold) {
    if (expected_progress(c) > emergent_threshold) return DynLevel::above;
    if (compare_progress(c) <= 0) return DynLevel::same;
    return DynLevel::below;
}

/// CPUs sit in group 2; each HWA goes to group 1, 2 or 3.
inline std::vector<RankedGroup> assign_dyn_prio(const AgentLayout& layout, std::span<const LdpCounters> hwa_progress,
                                                double emergent_threshold) {
    std::vector<RankedGroup> out(layout.total(), RankedGroup{2, 0});
    for (std::size_t h = 0; h < layout.hwas; ++h) {
        const DynLevel lvl = dyn_level(hwa_progress[h], emergent_threshold);
        out[layout.hwa_index(h)].group = lvl == DynLevel::above ? 1 : (lvl == DynLevel::same ? 2 : 3);
    }
    return out;
}

/// Per-HWA state the squash assignment consumes.
struct SquashHwaView {
    HwaClass klass = HwaClass::ldp;
    bool urgent = true;
    NonUrgentGroup placement = NonUrgentGroup::group4;
    bool pb_swap = false;
    Cycle deadline = 0;  ///< absolute end of the current period
    Cycle period = 1;
};

/// Composite intra-group rank: primary ordering value, then agent id.
inline std::int64_t composite_rank(std::uint64_t primary, std::size_t agent) {
    return static_cast<std::int64_t>((primary << 16) | (agent & 0xffff));
}

inline constexpr std::int64_t kBelowIntensiveCpus = std::int64_t{1} << 60;

/// Squash groups, best first:
///  1 urgent SDP HWAs (shorter period first)
///  2 urgent LDP HWAs (earlier deadline first)
///  3 non-intensive CPUs (lower MPKI first)
///  4 non-urgent LDP HWAs that re-entered the non-urgent state
///  5 intensive CPUs (shuffled ranks)
///  6 non-urgent SDP HWAs and LDP HWAs on their first non-urgent transition
/// A Pb swap moves a group-4 HWA to just below the intensive CPUs for one interval.
/// Without `short_deadline` every HWA is tracked by progress: urgent ones
/// share group 1 and non-urgent ones go to group 4 (`app_aware`) or 6.
inline std::vector<RankedGroup> assign_squash(const AgentLayout& layout, std::span<const CpuRank> cpus,
                                              std::span<const SquashHwaView> hwas, const SquashComponents& comps) {
    std::vector<RankedGroup> out(layout.total());
    for (std::size_t c = 0; c < layout.cpus; ++c) {
        const CpuRank& r = cpus[c];
        out[c] = RankedGroup{r.cluster == Cluster::non_intensive ? 3 : 5, composite_rank(static_cast<std::uint64_t>(r.rank), c)};
    }
    for (std::size_t h = 0; h < layout.hwas; ++h) {
        const SquashHwaView& v = hwas[h];
        const std::size_t agent = layout.hwa_index(h);
        const bool sdp = comps.short_deadline && v.klass == HwaClass::sdp;
        int group;
        std::uint64_t primary = v.deadline;
        if (v.urgent) {
            if (sdp) {
                group = 1;
                primary = v.period;
            } else {
                group = comps.short_deadline ? 2 : 1;
            }
        } else if (sdp || !comps.app_aware) {
            group = 6;
        } else if (comps.short_deadline && v.placement == NonUrgentGroup::group6) {
            group = 6;
        } else {
            group = 4;
        }
        std::int64_t rank = composite_rank(primary, agent);
        if (group == 4 && comps.probabilistic && v.pb_swap) {
            group = 5;
            rank += kBelowIntensiveCpus;
        }
        out[agent] = RankedGroup{group, rank};
    }
    return out;
}

}  // namespace qosmem
