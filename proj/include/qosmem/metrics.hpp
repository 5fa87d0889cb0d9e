#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "common.hpp"

namespace qosmem {

/// Raised when a metric is requested without the inputs it needs.
class MetricError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct CoreRunStats {
    std::string name;
    std::uint64_t shared_instructions = 0;
    Cycle shared_cycles = 0;
    std::optional<std::uint64_t> alone_instructions;
    std::optional<Cycle> alone_cycles;

    double shared_ipc() const {
        return shared_cycles ? static_cast<double>(shared_instructions) / static_cast<double>(shared_cycles) : 0.0;
    }

    double alone_ipc() const {
        if (!alone_instructions || !alone_cycles) throw MetricError("core '" + name + "' has no alone run");
        if (*alone_cycles == 0 || *alone_instructions == 0)
            throw MetricError("core '" + name + "' retired nothing when running alone");
        return static_cast<double>(*alone_instructions) / static_cast<double>(*alone_cycles);
    }
};

struct HwaRunStats {
    std::string name;
    std::uint64_t deadlines_met = 0;
    std::uint64_t deadlines_missed = 0;
    std::uint64_t frames_total = 0;
    std::uint64_t frames_dropped = 0;
    double target_fps = 30.0;
};

struct RunStats {
    std::vector<CoreRunStats> cores;
    std::vector<HwaRunStats> hwas;
};

/// Sum over cores of shared IPC / alone IPC.
inline double weighted_speedup(const RunStats& s) {
    double ws = 0.0;
    for (const auto& c : s.cores) ws += c.shared_ipc() / c.alone_ipc();
    return ws;
}

/// Largest alone IPC / shared IPC; infinity when some core made no progress.
inline double maximum_slowdown(const RunStats& s) {
    double ms = 0.0;
    for (const auto& c : s.cores) {
        const double alone = c.alone_ipc();
        const double shared = c.shared_ipc();
        if (shared == 0.0) return std::numeric_limits<double>::infinity();
        ms = std::max(ms, alone / shared);
    }
    return ms;
}

/// Absent until at least one period has completed.
inline std::optional<double> deadline_met_ratio(const HwaRunStats& h) {
    const std::uint64_t periods = h.deadlines_met + h.deadlines_missed;
    if (periods == 0) return std::nullopt;
    return static_cast<double>(h.deadlines_met) / static_cast<double>(periods);
}

/// target_fps scaled by the fraction of frames kept; absent before the first frame closes.
inline std::optional<double> frame_rate(const HwaRunStats& h) {
    if (h.frames_total == 0) return std::nullopt;
    if (h.frames_dropped > h.frames_total) throw MetricError("hwa '" + h.name + "' dropped more frames than it ran");
    return h.target_fps * static_cast<double>(h.frames_total - h.frames_dropped) / static_cast<double>(h.frames_total);
}

}  // namespace qosmem
