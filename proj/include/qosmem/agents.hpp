#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "common.hpp"
#include "dram.hpp"
#include "rng.hpp"

namespace qosmem {

// ---------------------------------------------------------------------------
// Traces
// ---------------------------------------------------------------------------

/// `nonmem_instructions` compute instructions followed by at most one memory access.
struct TraceRecord {
    std::uint64_t nonmem_instructions = 0;
    std::optional<Address> address;
    AccessKind kind = AccessKind::read;

    bool operator==(const TraceRecord&) const = default;
};

using Trace = std::vector<TraceRecord>;

/// Text format, one record per line: `<nonmem_count> <hex address> <R|W>`.
/// A line holding only `<nonmem_count>` is a compute-only record; `#` starts a comment.
inline Trace parse_trace(std::istream& in, const std::string& source = "trace") {
    Trace trace;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        std::istringstream ls(line);
        std::string count_tok, addr_tok, kind_tok, extra;
        if (!(ls >> count_tok)) continue;
        const std::string where = source + ":" + std::to_string(lineno);
        TraceRecord rec;
        try {
            std::size_t used = 0;
            if (count_tok.front() == '-') throw std::invalid_argument("negative");
            rec.nonmem_instructions = std::stoull(count_tok, &used, 10);
            if (used != count_tok.size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw ConfigError(where, "bad instruction count '" + count_tok + "'");
        }
        if (ls >> addr_tok) {
            if (!(ls >> kind_tok)) throw ConfigError(where, "missing access kind (R|W)");
            if (ls >> extra) throw ConfigError(where, "unexpected token '" + extra + "'");
            try {
                std::size_t used = 0;
                rec.address = std::stoull(addr_tok, &used, 16);
                if (used != addr_tok.size()) throw std::invalid_argument("trailing");
            } catch (const std::exception&) {
                throw ConfigError(where, "bad hex address '" + addr_tok + "'");
            }
            if (kind_tok == "R" || kind_tok == "r")
                rec.kind = AccessKind::read;
            else if (kind_tok == "W" || kind_tok == "w")
                rec.kind = AccessKind::write;
            else
                throw ConfigError(where, "access kind must be R or W, got '" + kind_tok + "'");
        }
        trace.push_back(rec);
    }
    return trace;
}

inline void write_trace(std::ostream& out, const Trace& trace) {
    for (const auto& r : trace) {
        out << r.nonmem_instructions;
        if (r.address) {
            std::ostringstream hex;
            hex << std::hex << *r.address;
            out << " 0x" << hex.str() << (r.kind == AccessKind::read ? " R" : " W");
        }
        out << '\n';
    }
}

struct TraceSummary {
    std::uint64_t instructions = 0;
    std::uint64_t memory_records = 0;

    double mpki() const { return instructions ? 1000.0 * static_cast<double>(memory_records) / static_cast<double>(instructions) : 0.0; }
};

/// Memory accesses count as instructions.
inline TraceSummary summarize(const Trace& trace) {
    TraceSummary s;
    for (const auto& r : trace) {
        s.instructions += r.nonmem_instructions;
        if (r.address) {
            ++s.instructions;
            ++s.memory_records;
        }
    }
    return s;
}

struct SynthProfile {
    double mpki_target = 0.0;
    std::uint64_t instruction_count = 0;
    double locality = 0.0;  ///< probability that the next access stays in the current row
    std::uint64_t seed = 0;
    double write_fraction = 0.2;
    Address region_base = 0;
    std::uint64_t region_bytes = 0;  ///< 0 = the whole memory
};

/// Synthetic CPU trace with exponentially distributed compute gaps.
inline Trace synthesize_trace(const SynthProfile& p, const DramConfig& cfg) {
    if (!(p.mpki_target >= 0.0)) throw ConfigError("synth.mpki", "must be >= 0");
    if (p.mpki_target > 1000.0) throw ConfigError("synth.mpki", "cannot exceed 1000 misses per kilo-instruction");
    if (!(p.locality >= 0.0 && p.locality <= 1.0)) throw ConfigError("synth.locality", "must lie in [0, 1]");
    if (!(p.write_fraction >= 0.0 && p.write_fraction <= 1.0))
        throw ConfigError("synth.write_fraction", "must lie in [0, 1]");

    const std::uint64_t lines_total = cfg.total_lines();
    const std::uint64_t base_line = p.region_base / cfg.line_size;
    const std::uint64_t region_lines = p.region_bytes ? p.region_bytes / cfg.line_size : lines_total - base_line;
    if (base_line >= lines_total || region_lines == 0 || base_line + region_lines > lines_total)
        throw ConfigError("synth.region", "region outside the configured memory");

    const auto records = static_cast<std::uint64_t>(
        std::llround(static_cast<double>(p.instruction_count) * p.mpki_target / 1000.0));
    Trace trace;
    if (records == 0) {
        if (p.instruction_count) trace.push_back(TraceRecord{p.instruction_count, std::nullopt, AccessKind::read});
        return trace;
    }

    Rng rng(p.seed);
    const double mean_gap =
        static_cast<double>(p.instruction_count - std::min(records, p.instruction_count)) / static_cast<double>(records);
    const auto random_coords = [&] {
        return decode_address((base_line + rng.below(region_lines)) * cfg.line_size, cfg);
    };
    const auto in_region = [&](Address a) {
        const std::uint64_t l = a / cfg.line_size;
        return a < cfg.total_bytes() && l >= base_line && l < base_line + region_lines;
    };

    trace.reserve(records);
    DramCoords at = random_coords();
    for (std::uint64_t i = 0; i < records; ++i) {
        if (i > 0) {
            if (rng.bernoulli(p.locality)) {
                DramCoords next = at;
                if (++next.column == cfg.columns_per_row) {
                    next.column = 0;
                    next.row = (next.row + 1) % cfg.rows_per_bank;
                }
                at = in_region(encode_address(next, cfg)) ? next : random_coords();
            } else {
                at = random_coords();
            }
        }
        const double u = rng.uniform();
        const auto gap = static_cast<std::uint64_t>(std::floor(-std::log1p(-u) * mean_gap));
        const AccessKind kind = rng.bernoulli(p.write_fraction) ? AccessKind::write : AccessKind::read;
        trace.push_back(TraceRecord{gap, encode_address(at, cfg), kind});
    }
    return trace;
}

// ---------------------------------------------------------------------------
// CPU core
// ---------------------------------------------------------------------------

struct CpuParams {
    std::uint32_t issue_width = 3;
    std::uint32_t max_inflight = 16;
    /// Instructions that may retire past the oldest outstanding read; 0 disables the limit.
    std::uint32_t window = 128;
    bool wrap_trace = true;

    bool operator==(const CpuParams&) const = default;
};

enum class Cluster : std::uint8_t { non_intensive, intensive };

struct Emission {
    Address address = 0;
    AccessKind kind = AccessKind::read;
};

/// Trace-driven core with an in-flight request budget.
///
/// Each cycle the core either retires up to issue_width compute instructions
/// of the current record or, once they are exhausted, emits the record's
/// memory access (one instruction). It stalls when the in-flight budget is
/// full, when the request buffer has no room, or when the retirement point
/// is `window` instructions past the oldest outstanding read.
class CpuCore {
public:
    CpuCore(AgentId id, std::shared_ptr<const Trace> trace, CpuParams params)
        : id_(id), trace_(std::move(trace)), params_(params) {
        if (params_.issue_width < 1) throw ConfigError("cpu.issue_width", "must be >= 1");
        if (params_.max_inflight < 1) throw ConfigError("cpu.max_inflight", "must be >= 1");
        load_record(0);
    }

    AgentId id() const { return id_; }

    /// Advances one cycle. `emit(Emission) -> request id` is called when the
    /// core issues its memory access; `buffer_has_room` gates emission.
    template <class EmitFn>
    void tick(bool buffer_has_room, EmitFn&& emit) {
        if (done_) return;
        std::uint64_t budget = params_.issue_width;
        std::size_t hops = 0;
        while (!done_) {
            if (remaining_ > 0) {
                const std::uint64_t n = std::min({budget, remaining_, window_room()});
                if (n == 0) {
                    ++stall_cycles_;
                    return;
                }
                remaining_ -= n;
                retired_ += n;
                budget -= n;
                if (remaining_ > 0 || budget == 0) return;
                continue;
            }
            const TraceRecord& rec = (*trace_)[cursor_];
            if (rec.address) {
                // Leftover width carries into the next compute-only record, never into an access.
                if (budget < params_.issue_width) return;
                if (inflight_ >= params_.max_inflight || !buffer_has_room || window_room() == 0) {
                    ++stall_cycles_;
                    return;
                }
                const std::uint64_t rid = emit(Emission{*rec.address, rec.kind});
                ++inflight_;
                ++retired_;
                ++quantum_requests_;
                if (rec.kind == AccessKind::read) outstanding_.push_back({rid, retired_ - 1});
                advance();
                return;
            }
            advance();  // compute-only record: continue into the next one this cycle
            if (++hops > trace_->size()) return;  // a wrapped trace of empty records
        }
    }

    void on_complete(std::uint64_t request_id) {
        if (inflight_ == 0) throw InvariantViolation("CPU completion with no request in flight");
        --inflight_;
        std::erase_if(outstanding_, [&](const Outstanding& o) { return o.request_id == request_id; });
    }

    std::uint64_t retired_instructions() const { return retired_; }
    std::uint32_t inflight() const { return inflight_; }
    std::uint64_t stall_cycles() const { return stall_cycles_; }
    bool done() const { return done_; }

    /// Memory requests per kilo-instruction since the last quantum reset.
    double quantum_mpki() const {
        const std::uint64_t instr = retired_ - quantum_start_retired_;
        return instr ? 1000.0 * static_cast<double>(quantum_requests_) / static_cast<double>(instr) : 0.0;
    }
    std::uint64_t quantum_requests() const { return quantum_requests_; }
    void reset_quantum() {
        quantum_requests_ = 0;
        quantum_start_retired_ = retired_;
    }

private:
    struct Outstanding {
        std::uint64_t request_id;
        std::uint64_t position;
    };

    std::uint64_t window_room() const {
        if (params_.window == 0 || outstanding_.empty()) return ~std::uint64_t{0};
        std::uint64_t oldest = outstanding_.front().position;
        for (const auto& o : outstanding_) oldest = std::min(oldest, o.position);
        const std::uint64_t limit = oldest + params_.window;
        return limit > retired_ ? limit - retired_ : 0;
    }

    void load_record(std::size_t index) {
        cursor_ = index;
        if (cursor_ >= trace_->size()) {
            done_ = true;
            return;
        }
        remaining_ = (*trace_)[cursor_].nonmem_instructions;
    }

    void advance() {
        std::size_t next = cursor_ + 1;
        if (next >= trace_->size() && params_.wrap_trace && !trace_->empty()) next = 0;
        load_record(next);
    }

    AgentId id_;
    std::shared_ptr<const Trace> trace_;
    CpuParams params_;
    std::size_t cursor_ = 0;
    std::uint64_t remaining_ = 0;
    std::uint64_t retired_ = 0;
    std::uint32_t inflight_ = 0;
    std::vector<Outstanding> outstanding_;
    std::uint64_t stall_cycles_ = 0;
    std::uint64_t quantum_requests_ = 0;
    std::uint64_t quantum_start_retired_ = 0;
    bool done_ = false;
};

// ---------------------------------------------------------------------------
// Hardware accelerators
// ---------------------------------------------------------------------------

enum class HwaClass : std::uint8_t { ldp, sdp };

struct PeriodEntry {
    Cycle period = 1;
    std::uint32_t requests = 0;

    bool operator==(const PeriodEntry&) const = default;
};

struct HwaSpec {
    std::string name;
    HwaClass klass = HwaClass::ldp;
    std::vector<PeriodEntry> schedule;  ///< cycled; a single entry is a fixed period
    Address base = 0;
    std::uint64_t region_bytes = 0;     ///< 0 = unbounded (until the end of memory)
    std::uint64_t stride = 0;           ///< bytes between consecutive requests; 0 = line size
    std::uint32_t periods_per_frame = 1;
    double target_fps = 30.0;
    std::uint32_t max_inflight = 16;
    AccessKind kind = AccessKind::read;

    void validate(const std::string& where) const {
        if (schedule.empty()) throw ConfigError(where + ".period", "missing");
        for (const auto& e : schedule)
            if (e.period < 1) throw ConfigError(where + ".period", "must be >= 1 cycle");
        if (periods_per_frame < 1) throw ConfigError(where + ".periods_per_frame", "must be >= 1");
        if (max_inflight < 1) throw ConfigError(where + ".max_inflight", "must be >= 1");
        if (!(target_fps > 0.0)) throw ConfigError(where + ".target_fps", "must be > 0");
    }
};

struct DeadlineStats {
    std::uint64_t deadlines_met = 0;
    std::uint64_t deadlines_missed = 0;
    std::uint64_t frames_total = 0;
    std::uint64_t frames_dropped = 0;
    std::uint32_t periods_in_frame = 0;
    bool current_frame_missed = false;
};

/// Closes the current frame: dropped iff any of its periods missed.
inline void record_frame_outcome(DeadlineStats& s) {
    ++s.frames_total;
    if (s.current_frame_missed) ++s.frames_dropped;
    s.current_frame_missed = false;
    s.periods_in_frame = 0;
}

/// What happened at a period boundary.
struct PeriodRollover {
    bool closed_previous = false;  ///< false for the very first period
    bool met = false;
    std::uint64_t new_period = 0;
    Cycle period_start = 0;
    PeriodEntry entry;
};

/// Periodic streaming accelerator. At each period start it is handed
/// `requests` prefetches; it emits them in address order under its in-flight
/// cap. A period's deadline is met iff every request of that period has
/// completed by the boundary cycle (inclusive).
class Hwa {
public:
    Hwa(AgentId id, HwaSpec spec, const DramConfig& cfg) : id_(id), spec_(std::move(spec)), line_size_(cfg.line_size) {
        spec_.validate("hwa." + spec_.name);
        if (spec_.stride == 0) spec_.stride = cfg.line_size;
        region_ = spec_.region_bytes ? spec_.region_bytes : cfg.total_bytes() - spec_.base;
        if (spec_.base >= cfg.total_bytes() || spec_.base + region_ > cfg.total_bytes())
            throw ConfigError("hwa." + spec_.name + ".base", "region outside the configured memory");
    }

    AgentId id() const { return id_; }
    const HwaSpec& spec() const { return spec_; }

    /// Handles a period boundary at `now`, if one falls here. Completions for
    /// `now` must already have been delivered.
    std::optional<PeriodRollover> begin_cycle(Cycle now) {
        if (started_ && now < period_start_ + entry_.period) return std::nullopt;
        PeriodRollover r;
        if (started_) {
            r.closed_previous = true;
            r.met = completed_ == entry_.requests;
            if (r.met) {
                ++stats_.deadlines_met;
            } else {
                ++stats_.deadlines_missed;
                stats_.current_frame_missed = true;
            }
            if (++stats_.periods_in_frame == spec_.periods_per_frame) record_frame_outcome(stats_);
            ++period_;
            schedule_pos_ = (schedule_pos_ + 1) % spec_.schedule.size();
        }
        started_ = true;
        entry_ = spec_.schedule[schedule_pos_];
        period_start_ = now;
        to_emit_ = entry_.requests;
        completed_ = 0;
        r.new_period = period_;
        r.period_start = now;
        r.entry = entry_;
        return r;
    }

    /// Emits as many of this period's requests as the caps allow.
    /// `emit(Emission) -> bool` returns false when the request buffer is full.
    template <class EmitFn>
    void emit_requests(EmitFn&& emit) {
        while (to_emit_ > 0 && inflight_ < spec_.max_inflight) {
            const Address a = spec_.base + (offset_ % region_);
            if (!emit(Emission{a - a % line_size_, spec_.kind})) return;
            offset_ += spec_.stride;
            --to_emit_;
            ++inflight_;
        }
    }

    void on_complete(std::uint64_t period_tag) {
        if (inflight_ == 0) throw InvariantViolation("HWA completion with no request in flight");
        --inflight_;
        if (period_tag == period_) ++completed_;
    }

    /// Requests dropped from the controller queue without being served.
    void on_abandoned(std::size_t count) {
        if (count > inflight_) throw InvariantViolation("HWA abandoned more requests than in flight");
        inflight_ -= static_cast<std::uint32_t>(count);
    }

    std::uint64_t period() const { return period_; }
    Cycle period_start() const { return period_start_; }
    Cycle period_length() const { return entry_.period; }
    std::uint32_t period_requests() const { return entry_.requests; }
    std::uint32_t completed_this_period() const { return completed_; }
    std::uint32_t inflight() const { return inflight_; }
    std::uint32_t pending_emission() const { return to_emit_; }
    const DeadlineStats& stats() const { return stats_; }

private:
    AgentId id_;
    HwaSpec spec_;
    std::uint32_t line_size_;
    std::uint64_t region_ = 0;
    bool started_ = false;
    std::uint64_t period_ = 0;
    std::size_t schedule_pos_ = 0;
    PeriodEntry entry_;
    Cycle period_start_ = 0;
    std::uint32_t to_emit_ = 0;
    std::uint32_t completed_ = 0;
    std::uint32_t inflight_ = 0;
    std::uint64_t offset_ = 0;
    DeadlineStats stats_;
};

}  // namespace qosmem
