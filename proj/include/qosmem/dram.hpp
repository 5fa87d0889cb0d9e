#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "common.hpp"

namespace qosmem {

/// DRAM timing parameters, in DRAM clock cycles.
struct TimingParams {
    std::uint32_t tRC = 33;     ///< ACT to ACT, same bank
    std::uint32_t tRCD = 9;     ///< ACT to column command
    std::uint32_t tCL = 9;      ///< column command to first data beat
    std::uint32_t tRP = 9;      ///< PRE to ACT
    std::uint32_t tWR = 10;     ///< end of write data to PRE
    std::uint32_t tBURST = 4;   ///< data beats of one line on the bus
    double clock_period_ns = 1.5;

    /// Minimum ACT to PRE; the row cycle splits into row-active and precharge time.
    std::uint32_t tRAS() const { return tRC - tRP; }

    void validate() const {
        const auto positive = [](std::uint32_t v, const char* name) {
            if (v < 1) throw ConfigError(std::string("dram.timing.") + name, "must be >= 1");
        };
        positive(tRC, "tRC");
        positive(tRCD, "tRCD");
        positive(tCL, "tCL");
        positive(tRP, "tRP");
        positive(tWR, "tWR");
        positive(tBURST, "tBURST");
        if (!(clock_period_ns > 0.0)) throw ConfigError("dram.timing.clock_period_ns", "must be > 0");
        if (tRC < tRCD + tRP) throw ConfigError("dram.timing.tRC", "must be >= tRCD + tRP");
    }

    bool operator==(const TimingParams&) const = default;
};

struct DramConfig {
    std::uint32_t channels = 2;
    std::uint32_t ranks_per_channel = 1;
    std::uint32_t banks_per_rank = 8;
    std::uint32_t rows_per_bank = 32768;
    std::uint32_t columns_per_row = 128;  ///< line-sized columns per row
    std::uint32_t line_size = 64;         ///< bytes
    TimingParams timing;
    std::uint32_t request_buffer_entries = 300;
    std::uint32_t buffer_split_cpu = 150;  ///< entries reserved for CPU requests; the rest go to HWAs
    std::uint32_t cpu_cycles_per_dram_cycle = 4;
    /// Idealized bank: every request occupies its bank for exactly this many
    /// simulator cycles regardless of row state. Used for small worked examples.
    std::optional<Cycle> uniform_latency;

    void validate() const {
        const auto positive = [](std::uint64_t v, const char* name) {
            if (v < 1) throw ConfigError(std::string("dram.") + name, "must be >= 1");
        };
        positive(channels, "channels");
        positive(ranks_per_channel, "ranks_per_channel");
        positive(banks_per_rank, "banks_per_rank");
        positive(rows_per_bank, "rows_per_bank");
        positive(columns_per_row, "columns_per_row");
        positive(line_size, "line_size");
        positive(request_buffer_entries, "request_buffer_entries");
        positive(cpu_cycles_per_dram_cycle, "cpu_cycles_per_dram_cycle");
        if (!std::has_single_bit(line_size)) throw ConfigError("dram.line_size", "must be a power of two");
        if (buffer_split_cpu > request_buffer_entries)
            throw ConfigError("dram.buffer_split_cpu", "must be <= request_buffer_entries");
        if (uniform_latency && *uniform_latency < 1)
            throw ConfigError("dram.uniform_latency", "must be >= 1");
        timing.validate();
    }

    std::uint32_t banks_per_channel() const { return ranks_per_channel * banks_per_rank; }

    std::uint64_t total_lines() const {
        return std::uint64_t{channels} * ranks_per_channel * banks_per_rank * rows_per_bank * columns_per_row;
    }

    std::uint64_t total_bytes() const { return total_lines() * line_size; }

    bool operator==(const DramConfig&) const = default;
};

/// DDR3-1333 (9-9-9), 2 channels, 1 rank/channel, 8 banks/rank, 300 request
/// buffer entries split evenly between CPUs and HWAs. Timings follow the
/// Micron -15E speed bin: tRCD = tRP = 13.5 ns, tRAS = 36 ns, tRC = 49.5 ns,
/// tWR = 15 ns, BL8. The 2.66 GHz core clock is ~4 CPU cycles per DRAM cycle.
inline DramConfig ddr3_1333_preset() { return DramConfig{}; }

struct DramCoords {
    std::uint32_t channel = 0;
    std::uint32_t rank = 0;
    std::uint32_t bank = 0;
    std::uint32_t row = 0;
    std::uint32_t column = 0;

    /// Bank index within the channel.
    std::uint32_t bank_in_channel(const DramConfig& cfg) const { return rank * cfg.banks_per_rank + bank; }

    bool operator==(const DramCoords&) const = default;
};

/// Line-interleaved mapping, least significant first:
/// offset | channel | bank | rank | column | row.
inline DramCoords decode_address(Address address, const DramConfig& cfg) {
    if (address >= cfg.total_bytes())
        throw ConfigError("address", "address " + std::to_string(address) + " outside the configured memory");
    std::uint64_t line = address / cfg.line_size;
    DramCoords c;
    c.channel = static_cast<std::uint32_t>(line % cfg.channels);
    line /= cfg.channels;
    c.bank = static_cast<std::uint32_t>(line % cfg.banks_per_rank);
    line /= cfg.banks_per_rank;
    c.rank = static_cast<std::uint32_t>(line % cfg.ranks_per_channel);
    line /= cfg.ranks_per_channel;
    c.column = static_cast<std::uint32_t>(line % cfg.columns_per_row);
    line /= cfg.columns_per_row;
    c.row = static_cast<std::uint32_t>(line);
    return c;
}

inline Address encode_address(const DramCoords& c, const DramConfig& cfg) {
    std::uint64_t line = c.row;
    line = line * cfg.columns_per_row + c.column;
    line = line * cfg.ranks_per_channel + c.rank;
    line = line * cfg.banks_per_rank + c.bank;
    line = line * cfg.channels + c.channel;
    return line * cfg.line_size;
}

enum class ServiceKind : std::uint8_t { row_hit, row_miss, row_closed };

inline const char* to_string(ServiceKind k) {
    switch (k) {
        case ServiceKind::row_hit: return "row_hit";
        case ServiceKind::row_miss: return "row_miss";
        case ServiceKind::row_closed: return "row_closed";
    }
    return "?";
}

struct BankState {
    std::optional<std::uint32_t> open_row;
    Cycle next_activate = 0;
    Cycle next_column = 0;
    Cycle next_precharge = 0;
};

inline ServiceKind service_kind(std::uint32_t row, const BankState& bank) {
    if (!bank.open_row) return ServiceKind::row_closed;
    return *bank.open_row == row ? ServiceKind::row_hit : ServiceKind::row_miss;
}

/// Timing in simulator cycles, derived once from a DramConfig.
struct ScaledTiming {
    Cycle rc = 0, rcd = 0, cl = 0, rp = 0, wr = 0, burst = 0, ras = 0;
    bool uniform = false;

    static ScaledTiming from(const DramConfig& cfg) {
        ScaledTiming s;
        if (cfg.uniform_latency) {
            s.uniform = true;
            s.burst = *cfg.uniform_latency;
            s.rc = s.burst;
            return s;
        }
        const Cycle k = cfg.cpu_cycles_per_dram_cycle;
        const auto& t = cfg.timing;
        s.rc = t.tRC * k;
        s.rcd = t.tRCD * k;
        s.cl = t.tCL * k;
        s.rp = t.tRP * k;
        s.wr = t.tWR * k;
        s.burst = t.tBURST * k;
        s.ras = t.tRAS() * k;
        return s;
    }

    /// Cycles from the start of a request's command sequence to its column command.
    Cycle column_offset(ServiceKind k) const {
        if (uniform) return 0;
        switch (k) {
            case ServiceKind::row_hit: return 0;
            case ServiceKind::row_closed: return rcd;
            case ServiceKind::row_miss: return rp + rcd;
        }
        return 0;
    }

    /// Cycles from sequence start to the first data beat.
    Cycle data_offset(ServiceKind k) const { return uniform ? 0 : column_offset(k) + cl; }

    /// Service time of one isolated request (sequence start to completion).
    Cycle service_latency(ServiceKind k) const { return data_offset(k) + burst; }

    /// Lookahead of the channel arbiter: the longest sequence-start to data lead.
    Cycle decision_horizon() const { return uniform ? 0 : rp + rcd + cl; }
};

namespace detail {
inline Cycle sat_sub(Cycle a, Cycle b) { return a > b ? a - b : 0; }
}  // namespace detail

/// First cycle >= now at which the command sequence for an access to `row`
/// may start on `bank` without violating bank timing. The data bus is
/// accounted for separately by the channel arbiter.
inline Cycle earliest_issue_cycle(std::uint32_t row, const BankState& bank, Cycle now, const ScaledTiming& t) {
    const ServiceKind kind = service_kind(row, bank);
    Cycle start = now;
    start = std::max(start, detail::sat_sub(bank.next_column, t.column_offset(kind)));
    if (t.uniform) return start;
    if (kind == ServiceKind::row_miss) start = std::max(start, bank.next_precharge);
    if (kind != ServiceKind::row_hit) {
        const Cycle act_offset = kind == ServiceKind::row_miss ? t.rp : 0;
        start = std::max(start, detail::sat_sub(bank.next_activate, act_offset));
    }
    return start;
}

/// Commands and data window of one issued request.
struct IssueResult {
    ServiceKind kind = ServiceKind::row_hit;
    Cycle start = 0;
    std::optional<Cycle> precharge;
    std::optional<Cycle> activate;
    Cycle column = 0;
    Cycle data_start = 0;
    Cycle completion = 0;
};

/// Commits the command sequence for an access starting at `start` and
/// advances the bank timers. Throws InvariantViolation if `start` is earlier
/// than earliest_issue_cycle allows.
inline IssueResult issue(std::uint32_t row, AccessKind access, BankState& bank, Cycle start, const ScaledTiming& t) {
    if (start < earliest_issue_cycle(row, bank, 0, t))
        throw InvariantViolation("request issued at cycle " + std::to_string(start) +
                                 " before its earliest legal cycle");
    IssueResult r;
    r.kind = service_kind(row, bank);
    r.start = start;
    if (t.uniform) {
        r.column = start;
        r.data_start = start;
        r.completion = start + t.burst;
        bank.next_column = r.completion;
        bank.open_row = row;
        return r;
    }
    if (r.kind == ServiceKind::row_miss) r.precharge = start;
    if (r.kind != ServiceKind::row_hit) {
        const Cycle act = start + (r.kind == ServiceKind::row_miss ? t.rp : 0);
        r.activate = act;
        bank.next_activate = act + t.rc;
        bank.next_precharge = std::max(bank.next_precharge, act + t.ras);
    }
    r.column = start + t.column_offset(r.kind);
    r.data_start = r.column + t.cl;
    r.completion = r.data_start + t.burst;
    bank.next_column = r.column + t.burst;
    const Cycle pre_after = access == AccessKind::write ? r.completion + t.wr : r.column + t.burst;
    bank.next_precharge = std::max(bank.next_precharge, pre_after);
    bank.open_row = row;
    return r;
}

/// Always-on checker. Keeps its own per-bank command history and verifies
/// every issued sequence against the raw timing rules, independently of the
/// BankState timer arithmetic.
class TimingAuditor {
public:
    TimingAuditor(const DramConfig& cfg) : timing_(ScaledTiming::from(cfg)), banks_per_channel_(cfg.banks_per_channel()) {
        banks_.resize(std::size_t{cfg.channels} * banks_per_channel_);
        bus_free_.assign(cfg.channels, 0);
    }

    /// Returns a description of the first broken rule, if any.
    std::optional<std::string> check(std::uint32_t channel, std::uint32_t bank_in_channel, AccessKind access,
                                     const IssueResult& r) {
        auto& h = banks_[std::size_t{channel} * banks_per_channel_ + bank_in_channel];
        std::optional<std::string> err;
        const auto fail = [&](const std::string& what) {
            if (!err) err = what + " at cycle " + std::to_string(r.start) + " (channel " + std::to_string(channel) +
                            ", bank " + std::to_string(bank_in_channel) + ")";
        };
        const ScaledTiming& t = timing_;
        if (r.data_start < bus_free_[channel]) fail("data bus overlap");
        if (t.uniform) {
            if (h.last_column && r.column < *h.last_column + t.burst) fail("bank busy");
        } else {
            if (r.precharge) {
                const Cycle p = *r.precharge;
                if (h.last_activate && p < *h.last_activate + t.ras) fail("tRAS (ACT to PRE)");
                if (h.last_column) {
                    const Cycle need = h.last_column_write ? *h.last_column + t.cl + t.burst + t.wr
                                                           : *h.last_column + t.burst;
                    if (p < need) fail(h.last_column_write ? "tWR (write recovery)" : "read to PRE");
                }
                h.last_precharge = p;
            }
            if (r.activate) {
                const Cycle a = *r.activate;
                if (h.last_activate && a < *h.last_activate + t.rc) fail("tRC (ACT to ACT)");
                if (h.row_open && !r.precharge) fail("ACT to an open bank");
                if (r.precharge && a < *r.precharge + t.rp) fail("tRP (PRE to ACT)");
                h.last_activate = a;
                h.row_open = true;
            }
            if (!h.row_open) fail("column access to a closed bank");
            if (h.last_activate && r.column < *h.last_activate + t.rcd) fail("tRCD (ACT to column)");
            if (h.last_column && r.column < *h.last_column + t.burst) fail("column to column");
            if (r.data_start != r.column + t.cl) fail("tCL (column to data)");
        }
        if (r.completion != r.data_start + t.burst) fail("burst length");
        h.last_column = r.column;
        h.last_column_write = access == AccessKind::write;
        bus_free_[channel] = r.completion;
        ++checked_;
        if (err) {
            ++violations_;
            if (first_violation_.empty()) first_violation_ = *err;
        }
        return err;
    }

    std::uint64_t checked() const { return checked_; }
    std::uint64_t violations() const { return violations_; }
    const std::string& first_violation() const { return first_violation_; }

private:
    struct History {
        std::optional<Cycle> last_activate;
        std::optional<Cycle> last_precharge;
        std::optional<Cycle> last_column;
        bool last_column_write = false;
        bool row_open = false;
    };

    ScaledTiming timing_;
    std::uint32_t banks_per_channel_;
    std::vector<History> banks_;
    std::vector<Cycle> bus_free_;
    std::uint64_t checked_ = 0;
    std::uint64_t violations_ = 0;
    std::string first_violation_;
};

}  // namespace qosmem
