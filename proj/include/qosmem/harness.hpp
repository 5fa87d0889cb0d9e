#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <future>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "config.hpp"
#include "metrics.hpp"
#include "simulation.hpp"

namespace qosmem {

// ---------------------------------------------------------------------------
// Alone runs
// ---------------------------------------------------------------------------

/// FNV-1a over everything an alone run depends on.
class Fnv1a {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h_ ^= b[i];
            h_ *= 0x100000001b3ULL;
        }
    }
    template <class T>
    void value(const T& v) {
        static_assert(std::is_trivially_copyable_v<T>);
        bytes(&v, sizeof v);
    }
    std::uint64_t digest() const { return h_; }

private:
    std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t alone_run_key(const Trace& trace, const DramConfig& d, const CpuParams& cpu, Cycle horizon) {
    Fnv1a h;
    h.value(trace.size());
    for (const auto& r : trace) {
        h.value(r.nonmem_instructions);
        h.value(r.address.has_value());
        h.value(r.address.value_or(0));
        h.value(r.kind);
    }
    for (std::uint64_t v : {std::uint64_t{d.channels}, std::uint64_t{d.ranks_per_channel}, std::uint64_t{d.banks_per_rank},
                            std::uint64_t{d.rows_per_bank}, std::uint64_t{d.columns_per_row}, std::uint64_t{d.line_size},
                            std::uint64_t{d.request_buffer_entries}, std::uint64_t{d.buffer_split_cpu},
                            std::uint64_t{d.cpu_cycles_per_dram_cycle}, d.uniform_latency.value_or(0),
                            std::uint64_t{d.timing.tRC}, std::uint64_t{d.timing.tRCD}, std::uint64_t{d.timing.tCL},
                            std::uint64_t{d.timing.tRP}, std::uint64_t{d.timing.tWR}, std::uint64_t{d.timing.tBURST}})
        h.value(v);
    h.value(d.timing.clock_period_ns);
    for (std::uint64_t v : {std::uint64_t{cpu.issue_width}, std::uint64_t{cpu.max_inflight}, std::uint64_t{cpu.window},
                            std::uint64_t{cpu.wrap_trace}, horizon})
        h.value(v);
    return h.digest();
}

struct AloneResult {
    std::uint64_t instructions = 0;
    Cycle cycles = 0;
};

/// Runs one trace by itself on the given memory under FR-FCFS.
inline AloneResult run_alone(const CpuAgentSpec& cpu, const DramConfig& dram, const CpuParams& params, Cycle horizon) {
    SystemConfig s;
    s.dram = dram;
    s.cpu = params;
    s.cpus = {cpu};
    s.policy.kind = PolicyKind::frfcfs;
    const SimResult r = Simulation(std::move(s)).run(horizon);
    return AloneResult{r.cores.at(0).retired, r.cores.at(0).cycles};
}

/// Thread-safe memo of alone runs. Concurrent requests for the same key
/// share one computation.
class AloneCache {
public:
    AloneResult get(const CpuAgentSpec& cpu, const DramConfig& dram, const CpuParams& params, Cycle horizon) {
        const std::uint64_t key = alone_run_key(*cpu.trace, dram, params, horizon);
        std::shared_future<AloneResult> fut;
        std::promise<AloneResult> promise;
        bool owner = false;
        {
            std::lock_guard lock(mu_);
            auto it = entries_.find(key);
            if (it == entries_.end()) {
                fut = promise.get_future().share();
                entries_.emplace(key, fut);
                owner = true;
            } else {
                fut = it->second;
            }
        }
        if (owner) {
            try {
                promise.set_value(run_alone(cpu, dram, params, horizon));
            } catch (...) {
                promise.set_exception(std::current_exception());
            }
            std::lock_guard lock(mu_);
            ++computed_;
        }
        return fut.get();
    }

    std::size_t computed() const {
        std::lock_guard lock(mu_);
        return computed_;
    }

private:
    mutable std::mutex mu_;
    std::map<std::uint64_t, std::shared_future<AloneResult>> entries_;
    std::size_t computed_ = 0;
};

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

struct HwaMetrics {
    std::string name;
    std::optional<double> met_ratio;
    std::optional<double> fps;
};

struct ExperimentResult {
    std::vector<std::pair<std::string, json>> parameters;  ///< sweep coordinates, empty for a single run
    std::string policy;
    std::uint64_t seed = 0;
    Cycle horizon = 0;
    RunStats stats;
    std::optional<double> weighted_speedup;
    std::optional<double> maximum_slowdown;
    std::vector<HwaMetrics> hwas;
    SimResult shared;
};

/// Thrown when the simulator detects an internal inconsistency; carries the
/// tail of the decision log.
class SimulationAborted : public std::runtime_error {
public:
    SimulationAborted(const std::string& what, std::string excerpt)
        : std::runtime_error(what), excerpt_(std::move(excerpt)) {}
    const std::string& excerpt() const { return excerpt_; }

private:
    std::string excerpt_;
};

std::string format_decision_log(const std::vector<DecisionRecord>& log, const std::vector<HwaResult>& hwas,
                                std::size_t last = 0);

/// Alone runs (cached), the shared run, then metrics.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, AloneCache& cache, SimOptions opts = {}) {
    ExperimentResult out;
    out.policy = to_string(cfg.system.policy.kind);
    if (cfg.system.policy.kind == PolicyKind::squash && cfg.system.policy.components != SquashComponents{})
        out.policy += "(" + to_string(cfg.system.policy.components) + ")";
    out.seed = cfg.seed;
    out.horizon = cfg.horizon;

    opts.record_decisions = true;  // kept for abort diagnostics and the decision log
    Simulation sim(cfg.system, opts);
    try {
        out.shared = sim.run(cfg.horizon);
    } catch (const InvariantViolation& e) {
        const SimResult partial = sim.result();
        throw SimulationAborted(std::string("simulator invariant violated at cycle ") + std::to_string(sim.now()) +
                                    ": " + e.what(),
                                format_decision_log(partial.decisions, partial.hwas, 16));
    }

    for (std::size_t i = 0; i < cfg.system.cpus.size(); ++i) {
        const auto& cpu = cfg.system.cpus[i];
        const AloneResult alone = cache.get(cpu, cfg.system.dram, cfg.system.cpu, cfg.horizon);
        CoreRunStats c;
        c.name = cpu.name;
        c.shared_instructions = out.shared.cores[i].retired;
        c.shared_cycles = out.shared.cores[i].cycles;
        c.alone_instructions = alone.instructions;
        c.alone_cycles = alone.cycles;
        out.stats.cores.push_back(c);
    }
    for (const auto& h : out.shared.hwas) {
        HwaRunStats s{h.name, h.stats.deadlines_met, h.stats.deadlines_missed, h.stats.frames_total,
                      h.stats.frames_dropped, h.target_fps};
        out.stats.hwas.push_back(s);
        out.hwas.push_back(HwaMetrics{h.name, deadline_met_ratio(s), frame_rate(s)});
    }
    if (!out.stats.cores.empty()) {
        out.weighted_speedup = weighted_speedup(out.stats);
        out.maximum_slowdown = maximum_slowdown(out.stats);
    }
    return out;
}

/// The document with the sweep removed and the given coordinates applied.
inline ExperimentConfig sweep_point(const ExperimentConfig& base, const std::vector<std::pair<std::string, json>>& coords,
                                    const ConfigOverrides& over) {
    json doc = base.document;
    doc.erase("sweep");
    for (const auto& [path, value] : coords) set_path(doc, path, value);
    ConfigOverrides o = over;
    if (!o.seed) o.seed = base.seed;
    if (!o.horizon) o.horizon = base.horizon;
    return parse_experiment(doc, base.base_dir, o);
}

/// Every grid point of the sweep (or the single base point), run on up to
/// `jobs` threads. Rows come back in grid order regardless of completion order.
inline std::vector<ExperimentResult> run_sweep(const ExperimentConfig& cfg, AloneCache& cache, unsigned jobs = 0,
                                               const ConfigOverrides& over = {}) {
    std::vector<std::vector<std::pair<std::string, json>>> points{{}};
    for (const auto& axis : cfg.sweep) {
        std::vector<std::vector<std::pair<std::string, json>>> next;
        for (const auto& p : points)
            for (const auto& v : axis.values) {
                auto q = p;
                q.emplace_back(axis.path, v);
                next.push_back(std::move(q));
            }
        points = std::move(next);
    }
    // Parse every point up front so configuration errors surface before any run.
    std::vector<ExperimentConfig> configs;
    for (const auto& p : points) configs.push_back(sweep_point(cfg, p, over));

    std::vector<ExperimentResult> rows(points.size());
    if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
    jobs = std::min<unsigned>(jobs, static_cast<unsigned>(points.size()));
    std::mutex mu;
    std::size_t next_index = 0;
    std::exception_ptr failure;
    auto worker = [&] {
        for (;;) {
            std::size_t i;
            {
                std::lock_guard lock(mu);
                if (next_index >= points.size() || failure) return;
                i = next_index++;
            }
            try {
                ExperimentResult r = run_experiment(configs[i], cache);
                r.parameters = points[i];
                r.shared.decisions.clear();
                rows[i] = std::move(r);
            } catch (...) {
                std::lock_guard lock(mu);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
    return rows;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Six significant digits; "inf" for infinity, empty for an absent value.
inline std::string format_number(std::optional<double> v) {
    if (!v) return "";
    if (std::isinf(*v)) return *v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", *v);
    return buf;
}

inline std::string format_json_scalar(const json& v) {
    if (v.is_number_float()) return format_number(v.get<double>());
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
}

/// Columns: swept parameters, policy, seed, horizon, weighted_speedup,
/// maximum_slowdown, then <hwa>_met_ratio and <hwa>_fps per HWA.
inline void write_csv(std::ostream& out, const std::vector<ExperimentResult>& rows) {
    if (rows.empty()) return;
    const ExperimentResult& first = rows.front();
    std::vector<std::string> header;
    for (const auto& [path, v] : first.parameters) header.push_back(path);
    for (const char* c : {"policy", "seed", "horizon", "weighted_speedup", "maximum_slowdown"}) header.push_back(c);
    for (const auto& h : first.hwas) {
        header.push_back(h.name + "_met_ratio");
        header.push_back(h.name + "_fps");
    }
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << '\n';
    for (const auto& r : rows) {
        std::vector<std::string> cells;
        for (const auto& [path, v] : r.parameters) cells.push_back(format_json_scalar(v));
        cells.push_back(r.policy);
        cells.push_back(std::to_string(r.seed));
        cells.push_back(std::to_string(r.horizon));
        cells.push_back(format_number(r.weighted_speedup));
        cells.push_back(format_number(r.maximum_slowdown));
        for (const auto& h : r.hwas) {
            cells.push_back(format_number(h.met_ratio));
            cells.push_back(format_number(h.fps));
        }
        for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
        out << '\n';
    }
}

/// CSV with columns cycle,hwa,current_progress,expected_progress,urgent,group,pb.
/// `last` > 0 keeps only the final records.
inline std::string format_decision_log(const std::vector<DecisionRecord>& log, const std::vector<HwaResult>& hwas,
                                       std::size_t last) {
    std::ostringstream out;
    out << "cycle,hwa,current_progress,expected_progress,urgent,group,pb\n";
    const std::size_t from = last && log.size() > last ? log.size() - last : 0;
    for (std::size_t i = from; i < log.size(); ++i) {
        const auto& d = log[i];
        out << d.cycle << ',' << (d.hwa < hwas.size() ? hwas[d.hwa].name : std::to_string(d.hwa)) << ','
            << format_number(d.current_progress) << ',' << format_number(d.expected_progress) << ','
            << (d.urgent ? 1 : 0) << ',' << d.group << ',' << format_number(d.pb) << '\n';
    }
    return out.str();
}

}  // namespace qosmem
