#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "agents.hpp"
#include "common.hpp"
#include "controller.hpp"
#include "dram.hpp"
#include "meta.hpp"
#include "policy.hpp"
#include "rng.hpp"

namespace qosmem {

struct PolicyConfig {
    PolicyKind kind = PolicyKind::squash;
    /// Defaults to 0.8 under squash and 0.9 under frfcfs-dyn.
    std::optional<double> emergent_threshold;
    double cluster_factor = 0.2;
    Cycle quantum = 1'000'000;
    Cycle shuffle_interval = 800;
    Cycle scheduling_unit = 1000;
    Cycle switching_unit = 500;
    double pb_inc = 0.01;
    double pb_dec = 0.05;
    SquashComponents components;
    /// Waiting-time slack added to every urgent window; defaults to one
    /// isolated row-miss service time.
    std::optional<Cycle> upl_slack;
    std::uint64_t seed = 1;

    double threshold() const {
        if (emergent_threshold) return *emergent_threshold;
        return kind == PolicyKind::frfcfs_dyn ? 0.9 : 0.8;
    }

    void validate() const {
        const double t = threshold();
        if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("policy.emergent_threshold", "must lie in [0, 1]");
        if (!(cluster_factor >= 0.0 && cluster_factor <= 1.0))
            throw ConfigError("policy.cluster_factor", "must lie in [0, 1]");
        if (quantum < 1) throw ConfigError("policy.quantum", "must be >= 1 cycle");
        if (shuffle_interval < 1) throw ConfigError("policy.shuffle_interval", "must be >= 1 cycle");
        if (scheduling_unit < 1) throw ConfigError("policy.scheduling_unit", "must be >= 1 cycle");
        if (switching_unit < 1) throw ConfigError("policy.switching_unit", "must be >= 1 cycle");
        if (!(pb_inc >= 0.0 && pb_inc <= 1.0)) throw ConfigError("policy.pb_inc", "must lie in [0, 1]");
        if (!(pb_dec >= 0.0 && pb_dec <= 1.0)) throw ConfigError("policy.pb_dec", "must lie in [0, 1]");
    }
};

struct CpuAgentSpec {
    std::string name;
    std::shared_ptr<const Trace> trace;
    /// Static MPKI used for the clustering before the first quantum ends;
    /// measured from the trace when absent.
    std::optional<double> mpki_estimate;
};

struct SystemConfig {
    DramConfig dram;
    CpuParams cpu;
    std::vector<CpuAgentSpec> cpus;
    std::vector<HwaSpec> hwas;
    PolicyConfig policy;
};

struct SimOptions {
    bool record_decisions = false;
    bool record_issues = false;
};

/// Meta-controller state of one HWA at a SchedulingUnit boundary.
struct DecisionRecord {
    Cycle cycle = 0;
    std::size_t hwa = 0;
    double current_progress = 0.0;
    double expected_progress = 0.0;
    bool urgent = false;
    int group = 0;
    double pb = 0.0;
};

struct IssueRecord {
    std::uint64_t id = 0;
    AgentId agent{};
    AccessKind kind = AccessKind::read;
    DramCoords coords;
    ServiceKind service = ServiceKind::row_hit;
    Cycle arrival = 0;
    Cycle start = 0;
    Cycle data_start = 0;
    Cycle completion = 0;
};

struct CoreResult {
    std::string name;
    std::uint64_t retired = 0;
    Cycle cycles = 0;
    std::uint64_t requests = 0;

    double ipc() const { return cycles ? static_cast<double>(retired) / static_cast<double>(cycles) : 0.0; }
};

struct HwaResult {
    std::string name;
    HwaClass klass = HwaClass::ldp;
    DeadlineStats stats;
    double target_fps = 30.0;
};

struct SimResult {
    Cycle cycles = 0;
    std::vector<CoreResult> cores;
    std::vector<HwaResult> hwas;
    std::uint64_t requests_issued = 0;
    std::uint64_t audit_checked = 0;
    std::uint64_t audit_violations = 0;
    std::vector<DecisionRecord> decisions;
    std::vector<IssueRecord> issues;
};

/// One shared-memory system: agents, meta-controller and memory controller,
/// advanced one CPU cycle at a time.
///
/// Within a cycle: completions due now are delivered, HWA period boundaries
/// are processed, the meta-controller updates priorities, agents emit new
/// requests, and every channel makes at most one scheduling decision.
class Simulation {
public:
    explicit Simulation(SystemConfig cfg, SimOptions opts = {})
        : cfg_(std::move(cfg)), opts_(opts), controller_(cfg_.dram), pb_rng_(cfg_.policy.seed ^ 0x9e3779b97f4a7c15ULL) {
        cfg_.dram.validate();
        cfg_.policy.validate();
        if (cfg_.cpus.empty() && cfg_.hwas.empty()) throw ConfigError("agents", "no agents configured");
        layout_ = AgentLayout{cfg_.cpus.size(), cfg_.hwas.size()};
        threshold_ = cfg_.policy.threshold();

        std::vector<double> estimates;
        for (std::size_t i = 0; i < cfg_.cpus.size(); ++i) {
            const auto& c = cfg_.cpus[i];
            if (!c.trace) throw ConfigError("cpu[" + std::to_string(i) + "].trace", "missing");
            cpus_.emplace_back(agent_id(i), c.trace, cfg_.cpu);
            estimates.push_back(c.mpki_estimate ? *c.mpki_estimate : summarize(*c.trace).mpki());
        }
        for (std::size_t h = 0; h < cfg_.hwas.size(); ++h) {
            hwas_.emplace_back(agent_id(layout_.hwa_index(h)), cfg_.hwas[h], cfg_.dram);
            HwaControl ctl;
            const auto& spec = hwas_.back().spec();
            ctl.sdp_window = squash() && cfg_.policy.components.short_deadline && spec.klass == HwaClass::sdp;
            control_.push_back(ctl);
        }

        tcm_.cluster_factor = cfg_.policy.cluster_factor;
        tcm_.quantum = cfg_.policy.quantum;
        tcm_.shuffle_interval = cfg_.policy.shuffle_interval;
        tcm_.rng = Rng(cfg_.policy.seed);
        tcm_initialize(tcm_, estimates);

        if (squash()) compute_urgent_windows();
        rebuild_table();
    }

    const SystemConfig& config() const { return cfg_; }
    const MemoryController& controller() const { return controller_; }
    const CpuCore& cpu(std::size_t i) const { return cpus_.at(i); }
    const Hwa& hwa(std::size_t h) const { return hwas_.at(h); }
    const RankedGroup& ranking(std::size_t agent) const { return table_.at(agent); }
    const TcmState& tcm() const { return tcm_; }
    const LdpCounters& ldp_counters(std::size_t h) const { return control_.at(h).ldp; }
    const SdpCounters& sdp_counters(std::size_t h) const { return control_.at(h).sdp; }
    Cycle now() const { return now_; }

    /// Runs until `horizon` cycles have elapsed.
    SimResult run(Cycle horizon) {
        while (now_ < horizon) step();
        return result();
    }

    /// Advances one cycle.
    void step() {
        deliver_completions();
        bool dirty = false;
        for (std::size_t h = 0; h < hwas_.size(); ++h) dirty |= handle_period_boundary(h);
        dirty |= update_meta();
        const bool log_now = opts_.record_decisions && logs_decisions() && now_ % cfg_.policy.scheduling_unit == 0;
        if (dirty) rebuild_table();
        if (log_now) log_decisions();
        emit_requests();
        issued_.clear();
        controller_.schedule(now_, [this](const MemoryRequest& r) { return table_[to_index(r.agent)]; }, issued_);
        for (auto& ir : issued_) on_issued(ir);
        ++now_;
    }

    SimResult result() const {
        SimResult r;
        r.cycles = now_;
        for (std::size_t i = 0; i < cpus_.size(); ++i)
            r.cores.push_back(CoreResult{cfg_.cpus[i].name, cpus_[i].retired_instructions(), now_, cpu_requests_[i]});
        for (const auto& h : hwas_) r.hwas.push_back(HwaResult{h.spec().name, h.spec().klass, h.stats(), h.spec().target_fps});
        r.requests_issued = requests_issued_;
        r.audit_checked = controller_.auditor().checked();
        r.audit_violations = controller_.auditor().violations();
        r.decisions = decisions_;
        r.issues = issues_;
        return r;
    }

private:
    struct HwaControl {
        LdpCounters ldp;
        SdpCounters sdp;
        bool sdp_window = false;  ///< urgency from a worst-case window instead of progress
        NonUrgentGroup placement = NonUrgentGroup::group6;
        bool pb_swap = false;
        DynLevel dyn = DynLevel::same;
    };

    struct Completion {
        Cycle cycle;
        std::uint64_t id;
        std::uint32_t agent;
        std::uint64_t tag;

        bool operator>(const Completion& o) const { return cycle != o.cycle ? cycle > o.cycle : id > o.id; }
    };

    bool squash() const { return cfg_.policy.kind == PolicyKind::squash; }
    bool logs_decisions() const { return squash() || cfg_.policy.kind == PolicyKind::frfcfs_dyn; }
    bool is_hwa(std::size_t agent) const { return agent >= layout_.cpus; }

    void compute_urgent_windows() {
        const ScaledTiming& t = controller_.timing();
        const Cycle slack = cfg_.policy.upl_slack
                                ? *cfg_.policy.upl_slack
                                : (t.uniform ? t.burst : t.rp + t.rcd + t.cl + t.burst);
        std::vector<SdpTask> tasks;
        std::vector<std::size_t> owners;
        for (std::size_t h = 0; h < hwas_.size(); ++h) {
            if (!control_[h].sdp_window) continue;
            // Variable schedules are bounded by their tightest period and largest burst.
            SdpTask task{agent_id(layout_.hwa_index(h)), ~Cycle{0}, 0};
            for (const auto& e : hwas_[h].spec().schedule) {
                task.period = std::min(task.period, e.period);
                task.requests = std::max(task.requests, e.requests);
            }
            tasks.push_back(task);
            owners.push_back(h);
        }
        const auto upl = compute_upl(tasks, t.rc, slack);
        for (std::size_t k = 0; k < owners.size(); ++k) control_[owners[k]].sdp.upl = upl[k].upl;
    }

    void deliver_completions() {
        while (!pending_.empty() && pending_.top().cycle <= now_) {
            const Completion c = pending_.top();
            pending_.pop();
            if (is_hwa(c.agent)) {
                const std::size_t h = c.agent - layout_.cpus;
                --hwa_in_buffer_;
                if (c.tag == hwas_[h].period()) ++control_[h].ldp.curr_req;
                hwas_[h].on_complete(c.tag);
            } else {
                --cpu_in_buffer_;
                cpus_[c.agent].on_complete(c.id);
            }
        }
    }

    bool handle_period_boundary(std::size_t h) {
        auto roll = hwas_[h].begin_cycle(now_);
        if (!roll) return false;
        HwaControl& ctl = control_[h];
        end_of_period_reset(ctl.ldp, roll->entry.requests, roll->entry.period);
        end_of_period_reset(ctl.sdp, roll->entry.period);
        ctl.placement = NonUrgentGroup::group6;
        ctl.dyn = dyn_level(ctl.ldp, threshold_);
        if (roll->closed_previous) {
            // Unissued requests of the closed period are no longer useful.
            const AgentId id = hwas_[h].id();
            const std::uint64_t period = roll->new_period;
            const auto dropped = controller_.purge(
                [&](const MemoryRequest& r) { return r.agent == id && r.tag < period; });
            hwas_[h].on_abandoned(dropped.size());
            hwa_in_buffer_ -= dropped.size();
        }
        return true;
    }

    bool update_meta() {
        bool dirty = false;
        const auto& pol = cfg_.policy;
        const bool su = now_ % pol.scheduling_unit == 0;
        const bool swu = now_ % pol.switching_unit == 0;
        for (std::size_t h = 0; h < hwas_.size(); ++h) {
            HwaControl& ctl = control_[h];
            const Cycle elapsed = std::min(now_ - hwas_[h].period_start(), ctl.ldp.total_cyc);
            ctl.ldp.curr_cyc = elapsed;
            ctl.sdp.curr_cyc = elapsed;
            if (squash()) {
                if (ctl.sdp_window) {
                    if (!ctl.sdp.urgent && ctl.sdp.curr_cyc >= ctl.sdp.priority_cyc) {
                        ctl.sdp.urgent = true;
                        dirty = true;
                    }
                    continue;
                }
                if (su) {
                    const bool urgent = classify_ldp_urgency(ctl.ldp, threshold_);
                    if (ctl.ldp.urgent && !urgent) ctl.placement = place_nonurgent_ldp(ctl.ldp);
                    ctl.ldp.urgent = urgent;
                    dirty = true;
                }
                if (swu && pol.components.probabilistic) {
                    update_pb(ctl.ldp, pol.pb_inc, pol.pb_dec);
                    ctl.pb_swap = draw_pb(ctl.ldp, pb_rng_) == PbDraw::swap;
                    dirty = true;
                }
            } else if (pol.kind == PolicyKind::frfcfs_dyn && su) {
                ctl.dyn = dyn_level(ctl.ldp, threshold_);
                dirty = true;
            }
        }
        if (uses_tcm()) {
            if (now_ > 0 && now_ % tcm_.quantum == 0) {
                std::vector<CoreQuantumStats> stats;
                for (auto& c : cpus_) {
                    stats.push_back(CoreQuantumStats{c.quantum_mpki(), c.quantum_requests() * cfg_.dram.line_size});
                    c.reset_quantum();
                }
                tcm_requantize(tcm_, stats);
                dirty = true;
            }
            if (now_ > 0 && now_ % tcm_.shuffle_interval == 0 && tcm_.permutation.size() > 1) {
                tcm_shuffle(tcm_);
                dirty = true;
            }
        }
        return dirty;
    }

    bool uses_tcm() const { return squash() || cfg_.policy.kind == PolicyKind::tcm_st; }

    void rebuild_table() {
        switch (cfg_.policy.kind) {
            case PolicyKind::frfcfs: table_ = assign_frfcfs(layout_); break;
            case PolicyKind::frfcfs_st: table_ = assign_static_hwa_first(layout_); break;
            case PolicyKind::tcm_st: table_ = assign_static_hwa_first(layout_, tcm_.ranks); break;
            case PolicyKind::frfcfs_dyn: {
                table_.assign(layout_.total(), RankedGroup{2, 0});
                for (std::size_t h = 0; h < hwas_.size(); ++h) {
                    const DynLevel lvl = control_[h].dyn;
                    table_[layout_.hwa_index(h)].group = lvl == DynLevel::above ? 1 : (lvl == DynLevel::same ? 2 : 3);
                }
                break;
            }
            case PolicyKind::squash: {
                views_.clear();
                for (std::size_t h = 0; h < hwas_.size(); ++h) {
                    const HwaControl& ctl = control_[h];
                    SquashHwaView v;
                    v.klass = hwas_[h].spec().klass;
                    v.urgent = ctl.sdp_window ? ctl.sdp.urgent : ctl.ldp.urgent;
                    v.placement = ctl.placement;
                    v.pb_swap = ctl.pb_swap;
                    v.period = hwas_[h].period_length();
                    v.deadline = hwas_[h].period_start() + v.period;
                    views_.push_back(v);
                }
                table_ = assign_squash(layout_, tcm_.ranks, views_, cfg_.policy.components);
                break;
            }
        }
    }

    void log_decisions() {
        for (std::size_t h = 0; h < hwas_.size(); ++h) {
            const HwaControl& ctl = control_[h];
            DecisionRecord d;
            d.cycle = now_;
            d.hwa = h;
            d.current_progress = current_progress(ctl.ldp);
            d.expected_progress = expected_progress(ctl.ldp);
            if (cfg_.policy.kind == PolicyKind::frfcfs_dyn)
                d.urgent = ctl.dyn != DynLevel::below;
            else
                d.urgent = ctl.sdp_window ? ctl.sdp.urgent : ctl.ldp.urgent;
            d.group = table_[layout_.hwa_index(h)].group;
            d.pb = ctl.ldp.pb;
            decisions_.push_back(d);
        }
    }

    MemoryRequest make_request(std::size_t agent, const Emission& e, std::uint64_t tag) {
        MemoryRequest r;
        r.id = next_id_++;
        r.agent = agent_id(agent);
        r.address = e.address;
        r.kind = e.kind;
        r.coords = decode_address(e.address, cfg_.dram);
        r.arrival = now_;
        r.tag = tag;
        return r;
    }

    void emit_requests() {
        const std::size_t hwa_capacity = cfg_.dram.request_buffer_entries - cfg_.dram.buffer_split_cpu;
        for (std::size_t h = 0; h < hwas_.size(); ++h) {
            const std::size_t agent = layout_.hwa_index(h);
            const std::uint64_t tag = hwas_[h].period();
            hwas_[h].emit_requests([&](const Emission& e) {
                if (hwa_in_buffer_ >= hwa_capacity) return false;
                controller_.enqueue(make_request(agent, e, tag));
                ++hwa_in_buffer_;
                return true;
            });
        }
        for (std::size_t i = 0; i < cpus_.size(); ++i) {
            cpus_[i].tick(cpu_in_buffer_ < cfg_.dram.buffer_split_cpu, [&](const Emission& e) {
                MemoryRequest r = make_request(i, e, 0);
                const std::uint64_t id = r.id;
                controller_.enqueue(std::move(r));
                ++cpu_in_buffer_;
                ++cpu_requests_[i];
                return id;
            });
        }
    }

    void on_issued(const IssuedRequest& ir) {
        const MemoryRequest& r = ir.request;
        ++requests_issued_;
        pending_.push(Completion{ir.timing.completion, r.id, static_cast<std::uint32_t>(to_index(r.agent)), r.tag});
        if (opts_.record_issues)
            issues_.push_back(IssueRecord{r.id, r.agent, r.kind, r.coords, ir.timing.kind, r.arrival, ir.timing.start,
                                          ir.timing.data_start, ir.timing.completion});
    }

    SystemConfig cfg_;
    SimOptions opts_;
    AgentLayout layout_;
    double threshold_ = 0.8;
    MemoryController controller_;
    std::vector<CpuCore> cpus_;
    std::vector<Hwa> hwas_;
    std::vector<HwaControl> control_;
    TcmState tcm_;
    Rng pb_rng_;
    std::vector<RankedGroup> table_;
    std::vector<SquashHwaView> views_;
    std::priority_queue<Completion, std::vector<Completion>, std::greater<>> pending_;
    std::vector<IssuedRequest> issued_;
    std::vector<std::uint64_t> cpu_requests_ = std::vector<std::uint64_t>(cfg_.cpus.size(), 0);
    std::size_t cpu_in_buffer_ = 0;
    std::size_t hwa_in_buffer_ = 0;
    std::uint64_t next_id_ = 0;
    std::uint64_t requests_issued_ = 0;
    Cycle now_ = 0;
    std::vector<DecisionRecord> decisions_;
    std::vector<IssueRecord> issues_;
};

}  // namespace qosmem
