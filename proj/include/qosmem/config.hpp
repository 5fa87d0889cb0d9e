#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "agents.hpp"
#include "common.hpp"
#include "dram.hpp"
#include "policy.hpp"
#include "simulation.hpp"

namespace qosmem {

using json = nlohmann::json;

/// One swept parameter: a dotted path into the config document and its values.
struct SweepAxis {
    std::string path;
    std::vector<json> values;
};

struct ExperimentConfig {
    std::string name = "experiment";
    SystemConfig system;
    Cycle horizon = 20'000'000;
    std::uint64_t seed = 1;
    double cpu_frequency_ghz = 2.66;
    std::vector<SweepAxis> sweep;
    json document;                   ///< the parsed source, used to derive sweep points
    std::filesystem::path base_dir;  ///< trace paths are relative to this
};

/// Command-line overrides applied on top of the document.
struct ConfigOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<Cycle> horizon;
};

namespace detail {

/// Typed, path-aware access to one JSON object. Unknown keys are rejected
/// by finish() so typos surface as errors.
class Fields {
public:
    Fields(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    bool has(const std::string& key) {
        seen_.insert(key);
        return obj_.contains(key) && !obj_.at(key).is_null();
    }

    const json& raw(const std::string& key) {
        if (!has(key)) throw ConfigError(at(key), "missing");
        return obj_.at(key);
    }

    std::uint64_t uint(const std::string& key) {
        const json& v = raw(key);
        if (v.is_number_unsigned()) return v.get<std::uint64_t>();
        if (v.is_number_integer()) {
            const auto i = v.get<std::int64_t>();
            if (i < 0) throw ConfigError(at(key), "must be >= 0");
            return static_cast<std::uint64_t>(i);
        }
        if (v.is_number_float()) {
            const double d = v.get<double>();
            if (d >= 0.0 && std::floor(d) == d && d < 1.8e19) return static_cast<std::uint64_t>(d);
        }
        throw ConfigError(at(key), "expected a non-negative integer");
    }

    std::uint64_t uint(const std::string& key, std::uint64_t fallback) { return has(key) ? uint(key) : fallback; }

    std::uint32_t u32(const std::string& key, std::uint32_t fallback) {
        const std::uint64_t v = uint(key, fallback);
        if (v > 0xffffffffULL) throw ConfigError(at(key), "too large");
        return static_cast<std::uint32_t>(v);
    }

    double real(const std::string& key) {
        const json& v = raw(key);
        if (!v.is_number()) throw ConfigError(at(key), "expected a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) throw ConfigError(at(key), "must be finite");
        return d;
    }

    double real(const std::string& key, double fallback) { return has(key) ? real(key) : fallback; }

    std::string text(const std::string& key) {
        const json& v = raw(key);
        if (!v.is_string()) throw ConfigError(at(key), "expected a string");
        return v.get<std::string>();
    }

    std::string text(const std::string& key, const std::string& fallback) { return has(key) ? text(key) : fallback; }

    bool flag(const std::string& key, bool fallback) {
        if (!has(key)) return fallback;
        const json& v = obj_.at(key);
        if (!v.is_boolean()) throw ConfigError(at(key), "expected true or false");
        return v.get<bool>();
    }

    void finish() const {
        for (const auto& [key, value] : obj_.items())
            if (!seen_.count(key)) throw ConfigError(at(key), "unknown field");
    }

private:
    const json& obj_;
    std::string path_;
    std::set<std::string> seen_;
};

inline TimingParams parse_timing(const json& j, const std::string& path, TimingParams t) {
    Fields f(j, path);
    t.tRC = f.u32("tRC", t.tRC);
    t.tRCD = f.u32("tRCD", t.tRCD);
    t.tCL = f.u32("tCL", t.tCL);
    t.tRP = f.u32("tRP", t.tRP);
    t.tWR = f.u32("tWR", t.tWR);
    t.tBURST = f.u32("tBURST", t.tBURST);
    t.clock_period_ns = f.real("clock_period_ns", t.clock_period_ns);
    f.finish();
    return t;
}

inline DramConfig parse_dram(const json& j) {
    Fields f(j, "dram");
    const std::string preset = f.text("preset", "ddr3-1333");
    if (preset != "ddr3-1333") throw ConfigError("dram.preset", "unknown preset '" + preset + "' (ddr3-1333)");
    DramConfig d = ddr3_1333_preset();
    d.channels = f.u32("channels", d.channels);
    d.ranks_per_channel = f.u32("ranks_per_channel", d.ranks_per_channel);
    d.banks_per_rank = f.u32("banks_per_rank", d.banks_per_rank);
    d.rows_per_bank = f.u32("rows_per_bank", d.rows_per_bank);
    d.columns_per_row = f.u32("columns_per_row", d.columns_per_row);
    d.line_size = f.u32("line_size", d.line_size);
    d.request_buffer_entries = f.u32("request_buffer_entries", d.request_buffer_entries);
    d.buffer_split_cpu = f.u32("buffer_split_cpu", d.request_buffer_entries / 2);
    d.cpu_cycles_per_dram_cycle = f.u32("cpu_cycles_per_dram_cycle", d.cpu_cycles_per_dram_cycle);
    if (f.has("uniform_latency")) d.uniform_latency = f.uint("uniform_latency");
    if (f.has("timing")) d.timing = parse_timing(f.raw("timing"), "dram.timing", d.timing);
    f.finish();
    d.validate();
    return d;
}

inline CpuParams parse_cpu_params(const json& j) {
    Fields f(j, "cpu");
    CpuParams p;
    p.issue_width = f.u32("issue_width", p.issue_width);
    p.max_inflight = f.u32("max_inflight", p.max_inflight);
    p.window = f.u32("window", p.window);
    p.wrap_trace = f.flag("wrap_trace", p.wrap_trace);
    f.finish();
    if (p.issue_width < 1) throw ConfigError("cpu.issue_width", "must be >= 1");
    if (p.max_inflight < 1) throw ConfigError("cpu.max_inflight", "must be >= 1");
    return p;
}

inline PolicyConfig parse_policy(const json& j, std::uint64_t seed) {
    Fields f(j, "policy");
    PolicyConfig p;
    p.kind = parse_policy_kind(f.text("name"));
    if (f.has("emergent_threshold")) p.emergent_threshold = f.real("emergent_threshold");
    p.cluster_factor = f.real("cluster_factor", p.cluster_factor);
    p.quantum = f.uint("quantum", p.quantum);
    p.shuffle_interval = f.uint("shuffle_interval", p.shuffle_interval);
    p.scheduling_unit = f.uint("scheduling_unit", p.scheduling_unit);
    p.switching_unit = f.uint("switching_unit", p.switching_unit);
    p.pb_inc = f.real("pb_inc", p.pb_inc);
    p.pb_dec = f.real("pb_dec", p.pb_dec);
    if (f.has("components")) p.components = parse_squash_components(f.text("components"));
    if (f.has("upl_slack")) p.upl_slack = f.uint("upl_slack");
    p.seed = f.uint("seed", seed);
    f.finish();
    p.validate();
    return p;
}

inline Cycle to_cycles(double microseconds, double ghz) {
    return static_cast<Cycle>(std::llround(microseconds * 1000.0 * ghz));
}

/// A period given as "period" (cycles) or "period_us".
inline Cycle parse_period(Fields& f, double ghz) {
    const bool cycles = f.has("period");
    const bool us = f.has("period_us");
    if (cycles == us) throw ConfigError(f.at("period"), "give exactly one of period (cycles) or period_us");
    const Cycle p = cycles ? f.uint("period") : to_cycles(f.real("period_us"), ghz);
    if (p < 1) throw ConfigError(f.at("period"), "must be >= 1 cycle");
    return p;
}

/// Requests per period given as "requests" or as "bandwidth_mbps" (MB/s).
inline std::uint32_t parse_requests(Fields& f, Cycle period, double ghz, std::uint32_t line_size) {
    const bool count = f.has("requests");
    const bool bw = f.has("bandwidth_mbps");
    if (count == bw) throw ConfigError(f.at("requests"), "give exactly one of requests or bandwidth_mbps");
    if (count) return f.u32("requests", 0);
    const double mbps = f.real("bandwidth_mbps");
    if (mbps < 0.0) throw ConfigError(f.at("bandwidth_mbps"), "must be >= 0");
    const double seconds = static_cast<double>(period) / (ghz * 1e9);
    return static_cast<std::uint32_t>(std::llround(mbps * 1e6 * seconds / line_size));
}

inline std::shared_ptr<const Trace> load_trace_file(const std::filesystem::path& path, const std::string& field) {
    std::ifstream in(path);
    if (!in) throw ConfigError(field, "cannot open trace file '" + path.string() + "'");
    auto trace = std::make_shared<Trace>(parse_trace(in, path.string()));
    if (trace->empty()) throw ConfigError(field, "trace file '" + path.string() + "' has no records");
    return trace;
}

}  // namespace detail

inline json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config", "cannot open '" + path.string() + "'");
    try {
        return json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw ConfigError("config", path.string() + ": " + e.what());
    }
}

/// Builds an experiment from a parsed document.
///
/// Agents without an explicit "base" get equal, consecutive slices of memory
/// in declaration order (CPUs first). Synthetic traces default their seed to
/// seed * 1000 + index.
inline ExperimentConfig parse_experiment(const json& doc, const std::filesystem::path& base_dir = {},
                                         const ConfigOverrides& over = {}) {
    detail::Fields f(doc, "");
    ExperimentConfig cfg;
    cfg.document = doc;
    cfg.base_dir = base_dir;
    cfg.name = f.text("name", cfg.name);
    cfg.seed = over.seed ? *over.seed : f.uint("seed", cfg.seed);
    if (over.seed) f.has("seed");
    cfg.horizon = over.horizon ? *over.horizon : f.uint("horizon", cfg.horizon);
    if (over.horizon) f.has("horizon");
    if (cfg.horizon < 1) throw ConfigError("horizon", "must be >= 1 cycle");
    cfg.cpu_frequency_ghz = f.real("cpu_frequency_ghz", cfg.cpu_frequency_ghz);
    if (!(cfg.cpu_frequency_ghz > 0.0)) throw ConfigError("cpu_frequency_ghz", "must be > 0");
    const double ghz = cfg.cpu_frequency_ghz;

    SystemConfig& sys = cfg.system;
    if (!f.has("dram")) {
        sys.dram = ddr3_1333_preset();
    } else if (f.raw("dram").is_string()) {
        // A string names a JSON file holding the dram object, relative to this config.
        sys.dram = detail::parse_dram(read_json_file(base_dir / f.raw("dram").get<std::string>()));
    } else {
        sys.dram = detail::parse_dram(f.raw("dram"));
    }
    if (f.has("cpu")) sys.cpu = detail::parse_cpu_params(f.raw("cpu"));
    sys.policy = detail::parse_policy(f.raw("policy"), cfg.seed);

    const json empty = json::array();
    const json& cpus = f.has("cpus") ? f.raw("cpus") : empty;
    const json& hwas = f.has("hwas") ? f.raw("hwas") : empty;
    if (!cpus.is_array()) throw ConfigError("cpus", "expected an array");
    if (!hwas.is_array()) throw ConfigError("hwas", "expected an array");
    const std::size_t agents = cpus.size() + hwas.size();
    if (agents == 0) throw ConfigError("agents", "no CPUs or HWAs configured");
    const std::uint64_t line = sys.dram.line_size;
    const std::uint64_t slice = sys.dram.total_bytes() / agents / line * line;
    if (slice == 0) throw ConfigError("agents", "more agents than memory lines");

    for (std::size_t i = 0; i < cpus.size(); ++i) {
        const std::string where = "cpus[" + std::to_string(i) + "]";
        detail::Fields c(cpus[i], where);
        CpuAgentSpec spec;
        spec.name = c.text("name", "cpu" + std::to_string(i));
        const bool file = c.has("trace");
        const bool synth = c.has("synth");
        if (file == synth) throw ConfigError(where + ".trace", "give exactly one of trace or synth");
        if (file) {
            std::filesystem::path p = c.text("trace");
            if (p.is_relative()) p = base_dir / p;
            spec.trace = detail::load_trace_file(p, where + ".trace");
        } else {
            detail::Fields s(c.raw("synth"), where + ".synth");
            SynthProfile prof;
            prof.mpki_target = s.real("mpki");
            prof.instruction_count = s.uint("instructions", 4'000'000);
            prof.locality = s.real("locality", 0.5);
            prof.seed = s.uint("seed", cfg.seed * 1000 + i);
            prof.write_fraction = s.real("write_fraction", prof.write_fraction);
            prof.region_base = s.uint("base", slice * i);
            prof.region_bytes = s.uint("region_bytes", slice);
            s.finish();
            if (prof.instruction_count < 1) throw ConfigError(where + ".synth.instructions", "must be >= 1");
            spec.trace = std::make_shared<Trace>(synthesize_trace(prof, sys.dram));
            spec.mpki_estimate = prof.mpki_target;
        }
        if (c.has("mpki_estimate")) spec.mpki_estimate = c.real("mpki_estimate");
        c.finish();
        sys.cpus.push_back(std::move(spec));
    }

    for (std::size_t h = 0; h < hwas.size(); ++h) {
        const std::string where = "hwas[" + std::to_string(h) + "]";
        detail::Fields w(hwas[h], where);
        HwaSpec spec;
        spec.name = w.text("name", "hwa" + std::to_string(h));
        const std::string klass = w.text("class", "ldp");
        if (klass == "ldp")
            spec.klass = HwaClass::ldp;
        else if (klass == "sdp")
            spec.klass = HwaClass::sdp;
        else
            throw ConfigError(where + ".class", "expected ldp or sdp, got '" + klass + "'");
        if (w.has("schedule")) {
            const json& sched = w.raw("schedule");
            if (!sched.is_array() || sched.empty()) throw ConfigError(where + ".schedule", "expected a non-empty array");
            for (std::size_t k = 0; k < sched.size(); ++k) {
                detail::Fields e(sched[k], where + ".schedule[" + std::to_string(k) + "]");
                const Cycle period = detail::parse_period(e, ghz);
                spec.schedule.push_back({period, detail::parse_requests(e, period, ghz, sys.dram.line_size)});
                e.finish();
            }
        } else {
            const Cycle period = detail::parse_period(w, ghz);
            spec.schedule.push_back({period, detail::parse_requests(w, period, ghz, sys.dram.line_size)});
        }
        const std::size_t slot = cpus.size() + h;
        spec.base = w.uint("base", slice * slot);
        spec.region_bytes = w.uint("region_bytes", w.has("base") ? 0 : slice);
        spec.stride = w.uint("stride", 0);
        spec.periods_per_frame = w.u32("periods_per_frame", 1);
        spec.target_fps = w.real("target_fps", spec.target_fps);
        spec.max_inflight = w.u32("max_inflight", spec.max_inflight);
        const std::string kind = w.text("kind", "read");
        if (kind == "read")
            spec.kind = AccessKind::read;
        else if (kind == "write")
            spec.kind = AccessKind::write;
        else
            throw ConfigError(where + ".kind", "expected read or write");
        w.finish();
        spec.validate(where);
        sys.hwas.push_back(std::move(spec));
    }

    if (f.has("sweep")) {
        const json& grid = f.raw("sweep");
        if (!grid.is_object()) throw ConfigError("sweep", "expected an object of parameter grids");
        for (const auto& [path, values] : grid.items()) {
            SweepAxis axis{path, {}};
            if (values.is_array()) {
                for (const auto& v : values) axis.values.push_back(v);
            } else if (values.is_object()) {
                detail::Fields r(values, "sweep." + path);
                const double from = r.real("from");
                const double to = r.real("to");
                const double step = r.real("step");
                r.finish();
                if (!(step > 0.0) || to < from) throw ConfigError("sweep." + path, "need step > 0 and to >= from");
                const auto n = static_cast<std::size_t>(std::floor((to - from) / step + 1e-9)) + 1;
                if (n > 100000) throw ConfigError("sweep." + path, "grid too large");
                for (std::size_t k = 0; k < n; ++k) {
                    // Round so 0.1 steps print as 0.3, not 0.30000000000000004.
                    const double v = std::round((from + step * static_cast<double>(k)) * 1e9) / 1e9;
                    axis.values.push_back(v);
                }
            } else {
                throw ConfigError("sweep." + path, "expected a list of values or {from, to, step}");
            }
            if (axis.values.empty()) throw ConfigError("sweep." + path, "grid is empty");
            cfg.sweep.push_back(std::move(axis));
        }
        if (cfg.sweep.empty()) throw ConfigError("sweep", "no parameters given");
        if (cfg.sweep.size() > 2) throw ConfigError("sweep", "at most two parameters may be swept");
    }
    f.finish();
    return cfg;
}

inline ExperimentConfig load_experiment(const std::filesystem::path& path, const ConfigOverrides& over = {}) {
    return parse_experiment(read_json_file(path), path.parent_path(), over);
}

/// Sets the value at a dotted path ("policy.cluster_factor", "hwas.2.period").
inline void set_path(json& doc, const std::string& dotted, const json& value) {
    std::string pointer;
    std::stringstream ss(dotted);
    std::string part;
    while (std::getline(ss, part, '.')) {
        if (part.empty()) throw ConfigError("sweep." + dotted, "malformed parameter path");
        pointer += "/" + part;
    }
    try {
        doc[json::json_pointer(pointer)] = value;
    } catch (const json::exception& e) {
        throw ConfigError("sweep." + dotted, e.what());
    }
}

}  // namespace qosmem
