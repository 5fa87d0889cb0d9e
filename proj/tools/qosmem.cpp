#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <qosmem/qosmem.hpp>

using namespace qosmem;

namespace {

struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<Cycle> horizon;
    std::string csv_out;
    std::string decision_log;
    unsigned jobs = 0;

    ConfigOverrides overrides() const { return ConfigOverrides{seed, horizon}; }
};

void emit(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path);
    if (!out) throw ConfigError("--csv-out", "cannot write '" + path + "'");
    out << text;
}

void print_summary(const ExperimentResult& r) {
    std::cerr << "policy " << r.policy << ", " << r.horizon << " cycles";
    if (r.weighted_speedup)
        std::cerr << ", WS " << format_number(r.weighted_speedup) << ", MS " << format_number(r.maximum_slowdown);
    std::cerr << '\n';
    for (const auto& h : r.hwas)
        std::cerr << "  " << h.name << ": met " << (h.met_ratio ? format_number(h.met_ratio) : "n/a") << ", fps "
                  << (h.fps ? format_number(h.fps) : "n/a") << '\n';
}

int cmd_run(const CommonFlags& f) {
    const ExperimentConfig cfg = load_experiment(f.config, f.overrides());
    AloneCache cache;
    const ExperimentResult r = run_experiment(cfg, cache);
    std::ostringstream csv;
    write_csv(csv, {r});
    emit(f.csv_out, csv.str());
    if (!f.decision_log.empty()) {
        std::ofstream log(f.decision_log);
        if (!log) throw ConfigError("--decision-log", "cannot write '" + f.decision_log + "'");
        log << format_decision_log(r.shared.decisions, r.shared.hwas, 0);
    }
    print_summary(r);
    return 0;
}

int cmd_sweep(const CommonFlags& f) {
    const ExperimentConfig cfg = load_experiment(f.config, f.overrides());
    AloneCache cache;
    const auto rows = run_sweep(cfg, cache, f.jobs, f.overrides());
    std::ostringstream csv;
    write_csv(csv, rows);
    emit(f.csv_out, csv.str());
    std::cerr << rows.size() << " grid points, " << cache.computed() << " alone runs\n";
    return 0;
}

int cmd_validate(const CommonFlags& f) {
    const ExperimentConfig cfg = load_experiment(f.config, f.overrides());
    std::size_t points = 1;
    for (const auto& axis : cfg.sweep) points *= axis.values.size();
    // Building the simulation runs the admission checks (urgent windows).
    Simulation sim(cfg.system);
    std::cout << "ok: " << cfg.name << ": " << cfg.system.cpus.size() << " CPUs, " << cfg.system.hwas.size()
              << " HWAs, policy " << to_string(cfg.system.policy.kind) << ", horizon " << cfg.horizon;
    if (!cfg.sweep.empty()) std::cout << ", " << points << " sweep points";
    std::cout << '\n';
    return 0;
}

int cmd_oracle(const CommonFlags& f) {
    const json doc = read_json_file(f.config);
    detail::Fields top(doc, "");
    DramConfig dram = oracle_memory(2);
    std::uint64_t instances = 200, max_requests = 12, seed = f.seed.value_or(1);
    std::uint32_t banks = 2;
    if (top.has("oracle")) {
        detail::Fields o(top.raw("oracle"), "oracle");
        instances = o.uint("instances", instances);
        max_requests = o.uint("max_requests", max_requests);
        banks = o.u32("banks", banks);
        if (!f.seed) seed = o.uint("seed", seed);
        o.finish();
    }
    if (top.has("dram")) {
        detail::Fields d(top.raw("dram"), "dram");
        if (d.has("timing")) dram.timing = detail::parse_timing(d.raw("timing"), "dram.timing", dram.timing);
        dram.cpu_cycles_per_dram_cycle = d.u32("cpu_cycles_per_dram_cycle", dram.cpu_cycles_per_dram_cycle);
        d.finish();
    }
    top.finish();
    if (banks < 1 || banks > 2) throw ConfigError("oracle.banks", "must be 1 or 2");
    if (max_requests < 1 || max_requests > 12) throw ConfigError("oracle.max_requests", "must lie in [1, 12]");
    dram.banks_per_rank = banks;
    dram.validate();

    std::uint64_t mismatches = 0;
    for (std::uint64_t i = 0; i < instances; ++i) {
        const auto reqs = random_tiny_instance(seed + i, banks, static_cast<std::uint32_t>(max_requests));
        const auto expect = oracle_frfcfs(reqs, banks, ScaledTiming::from(dram));
        const auto got = replay_on_controller(reqs, dram);
        if (expect != got) {
            ++mismatches;
            std::cout << "mismatch: instance seed " << seed + i << '\n';
            for (std::size_t k = 0; k < expect.size() && k < got.size(); ++k)
                if (!(expect[k] == got[k]))
                    std::cout << "  request " << expect[k].id << ": oracle completes at " << expect[k].completion
                              << ", controller at " << got[k].completion << '\n';
        }
    }
    std::cout << instances - mismatches << "/" << instances << " instances match\n";
    return mismatches ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cycle-level shared-DRAM simulator for CPU cores and deadline-driven accelerators"};
    app.require_subcommand(1);
    CommonFlags flags;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("config", flags.config, "JSON experiment file")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", flags.seed, "Seed for policy RNGs and synthetic traces");
        sub->add_option("--horizon", flags.horizon, "Simulated CPU cycles");
    };
    CLI::App* run = app.add_subcommand("run", "Run one experiment (alone runs, shared run, metrics)");
    add_common(run);
    run->add_option("--csv-out", flags.csv_out, "Write the CSV row here instead of stdout");
    run->add_option("--decision-log", flags.decision_log, "Write the meta-controller decision log (CSV)");

    CLI::App* sweep = app.add_subcommand("sweep", "Run every point of the config's sweep grid");
    add_common(sweep);
    sweep->add_option("--csv-out", flags.csv_out, "Write the CSV table here instead of stdout");
    sweep->add_option("--jobs", flags.jobs, "Worker threads (default: hardware concurrency)");

    CLI::App* validate = app.add_subcommand("validate", "Check a config without running it");
    add_common(validate);

    CLI::App* oracle = app.add_subcommand("oracle", "Cross-check the controller against the reference model");
    oracle->add_option("config", flags.config, "JSON oracle settings")->required()->check(CLI::ExistingFile);
    oracle->add_option("--seed", flags.seed, "First instance seed");

    CLI11_PARSE(app, argc, argv);
    try {
        if (app.got_subcommand(run)) return cmd_run(flags);
        if (app.got_subcommand(sweep)) return cmd_sweep(flags);
        if (app.got_subcommand(validate)) return cmd_validate(flags);
        if (app.got_subcommand(oracle)) return cmd_oracle(flags);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const SimulationAborted& e) {
        std::cerr << "aborted: " << e.what() << "\nlast meta-controller decisions:\n" << e.excerpt();
        return 3;
    } catch (const InvariantViolation& e) {
        std::cerr << "aborted: simulator invariant violated: " << e.what() << '\n';
        return 3;
    } catch (const MetricError& e) {
        std::cerr << "metric error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
