#include "fcl/experiment.hpp"
#include "fcl/parallel.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <iostream>

namespace {

constexpr int kExitPass = 0, kExitFail = 1, kExitConfig = 2;

std::string default_out_dir()
{
    if (const char* e = std::getenv("FCL_OUT_DIR"); e && *e)
        return e;
    return "fcl_out";
}

void print_summary(const fcl::Report& r)
{
    for (const auto& t : r.tasks) {
        std::printf("%-26s %-5s %8.2fs\n", t.task.c_str(), t.status.c_str(), t.runtime_s);
        for (const auto& m : t.metrics)
            std::printf("    %-30s %.3e %s %.1e  %s\n", m.name.c_str(), m.value, m.upper ? "<=" : ">=", m.tol,
                        m.pass ? "ok" : "MISS");
        if (!t.error.empty())
            std::printf("    error: %s\n", t.error.c_str());
    }
    std::printf("%s: %s (%.2fs)\n", r.name.c_str(), r.status.c_str(), r.runtime_s);
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Forward checks and local reconstructions for connection Laplacians on weighted graphs"};
    app.require_subcommand(1);
    auto* run = app.add_subcommand("run", "Run the tasks of an experiment config and write a report");
    std::string config, out;
    int workers = 1;
    long long seed_override = -1;
    run->add_option("config", config, "Experiment config (JSON)")->required();
    run->add_option("--out", out, "Output directory (default: config output_dir, then $FCL_OUT_DIR, then ./fcl_out)");
    run->add_option("--workers", workers, "Worker threads for parallel sweeps (0 = all cores)")
        ->check(CLI::NonNegativeNumber);
    run->add_option("--seed-override", seed_override, "Replace the base and bundle seeds by K, K+1, K+2")
        ->check(CLI::NonNegativeNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitPass : kExitConfig;
    }

    fcl::ExperimentConfig cfg;
    try {
        cfg = fcl::load_config(config);
        if (seed_override >= 0)
            fcl::apply_seed_override(cfg, static_cast<std::uint64_t>(seed_override));
        if (!out.empty())
            cfg.output_dir = out;
        else if (cfg.output_dir.empty())
            cfg.output_dir = default_out_dir();
        fcl::validate(cfg);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    }

    fcl::set_worker_count(workers);
    fcl::Report rep = fcl::run_experiment(cfg);
    print_summary(rep);
    try {
        for (const auto& p : fcl::emit_report(rep, cfg.output_dir))
            std::printf("wrote %s\n", p.c_str());
    } catch (const std::exception& e) {
        std::cerr << "report error: " << e.what() << '\n';
        return kExitFail;
    }
    return rep.passed() ? kExitPass : kExitFail;
}
