// Command-line front end: one subcommand per pipeline stage plus `report`,
// which runs every configured stage and writes the full artifact set.

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "hopfshock/error.hpp"
#include "hopfshock/pipeline.hpp"

using namespace hopfshock;

namespace {

void print_summary(const RunReport& rep) {
    fmt::print("config {}\n", rep.config_hash);
    for (const auto& s : rep.stages) {
        fmt::print("  stage {:<9} {:<8} {:8.2f} s", s.name, s.status, s.seconds);
        if (!s.error.empty()) fmt::print("  {}", s.error);
        fmt::print("\n");
    }
    for (const auto& c : rep.criteria)
        fmt::print("  criterion {:>2} {:<8} {:<36} {}\n", c.id, to_string(c.status), c.name, c.measured);
    for (const auto& f : rep.files) fmt::print("  wrote {}\n", f);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hopf bifurcation of viscous shocks: profiles, spectra, kernels, resummed inverses and orbits"};
    app.require_subcommand(1, 1);
    app.fallthrough();

    std::string config_path, out_dir;
    std::size_t threads = 0;
    bool no_cache = false;
    std::vector<std::string> stage_names;
    app.add_option("--config", config_path, "JSON config (comments allowed); built-in defaults when absent");
    app.add_option("--out", out_dir, "output directory (overrides output.dir)");
    app.add_option("--threads", threads, "worker cap inside stages")->check(CLI::PositiveNumber);
    app.add_flag("--no-cache", no_cache, "recompute every stage and leave the cache untouched");
    app.add_option("--stage", stage_names, "restrict `report` to these stages (repeatable)")
        ->check(CLI::IsMember(pipeline_stages()));

    std::string chosen;
    for (const auto& s : pipeline_stages())
        app.add_subcommand(s, "run the " + s + " stage")->callback([&chosen, s] { chosen = s; });
    app.add_subcommand("report", "run the configured stages and emit every artifact")->callback([&chosen] {
        chosen = "report";
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    RunConfig cfg;
    try {
        if (!config_path.empty()) cfg = RunConfig::from_file(config_path);
        if (!out_dir.empty()) cfg.output_dir = out_dir;
        if (threads > 0) cfg.threads = threads;
        if (no_cache) cfg.use_cache = false;
        if (chosen != "report") cfg.stages = {chosen};
        else if (!stage_names.empty()) cfg.stages = stage_names;
        cfg.validate();
    } catch (const Error& e) {
        fmt::print(stderr, "{}\n", e.what());
        return exit_code_for(static_cast<int>(e.kind()));
    }

    try {
        RunReport rep = run_pipeline(cfg);
        emit_report(rep, cfg.output_dir);
        print_summary(rep);
        if (const auto* bad = rep.failed_stage()) {
            fmt::print(stderr, "stage {} failed: {}\n", bad->name, bad->error);
            return exit_code_for(bad->error_kind);
        }
    } catch (const Error& e) {
        fmt::print(stderr, "{}\n", e.what());
        return exit_code_for(static_cast<int>(e.kind()));
    }
    return 0;
}
