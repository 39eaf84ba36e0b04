// kmsprobe command line: run | check | list-kernels | plotdata.

#include <iostream>

#include "CLI11.hpp"
#include "kmsprobe/scenario.hpp"

namespace sc = kmsprobe::scenario;

namespace {

int run(const std::string& file, const std::string& out, unsigned workers, const std::string& overrides) {
    auto cfg = sc::load(file);
    if (!overrides.empty()) sc::apply_tolerance_overrides(cfg, overrides);
    const auto res = sc::run_scenario(cfg, {out, workers});
    for (const auto& c : res.checks)
        std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << " [" << c.subject << "] " << c.detail << "\n";
    for (const auto& f : res.failures) std::cout << "NUMERICAL " << f << "\n";
    std::cout << "results: " << res.directory.string() << "\n";
    return res.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"KMS thermometry with Unruh-DeWitt detectors"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kmsprobe::kLibraryVersion));

    std::string file, out, overrides, results, kind;
    unsigned workers = 1;

    auto* run_cmd = app.add_subcommand("run", "run a scenario file");
    run_cmd->add_option("scenario", file, "scenario JSON file")->required();
    run_cmd->add_option("--out", out, "output directory (overrides output.directory)");
    run_cmd->add_option("--workers", workers, "worker threads for sweep points")->check(CLI::Range(1u, 256u));
    run_cmd->add_option("--tolerance-overrides", overrides,
                        "comma-separated key=value: edr, detailed_balance, anti_periodicity, route, mu_spread, "
                        "smearing_shift, validity");

    auto* check_cmd = app.add_subcommand("check", "validate a scenario file without computing");
    check_cmd->add_option("scenario", file, "scenario JSON file")->required();
    check_cmd->add_option("--tolerance-overrides", overrides, "as for run");

    auto* list_cmd = app.add_subcommand("list-kernels", "list the kernel catalog");

    auto* plot_cmd = app.add_subcommand("plotdata", "emit a plot-ready series from a results directory");
    plot_cmd->add_option("results", results, "results directory")->required();
    plot_cmd->add_option("--kind", kind, "sweep | spectrum | kernel")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : sc::kExitValidation;
    }

    try {
        if (*run_cmd) return run(file, out, workers, overrides);
        if (*check_cmd) {
            auto cfg = sc::load(file);
            if (!overrides.empty()) sc::apply_tolerance_overrides(cfg, overrides);
            std::cout << "ok: " << cfg.name << "\n";
            return sc::kExitOk;
        }
        if (*list_cmd) {
            for (const auto& [name, what] : sc::kernel_catalog()) std::cout << name << "\t" << what << "\n";
            return sc::kExitOk;
        }
        if (*plot_cmd) {
            sc::emit_plotdata(results, kind, std::cout);
            return sc::kExitOk;
        }
    } catch (const kmsprobe::ValidationError& e) {
        std::cerr << "validation error:\n" << e.what() << "\n";
        return sc::kExitValidation;
    } catch (const kmsprobe::UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return sc::kExitValidation;
    } catch (const kmsprobe::Error& e) {
        std::cerr << e.kind() << ": " << e.what() << "\n";
        return sc::kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return sc::kExitNumerical;
    }
    return sc::kExitOk;
}
