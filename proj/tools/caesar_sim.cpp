// Command-line driver: `run` executes an experiment file, `compare` summarizes
// finished runs against a target accuracy.

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "caesar/experiment.hpp"

namespace {

int do_run(const std::string& config_path, const std::string& strategy_override,
           bool has_seed, std::uint64_t seed_override, const std::string& out_override,
           bool quiet) {
    caesar::ExperimentSpec spec = caesar::parse_experiment_file(config_path);
    if (!strategy_override.empty()) {
        spec.base.strategy = caesar::strategy_from_string(strategy_override);
        caesar::validate_config(spec.base);
    }
    if (has_seed) spec.seeds = {seed_override};
    const std::string out_root = out_override.empty() ? spec.output_dir : out_override;
    caesar::run_all(spec, out_root, quiet, std::cout);
    return 0;
}

int do_compare(const std::vector<std::string>& run_dirs, double target_acc,
               const std::string& json_path) {
    std::vector<caesar::RunReport> reports;
    reports.reserve(run_dirs.size());
    for (const auto& dir : run_dirs) reports.push_back(caesar::report_run(dir, target_acc));
    caesar::print_report_table(std::cout, reports, target_acc);
    if (!json_path.empty()) {
        std::ofstream out(json_path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open " + json_path);
        out << caesar::reports_json_text(reports, target_acc);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"simulator for communication-efficient federated learning"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "run an experiment described by a JSON config");
    std::string config_path;
    std::string strategy_override;
    std::uint64_t seed_override = 0;
    std::string out_override;
    bool quiet = false;
    run->add_option("--config", config_path, "experiment JSON file")->required();
    run->add_option("--strategy", strategy_override,
                    "override the configured strategy (caesar|fedavg|fic|cac)");
    auto* seed_opt = run->add_option("--seed", seed_override,
                                     "run only this master seed, overriding the seeds list");
    run->add_option("--out", out_override, "output directory (default from config)");
    run->add_flag("--quiet", quiet, "suppress per-run progress lines");

    auto* cmp = app.add_subcommand("compare", "summarize runs against a target accuracy");
    std::vector<std::string> run_dirs;
    double target_acc = 0.0;
    std::string json_path;
    cmp->add_option("--runs", run_dirs, "run directories to compare")->required();
    cmp->add_option("--target-acc", target_acc, "target test accuracy")->required();
    cmp->add_option("--json", json_path, "also write the comparison as JSON to this file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (run->parsed())
            return do_run(config_path, strategy_override, seed_opt->count() > 0,
                          seed_override, out_override, quiet);
        return do_compare(run_dirs, target_acc, json_path);
    } catch (const caesar::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return run->parsed() ? 2 : 1;
    }
}
