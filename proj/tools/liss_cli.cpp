#include "liss/cli_io.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

int report(const std::exception& e)
{
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(liss::exit_code_for(e));
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Local incremental stationarity scheme for rate-independent damage"};
    app.require_subcommand(1);

    std::string config_path;
    auto* run = app.add_subcommand("run", "Run one LISS simulation and write CSV, VTK and log files");
    run->add_option("config", config_path, "Configuration file")->required();

    std::vector<double> tau_list, h_list;
    unsigned workers = 1;
    auto* study = app.add_subcommand("study", "Refinement study over step sizes or mesh sizes");
    study->add_option("config", config_path, "Configuration file")->required();
    auto* tau_opt = study->add_option("--tau-list", tau_list, "Step sizes, coarse to fine")->delimiter(',');
    auto* h_opt = study->add_option("--h-list", h_list, "Mesh sizes, coarse to fine")->delimiter(',');
    tau_opt->excludes(h_opt);
    study->add_option("--workers", workers, "Concurrent runs")->capture_default_str();

    auto* verify = app.add_subcommand("verify", "Property suite with JSON-lines output");
    verify->add_option("config", config_path, "Configuration file")->required();

    std::string emit_path;
    auto* mesh = app.add_subcommand("mesh", "Generate the configured mesh");
    mesh->add_option("config", config_path, "Configuration file")->required();
    mesh->add_option("--emit", emit_path, "Output path (.vtk for VTK, text format otherwise)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : static_cast<int>(liss::ExitCode::config);
    }

    try {
        const liss::RunConfig config = liss::parse_config(config_path);
        if (*run) {
            liss::run_command(config, std::cout);
        } else if (*study) {
            if (tau_list.empty() == h_list.empty()) {
                throw liss::ConfigError("study: give exactly one of --tau-list and --h-list");
            }
            const auto kind = tau_list.empty() ? liss::StudyKind::h : liss::StudyKind::tau;
            liss::study_command(config, kind, tau_list.empty() ? h_list : tau_list, std::cout, std::max(1u, workers));
        } else if (*verify) {
            const auto res = liss::verify_command(config, std::cout);
            if (!res.all_passed()) return static_cast<int>(liss::ExitCode::verify_failed);
        } else if (*mesh) {
            liss::mesh_command(config, emit_path, std::cout);
        }
    } catch (const std::exception& e) {
        return report(e);
    }
    return 0;
}
