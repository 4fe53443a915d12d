#include <string>

#include <CLI11.hpp>

#include "agediff/cli.hpp"

int main(int argc, char** argv) {
    using namespace agediff;
    CLI::App app{"Numerical laboratory for age-structured diffusive population models"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(cli::kToolName) + " " +
                                          cli::kToolVersion);

    std::string config_path;
    std::string plot_input, plot_kind = "norms", plot_output = "plot.svg";

    auto add_config_cmd = [&](const char* name, const char* desc) {
        CLI::App* sub = app.add_subcommand(name, desc);
        sub->add_option("config", config_path, "run configuration file (json)")
            ->required();
        return sub;
    };

    CLI::App* sim = add_config_cmd("simulate", "advance the nonlinear model");
    CLI::App* equ = add_config_cmd("equilibrium", "compute an equilibrium");
    CLI::App* spc = add_config_cmd("spectrum", "linearized spectral report");
    CLI::App* r0c = add_config_cmd("r0", "net reproduction number r(Q0)");
    CLI::App* lam = add_config_cmd("lambda0", "threshold rate with r(Q_lambda) = 1");
    CLI::App* ver = add_config_cmd("verify", "perturb, simulate, fit decay rate");

    CLI::App* plt = app.add_subcommand("plot", "render a csv output as svg");
    plt->add_option("input", plot_input, "csv produced by this tool")->required();
    plt->add_option("--kind", plot_kind, "norms | decay | field");
    plt->add_option("-o,--output", plot_output, "svg output path");

    CLI11_PARSE(app, argc, argv);

    return cli::run_guarded([&]() -> int {
        if (plt->parsed()) return cli::cmd_plot(plot_input, plot_kind, plot_output);
        RunConfig cfg = load_config(config_path);
        if (sim->parsed()) return cli::cmd_simulate(cfg);
        if (equ->parsed()) return cli::cmd_equilibrium(cfg);
        if (spc->parsed()) return cli::cmd_spectrum(cfg);
        if (r0c->parsed()) return cli::cmd_r0(cfg);
        if (lam->parsed()) return cli::cmd_lambda0(cfg);
        if (ver->parsed()) return cli::cmd_verify(cfg);
        return cli::exit_config;
    });
}
