#pragma once

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "agediff/config.hpp"
#include "agediff/equilibrium.hpp"
#include "agediff/io.hpp"
#include "agediff/model.hpp"
#include "agediff/spectral.hpp"
#include "agediff/stability.hpp"
#include "agediff/transport.hpp"

namespace agediff::cli {

constexpr const char* kToolName = "agediff";
constexpr const char* kToolVersion = "0.1.0";

enum ExitCode : int {
    exit_ok = 0,
    exit_config = 2,
    exit_dynamics = 3,
    exit_io = 4,
    exit_numeric = 5,
};

namespace fs = std::filesystem;

namespace cli_detail {

inline json meta_json(const RunConfig& cfg) {
    return json{{"tool", kToolName},
                {"version", kToolVersion},
                {"format", 1},
                {"config", cfg.resolved}};
}

inline fs::path prepare_output(const RunConfig& cfg) {
    fs::path dir(cfg.directory);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string());
    return dir;
}

inline void write_json(const fs::path& p, const json& j) {
    write_text_file(p, j.dump(2) + "\n");
}

// Initial data expression in (a, x); z must not appear.
inline DensityField initial_field(const std::string& expr_text, const Grid& grid) {
    RateExpr e;
    try {
        e = RateExpr::parse(expr_text);
    } catch (const ExprError& err) {
        throw ConfigError(std::string("config: run.u0: ") + err.what());
    }
    if (e.uses_z()) throw ConfigError("config: run.u0 must not depend on z");
    return DensityField::from_function(
        grid, [&](double a, double x) { return e.eval(0.0, a, x); });
}

inline void validate_or_throw(const ModelSpec& spec, const Grid& grid,
                              const RunConfig& cfg) {
    std::vector<RateViolation> v;
    try {
        v = validate_model(spec, grid, cfg.z_lo, cfg.z_hi);
    } catch (const EvalError& e) {
        throw ConfigError(std::string("config: model evaluation failed: ") + e.what());
    }
    if (!v.empty()) {
        const auto& f = v.front();
        throw ConfigError("config: model violates sign conditions: " + f.rate + "(z=" +
                          format_double(f.z) + ", a=" + format_double(f.a) + ", x=" +
                          format_double(f.x) + ") = " + format_double(f.value) + " (" +
                          std::to_string(v.size()) + " violating nodes)");
    }
}

inline json equilibrium_json(const EquilibriumResult& eq) {
    json j{{"residual", eq.residual},
           {"method", eq.method == EquilibriumMethod::march ? "march" : "newton"},
           {"iterations", eq.iterations},
           {"converged", eq.converged},
           {"phibar", std::vector<double>(eq.phibar.data(),
                                          eq.phibar.data() + eq.phibar.size())}};
    if (eq.blowup) j["blowup"] = {{"t", eq.blowup->t}, {"norm", eq.blowup->norm}};
    return j;
}

inline EquilibriumResult trivial_equilibrium(const ModelSpec& spec, const Grid& grid) {
    EquilibriumResult eq;
    eq.phi = DensityField::zero(grid);
    eq.phibar = Vector::Zero(grid.n_space());
    eq.residual = equilibrium_residual(eq.phi, spec, grid);
    eq.converged = true;
    eq.method = EquilibriumMethod::march;
    eq.iterations = 0;
    return eq;
}

inline EquilibriumResult solve_equilibrium(const std::string& method,
                                           const DensityField& u0, const ModelSpec& spec,
                                           const Grid& grid, double tol, int max_steps,
                                           int max_iters) {
    if (method == "march")
        return find_equilibrium_march(u0, spec, grid, tol, max_steps);
    if (method == "newton")
        return find_equilibrium_newton(u0, spec, grid, tol, max_iters);
    if (method == "march+newton") {
        EquilibriumResult m =
            find_equilibrium_march(u0, spec, grid, std::max(tol, 1e-6), max_steps);
        if (m.blowup) return m;
        EquilibriumResult n = find_equilibrium_newton(m.phi, spec, grid, tol, max_iters);
        n.iterations += m.iterations;
        return n;
    }
    throw ConfigError("config: run.method must be march, newton, or march+newton");
}

inline json spectral_json(const SpectralReport& rep) {
    json j{{"spectral_bound", rep.s0},
           {"s0_from_propagation", rep.s0_from_propagation},
           {"growth_bound_estimate", rep.omega_est},
           {"growth_bound_converged", rep.omega_converged},
           {"r_q0", rep.r_q0},
           {"margin", rep.margin},
           {"verdict", rep.verdict}};
    j["lambda0"] = rep.lambda0 ? json(*rep.lambda0) : json(nullptr);
    j["r_qphi0"] = rep.r_qphi0 ? json(*rep.r_qphi0) : json(nullptr);
    j["dominant_eigenvector"] = std::vector<double>(
        rep.dominant_eigenvector.data(),
        rep.dominant_eigenvector.data() + rep.dominant_eigenvector.size());
    return j;
}

}  // namespace cli_detail

inline int cmd_simulate(const RunConfig& cfg) {
    using namespace cli_detail;
    check_run_keys(cfg.run, {"T", "u0", "norm_cap", "record_boundary"});
    Grid grid = cfg.make_grid();
    ModelSpec spec = cfg.make_spec();
    validate_or_throw(spec, grid, cfg);

    SimOptions opts;
    opts.horizon = run_require<double>(cfg.run, "T");
    opts.norm_cap = run_value<double>(cfg.run, "norm_cap", 1e8);
    opts.record_boundary = run_value<bool>(cfg.run, "record_boundary", true);
    opts.snapshot_stride = cfg.snapshot_stride;
    opts.check();

    DensityField u0 =
        initial_field(run_value<std::string>(cfg.run, "u0", std::string("1")), grid);

    fs::path dir = prepare_output(cfg);
    Trajectory traj = simulate(u0, spec, grid, opts);

    std::vector<std::vector<double>> rows;
    rows.reserve(traj.times.size());
    for (size_t k = 0; k < traj.times.size(); ++k)
        rows.push_back({traj.times[k], traj.norms[k]});
    write_text_file(dir / "norms.csv", csv_of_columns("t,norm", rows));

    if (opts.record_boundary) {
        std::vector<std::vector<double>> brows;
        for (size_t k = 0; k < traj.boundary.size(); ++k)
            for (int i = 0; i < grid.n_space(); ++i)
                brows.push_back({traj.boundary.times[k], grid.x_node(i),
                                 traj.boundary.values[k](i)});
        write_text_file(dir / "boundary.csv", csv_of_columns("t,x,B", brows));
    }

    json meta = meta_json(cfg);
    if (!traj.snapshots.empty()) {
        json snaps = json::array();
        for (size_t k = 0; k < traj.snapshots.size(); ++k) {
            char name[40];
            std::snprintf(name, sizeof name, "snapshot_%06zu.csv", k);
            write_text_file(dir / name, field_csv(traj.snapshots[k].second, grid));
            snaps.push_back({{"file", name}, {"t", traj.snapshots[k].first}});
        }
        meta["snapshots"] = snaps;
    }
    write_json(dir / "meta.json", meta);

    if (traj.blew_up()) {
        write_json(dir / "blowup.json",
                   json{{"t", traj.blowup->t}, {"norm", traj.blowup->norm}});
        std::cout << "blow-up at t = " << format_double(traj.blowup->t)
                  << " with norm " << format_double(traj.blowup->norm) << "\n";
        return exit_dynamics;
    }
    std::cout << "simulated " << traj.times.size() - 1 << " steps to t = "
              << format_double(traj.times.back()) << ", final norm "
              << format_double(traj.norms.back()) << "\n";
    return exit_ok;
}

inline int cmd_equilibrium(const RunConfig& cfg) {
    using namespace cli_detail;
    check_run_keys(cfg.run, {"method", "tol", "max_steps", "max_iters", "u0"});
    Grid grid = cfg.make_grid();
    ModelSpec spec = cfg.make_spec();
    validate_or_throw(spec, grid, cfg);

    std::string method = run_value<std::string>(cfg.run, "method",
                                                std::string("march+newton"));
    double tol = run_value<double>(cfg.run, "tol", 1e-10);
    int max_steps = run_value<int>(cfg.run, "max_steps", 200000);
    int max_iters = run_value<int>(cfg.run, "max_iters", 25);
    DensityField u0 = cfg.run.contains("u0")
                          ? initial_field(run_require<std::string>(cfg.run, "u0"), grid)
                          : make_equilibrium_seed(spec, grid);

    fs::path dir = prepare_output(cfg);
    EquilibriumResult eq =
        solve_equilibrium(method, u0, spec, grid, tol, max_steps, max_iters);

    write_text_file(dir / "equilibrium.csv", field_csv(eq.phi, grid));
    write_json(dir / "equilibrium.json", equilibrium_json(eq));
    write_json(dir / "meta.json", meta_json(cfg));

    std::cout << "equilibrium " << (eq.converged ? "converged" : "did not converge")
              << ", residual " << format_double(eq.residual) << " after "
              << eq.iterations << " iterations\n";
    if (eq.blowup) {
        std::cout << "march blew up at t = " << format_double(eq.blowup->t) << "\n";
        return exit_dynamics;
    }
    return eq.converged ? exit_ok : exit_numeric;
}

inline int cmd_spectrum(const RunConfig& cfg) {
    using namespace cli_detail;
    check_run_keys(cfg.run, {"phi", "tol", "max_steps", "max_iters", "u0",
                             "dense_threshold", "probe_T"});
    Grid grid = cfg.make_grid();
    ModelSpec spec = cfg.make_spec();
    validate_or_throw(spec, grid, cfg);

    std::string about = run_value<std::string>(cfg.run, "phi", std::string("zero"));
    EquilibriumResult eq;
    if (about == "zero") {
        eq = trivial_equilibrium(spec, grid);
    } else if (about == "equilibrium") {
        DensityField u0 =
            cfg.run.contains("u0")
                ? initial_field(run_require<std::string>(cfg.run, "u0"), grid)
                : make_equilibrium_seed(spec, grid);
        eq = solve_equilibrium("march+newton", u0, spec, grid,
                               run_value<double>(cfg.run, "tol", 1e-10),
                               run_value<int>(cfg.run, "max_steps", 200000),
                               run_value<int>(cfg.run, "max_iters", 25));
        if (eq.blowup) return exit_dynamics;
        if (!eq.converged) return exit_numeric;
    } else {
        throw ConfigError("config: run.phi must be 'zero' or 'equilibrium'");
    }

    SpectralOptions sopts;
    sopts.dense_threshold = run_value<int>(cfg.run, "dense_threshold", 4000);
    sopts.probe_T = run_value<double>(cfg.run, "probe_T", 0.0);

    fs::path dir = prepare_output(cfg);
    SpectralReport rep = build_spectral_report(eq.phi, spec, grid, sopts);
    write_json(dir / "spectrum.json", spectral_json(rep));
    write_json(dir / "meta.json", meta_json(cfg));

    std::cout << "spectral bound s0 = " << format_double(rep.s0) << " ("
              << rep.verdict << "), growth bound estimate " << format_double(rep.omega_est)
              << ", r(Q0) = " << format_double(rep.r_q0) << "\n";
    return rep.omega_converged ? exit_ok : exit_numeric;
}

inline int cmd_r0(const RunConfig& cfg) {
    using namespace cli_detail;
    check_run_keys(cfg.run, {});
    Grid grid = cfg.make_grid();
    ModelSpec spec = cfg.make_spec();
    validate_or_throw(spec, grid, cfg);

    fs::path dir = prepare_output(cfg);
    double r = spectral_radius(q_lambda(0.0, spec, grid));
    json j{{"value", r}, {"verdict", r < 1.0 ? "stable" : "unstable"}};
    try {
        ClosedFormR0 cf = closed_form_r0(spec, grid);
        j["closed_form"] = cf.value;
        j["analytic_constant_rate"] = cf.analytic ? json(*cf.analytic) : json(nullptr);
    } catch (const std::invalid_argument&) {
        j["closed_form"] = nullptr;
        j["analytic_constant_rate"] = nullptr;
    }
    write_json(dir / "r0.json", j);
    write_json(dir / "meta.json", meta_json(cfg));

    std::cout << "r(Q0) = " << format_double(r) << ": trivial equilibrium "
              << (r < 1.0 ? "stable (r < 1)" : "unstable (r >= 1)") << "\n";
    return exit_ok;
}

inline int cmd_lambda0(const RunConfig& cfg) {
    using namespace cli_detail;
    check_run_keys(cfg.run, {"bracket"});
    Grid grid = cfg.make_grid();
    ModelSpec spec = cfg.make_spec();
    validate_or_throw(spec, grid, cfg);

    double lo = -1.0, hi = 1.0;
    if (cfg.run.contains("bracket")) {
        auto br = run_require<std::vector<double>>(cfg.run, "bracket");
        if (br.size() != 2) throw ConfigError("config: run.bracket must be [lo, hi]");
        lo = br[0];
        hi = br[1];
    }

    fs::path dir = prepare_output(cfg);
    Lambda0Result res = lambda0_bisect(spec, grid, lo, hi);
    write_json(dir / "lambda0.json",
               json{{"value", res.lambda0},
                    {"bracket", {res.bracket_lo, res.bracket_hi}},
                    {"iterations", res.iterations}});
    write_json(dir / "meta.json", meta_json(cfg));

    std::cout << "lambda0 = " << format_double(res.lambda0) << " (sign "
              << (res.lambda0 < 0 ? "negative: stable" : "nonnegative: not stable")
              << ")\n";
    return exit_ok;
}

inline int cmd_verify(const RunConfig& cfg) {
    using namespace cli_detail;
    check_run_keys(cfg.run, {"epsilon", "trials", "T", "seed", "rate_tol", "equilibrium",
                             "equilibrium_file", "signed", "tol", "max_steps",
                             "max_iters", "u0", "dense_threshold"});
    Grid grid = cfg.make_grid();
    ModelSpec spec = cfg.make_spec();
    validate_or_throw(spec, grid, cfg);

    std::string about = run_value<std::string>(cfg.run, "equilibrium",
                                               std::string("zero"));
    EquilibriumResult eq;
    if (cfg.run.contains("equilibrium_file")) {
        // a previously computed equilibrium snapshot; certify it before use
        eq.phi = load_field_csv(run_require<std::string>(cfg.run, "equilibrium_file"),
                                grid);
        eq.phibar = weighted_age_integral(eq.phi, spec, grid);
        eq.residual = equilibrium_residual(eq.phi, spec, grid);
        double tol = run_value<double>(cfg.run, "tol", 1e-8);
        if (eq.residual > tol)
            throw ConfigError("config: equilibrium_file fails the residual check: " +
                              format_double(eq.residual) + " > " + format_double(tol));
        eq.converged = true;
    } else if (about == "zero") {
        eq = trivial_equilibrium(spec, grid);
    } else {
        DensityField u0 =
            cfg.run.contains("u0")
                ? initial_field(run_require<std::string>(cfg.run, "u0"), grid)
                : make_equilibrium_seed(spec, grid);
        eq = solve_equilibrium(about, u0, spec, grid,
                               run_value<double>(cfg.run, "tol", 1e-10),
                               run_value<int>(cfg.run, "max_steps", 200000),
                               run_value<int>(cfg.run, "max_iters", 25));
        if (eq.blowup) return exit_dynamics;
        if (!eq.converged) return exit_numeric;
    }

    SpectralOptions sopts;
    sopts.dense_threshold = run_value<int>(cfg.run, "dense_threshold", 4000);
    SpectralReport srep = build_spectral_report(eq.phi, spec, grid, sopts);

    StabilityOptions vopts;
    vopts.rate_tol = run_value<double>(cfg.run, "rate_tol", 0.15);
    vopts.signed_perturbation = run_value<bool>(cfg.run, "signed", false);

    double T = run_value<double>(cfg.run, "T", 5.0 * grid.a_max());
    StabilityReport rep = verify_stability(
        eq, spec, grid, run_value<double>(cfg.run, "epsilon", 1e-3),
        run_value<int>(cfg.run, "trials", 5),
        T, static_cast<uint64_t>(run_value<double>(cfg.run, "seed", 42.0)), srep.s0,
        vopts);

    fs::path dir = prepare_output(cfg);
    json trials = json::array();
    for (const auto& tr : rep.trial_results) {
        trials.push_back({{"index", tr.index},
                          {"omega_fit", tr.omega_fit},
                          {"r_squared", tr.r_squared},
                          {"decayed", tr.decayed},
                          {"rate_ok", tr.rate_ok},
                          {"degenerate", tr.degenerate},
                          {"blew_up", tr.blew_up},
                          {"initial_deviation", tr.initial_deviation},
                          {"final_deviation", tr.final_deviation}});
        std::vector<std::vector<double>> rows;
        rows.reserve(tr.times.size());
        for (size_t k = 0; k < tr.times.size(); ++k)
            rows.push_back({tr.times[k], tr.deviations[k]});
        char name[40];
        std::snprintf(name, sizeof name, "decay_trial%d.csv", tr.index);
        write_text_file(dir / name, csv_of_columns("t,deviation", rows));
    }
    write_json(dir / "stability.json",
               json{{"epsilon", rep.epsilon},
                    {"trials", rep.trials},
                    {"seed", rep.seed},
                    {"predicted_s0", rep.predicted_s0},
                    {"rate_tol", rep.rate_tol},
                    {"rate_floor", rep.rate_floor},
                    {"pass", rep.pass},
                    {"trial_results", trials}});
    write_json(dir / "spectrum.json", spectral_json(srep));
    write_json(dir / "meta.json", meta_json(cfg));

    std::cout << "stability verification " << (rep.pass ? "PASS" : "FAIL")
              << ": s0 = " << format_double(srep.s0) << ", " << rep.trials
              << " trials at epsilon " << format_double(rep.epsilon) << "\n";
    for (const auto& tr : rep.trial_results)
        std::cout << "  trial " << tr.index << ": omega_fit = "
                  << format_double(tr.omega_fit) << " R2 = "
                  << format_double(tr.r_squared)
                  << (tr.decayed ? " decayed" : " NOT-DECAYED")
                  << (tr.blew_up ? " BLOWUP" : "") << "\n";
    return exit_ok;
}

inline int cmd_plot(const fs::path& input, const std::string& kind,
                    const fs::path& output) {
    std::string body = read_text_file(input);
    // malformed input is a usage error (exit 2), unlike filesystem failures
    std::string svg;
    try {
        ParsedCsv csv = parse_csv(body);
        if (kind == "norms" || kind == "decay") {
            if (csv.rows.empty() || csv.header.size() < 2)
                throw IoError("plot: expected a two-column csv with at least one row");
            std::vector<double> ts, ns;
            for (const auto& r : csv.rows) {
                if (r.size() < 2) throw IoError("plot: short row in csv");
                ts.push_back(r[0]);
                ns.push_back(r[1]);
            }
            svg = svg_semilog_chart(ts, ns, csv.header[0], csv.header[1]);
        } else if (kind == "field") {
            if (csv.rows.empty()) throw IoError("plot: field csv has no rows");
            svg = svg_heatmap(csv.rows);
        } else {
            throw ConfigError("plot: kind must be norms, decay, or field");
        }
    } catch (const IoError& e) {
        throw ConfigError(e.what());
    }
    write_text_file(output, svg);
    std::cout << "wrote " << output.string() << "\n";
    return exit_ok;
}

// Uniform error-to-exit-code mapping for the command entry points.
template <typename Fn>
int run_guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_config;
    } catch (const ExprError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_config;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_io;
    } catch (const BracketError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_numeric;
    } catch (const PowerIterationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_numeric;
    } catch (const NoBracketError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_numeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_numeric;
    }
}

}  // namespace agediff::cli
