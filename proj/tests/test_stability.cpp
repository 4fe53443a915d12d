#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "agediff/io.hpp"
#include "agediff/spectral.hpp"
#include "agediff/stability.hpp"
#include "support/oracles.hpp"

using namespace agediff;

namespace {

ModelSpec tuned_model(double target_r0, const Grid& g) {
    ModelSpec base = ModelSpec::from_strings("0.1", "1", "1", "1");
    double unit = renewal_number(base, g, 0.0);
    return ModelSpec::from_strings("0.1", "1",
                                   format_double(target_r0) + "/" + format_double(unit),
                                   "1");
}

EquilibriumResult trivial_eq(const ModelSpec& spec, const Grid& g) {
    EquilibriumResult eq;
    eq.phi = DensityField::zero(g);
    eq.phibar = Vector::Zero(g.n_space());
    eq.residual = 0.0;
    eq.converged = true;
    return eq;
}

}  // namespace

TEST_CASE("decay-rate fitting") {
    SECTION("exact exponential") {
        std::vector<double> ts, ns;
        for (int k = 0; k <= 200; ++k) {
            double t = 0.05 * k;
            ts.push_back(t);
            ns.push_back(std::exp(-0.7 * t));
        }
        DecayFit fit = fit_decay_rate(ts, ns, 0.0, 10.0);
        CHECK(std::abs(fit.omega_fit - 0.7) <= 1e-10);
        CHECK(fit.r_squared == Catch::Approx(1.0).epsilon(1e-12));
    }
    SECTION("noisy exponential") {
        std::vector<double> ts, ns;
        for (int k = 0; k <= 400; ++k) {
            double t = 0.05 * k;
            ts.push_back(t);
            ns.push_back(std::exp(-0.7 * t) * (1.0 + 0.01 * std::sin(t)));
        }
        DecayFit fit = fit_decay_rate(ts, ns, 0.0, 20.0);
        CHECK(std::abs(fit.omega_fit - 0.7) <= 0.01);
    }
    SECTION("constant series") {
        std::vector<double> ts{0, 1, 2, 3}, ns{2.5, 2.5, 2.5, 2.5};
        DecayFit fit = fit_decay_rate(ts, ns, 0.0, 3.0);
        CHECK(fit.omega_fit == 0.0);
        CHECK(fit.r_squared == 1.0);
    }
    SECTION("window truncates at an exact zero") {
        std::vector<double> ts{0, 1, 2, 3, 4}, ns{1.0, 0.5, 0.25, 0.0, 0.0};
        DecayFit fit = fit_decay_rate(ts, ns, 0.0, 4.0);
        CHECK(fit.points == 3);
        CHECK(std::abs(fit.omega_fit - std::log(2.0)) <= 1e-12);
    }
    SECTION("degenerate window is an error") {
        std::vector<double> ts{0, 1}, ns{0.0, 0.0};
        CHECK_THROWS_AS(fit_decay_rate(ts, ns, 0.0, 1.0), std::invalid_argument);
    }
}

TEST_CASE("subcritical trivial equilibrium: trials decay at the predicted rate") {
    Grid g(2.0, 100, 8, 0.0, 1.0);
    ModelSpec spec = tuned_model(0.8, g);
    LinearizedGenerator gen = assemble_generator(DensityField::zero(g), spec, g);
    double s0 = spectral_bound(gen).s0;
    REQUIRE(s0 < 0.0);

    StabilityReport rep = verify_stability(trivial_eq(spec, g), spec, g, 1e-3, 3, 10.0,
                                           2024, s0);
    CHECK(rep.pass);
    for (const auto& tr : rep.trial_results) {
        CHECK(tr.decayed);
        CHECK(std::abs(tr.omega_fit - std::abs(s0)) <= 0.15 * std::abs(s0));
        CHECK(tr.r_squared > 0.99);
    }
}

TEST_CASE("supercritical twin grows and fails the verdict") {
    Grid g(2.0, 100, 8, 0.0, 1.0);
    ModelSpec spec = tuned_model(1.2, g);
    LinearizedGenerator gen = assemble_generator(DensityField::zero(g), spec, g);
    double s0 = spectral_bound(gen).s0;
    REQUIRE(s0 > 0.0);

    StabilityReport rep = verify_stability(trivial_eq(spec, g), spec, g, 1e-3, 2, 10.0,
                                           99, s0);
    CHECK_FALSE(rep.pass);
    for (const auto& tr : rep.trial_results) {
        CHECK_FALSE(tr.decayed);
        CHECK(tr.final_deviation > tr.initial_deviation);
    }
}

TEST_CASE("zero perturbation is a degenerate pass") {
    Grid g(2.0, 50, 4, 0.0, 1.0);
    ModelSpec spec = tuned_model(0.8, g);
    StabilityReport rep = verify_stability(trivial_eq(spec, g), spec, g, 0.0, 2, 8.0,
                                           7, -0.3);
    CHECK(rep.pass);
    for (const auto& tr : rep.trial_results) {
        CHECK(tr.degenerate);
        for (double d : tr.deviations) CHECK(d <= 1e-12);
    }
}

TEST_CASE("reports are reproducible bit for bit") {
    Grid g(2.0, 60, 6, 0.0, 1.0);
    ModelSpec spec = tuned_model(0.8, g);
    StabilityReport a = verify_stability(trivial_eq(spec, g), spec, g, 1e-3, 3, 6.5,
                                         4242, -0.35);
    StabilityReport b = verify_stability(trivial_eq(spec, g), spec, g, 1e-3, 3, 6.5,
                                         4242, -0.35);
    REQUIRE(a.trial_results.size() == b.trial_results.size());
    for (size_t k = 0; k < a.trial_results.size(); ++k) {
        CHECK(a.trial_results[k].omega_fit == b.trial_results[k].omega_fit);
        REQUIRE(a.trial_results[k].deviations.size() ==
                b.trial_results[k].deviations.size());
        for (size_t i = 0; i < a.trial_results[k].deviations.size(); ++i)
            CHECK(a.trial_results[k].deviations[i] == b.trial_results[k].deviations[i]);
    }
}

TEST_CASE("results do not depend on the worker count") {
    Grid g(2.0, 40, 4, 0.0, 1.0);
    ModelSpec spec = tuned_model(0.8, g);
    setenv("AGESTRUCT_THREADS", "1", 1);
    StabilityReport serial = verify_stability(trivial_eq(spec, g), spec, g, 1e-3, 4, 6.5,
                                              17, -0.35);
    setenv("AGESTRUCT_THREADS", "4", 1);
    StabilityReport parallel = verify_stability(trivial_eq(spec, g), spec, g, 1e-3, 4,
                                                6.5, 17, -0.35);
    unsetenv("AGESTRUCT_THREADS");
    REQUIRE(serial.trial_results.size() == parallel.trial_results.size());
    for (size_t k = 0; k < serial.trial_results.size(); ++k)
        CHECK(serial.trial_results[k].omega_fit == parallel.trial_results[k].omega_fit);
}

TEST_CASE("fitted rate is independent of epsilon on a linear model") {
    Grid g(2.0, 80, 6, 0.0, 1.0);
    ModelSpec spec = tuned_model(0.8, g);
    StabilityOptions opts;
    opts.signed_perturbation = true;  // stay in the linear regime, no clipping
    StabilityReport small = verify_stability(trivial_eq(spec, g), spec, g, 1e-4, 1, 10.0,
                                             11, -0.35, opts);
    StabilityReport large = verify_stability(trivial_eq(spec, g), spec, g, 1e-2, 1, 10.0,
                                             11, -0.35, opts);
    double w1 = small.trial_results[0].omega_fit;
    double w2 = large.trial_results[0].omega_fit;
    CHECK(std::abs(w1 - w2) <= 0.02 * std::abs(w1));
}

TEST_CASE("dropping the transient window moves the fit by at most five percent") {
    Grid g(2.0, 80, 6, 0.0, 1.0);
    ModelSpec spec = tuned_model(0.8, g);
    StabilityReport rep = verify_stability(trivial_eq(spec, g), spec, g, 1e-3, 1, 10.0,
                                           5, -0.35);
    const auto& tr = rep.trial_results[0];
    DecayFit full = fit_decay_rate(tr.times, tr.deviations, 0.0, 10.0);
    DecayFit skip = fit_decay_rate(tr.times, tr.deviations, g.a_max(), 10.0);
    CHECK(std::abs(full.omega_fit - skip.omega_fit) <= 0.05 * std::abs(skip.omega_fit));
}

TEST_CASE("basin probe") {
    SECTION("stable linear dynamics decay for every epsilon") {
        Grid g(2.0, 60, 4, 0.0, 1.0);
        ModelSpec spec = tuned_model(0.8, g);
        std::vector<double> eps{1e-4, 1e-3, 1e-2, 1e-1};
        BasinProbeResult res = basin_probe(trivial_eq(spec, g), spec, g, eps, 14.0);
        REQUIRE(res.largest_decaying.has_value());
        CHECK(*res.largest_decaying == eps.back());
    }
    SECTION("unstable equilibrium decays for no epsilon") {
        Grid g(2.0, 60, 4, 0.0, 1.0);
        ModelSpec spec = tuned_model(1.3, g);
        std::vector<double> eps{1e-3, 1e-2};
        BasinProbeResult res = basin_probe(trivial_eq(spec, g), spec, g, eps, 14.0);
        CHECK_FALSE(res.largest_decaying.has_value());
    }
    SECTION("nonincreasing list rejected") {
        Grid g(2.0, 20, 4, 0.0, 1.0);
        ModelSpec spec = tuned_model(0.8, g);
        std::vector<double> eps{1e-2, 1e-3};
        CHECK_THROWS_AS(basin_probe(trivial_eq(spec, g), spec, g, eps, 8.0),
                        std::invalid_argument);
    }
}
