#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "agediff/transport.hpp"
#include "support/oracles.hpp"

using namespace agediff;

namespace {

DensityField random_nonneg(const Grid& g, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    DensityField u = DensityField::zero(g);
    for (int j = 0; j < u.rows(); ++j)
        for (int i = 0; i < u.cols(); ++i) u.values(j, i) = uni(rng);
    return u;
}

}  // namespace

TEST_CASE("pure transport exit: the field is exactly zero once t > a_max") {
    Grid g(1.0, 10, 6, 0.0, 1.0);
    ModelSpec spec = ModelSpec::from_strings("0.2", "0", "0", "1");
    TransportStepper st(spec, g);
    SimState s = st.make_state(random_nonneg(g, 42));
    for (int k = 0; k < g.n_age() + 1; ++k) st.step(s);
    CHECK(s.u.values.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("zero is a fixed point") {
    Grid g(1.0, 8, 5, 0.0, 1.0);
    ModelSpec spec = ModelSpec::from_strings("0.1", "0.3+z", "1.5/(1+z)", "1");
    TransportStepper st(spec, g);
    SimState s = st.make_state(DensityField::zero(g));
    for (int k = 0; k < 20; ++k) st.step(s);
    CHECK(s.u.values.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("x-independent runs reduce to the scalar renewal stepper") {
    Grid g(2.0, 80, 12, 0.0, 1.0);
    ModelSpec spec = ModelSpec::from_strings("0.3+0.2*x", "0.2+0.5*z", "2*exp(-0.5*a)", "1");
    TransportStepper st(spec, g);

    DensityField u0 = DensityField::from_function(
        g, [](double a, double) { return 1.0 + 0.5 * std::sin(2.0 * a); });
    SimState s = st.make_state(u0);

    oracle::ScalarRenewal ref(spec, g, g.x_node(0));
    Vector u0_ages(g.n_age_nodes());
    for (int j = 0; j < g.n_age_nodes(); ++j) u0_ages(j) = u0.values(j, 0);
    ref.set_initial(u0_ages);

    for (int k = 0; k < 300; ++k) {
        st.step(s);
        ref.step();
        double dev = 0.0;
        for (int j = 0; j < g.n_age_nodes(); ++j)
            for (int i = 0; i < g.n_space(); ++i)
                dev = std::max(dev, std::abs(s.u.values(j, i) - ref.ages()(j)));
        REQUIRE(dev <= 1e-10);
    }
}

TEST_CASE("positivity propagation on a linear model") {
    Grid g(1.0, 30, 8, 0.0, 1.0);
    ModelSpec spec = ModelSpec::from_strings("0.15+0.1*x", "0.4+0.2*a", "1.8*exp(-a)", "1");
    SimOptions opts;
    opts.horizon = 3.0;
    Trajectory traj = simulate(random_nonneg(g, 7), spec, g, opts);
    CHECK_FALSE(traj.blew_up());
    CHECK(traj.final_state.u.min_entry() >= -1e-12);
}

TEST_CASE("cached ubar stays consistent with the recomputed integral") {
    Grid g(1.0, 20, 6, 0.0, 1.0);
    ModelSpec spec = ModelSpec::from_strings("0.1", "0.2+0.3*z", "1.2", "1+0.2*sin(3*x)^2");
    TransportStepper st(spec, g);
    SimState s = st.make_state(random_nonneg(g, 9));
    for (int k = 0; k < 50; ++k) {
        st.step(s);
        Vector re = weighted_age_integral(s.u, spec, g);
        CHECK((re - s.ubar).cwiseAbs().maxCoeff() <=
              1e-12 * (1.0 + re.cwiseAbs().maxCoeff()));
    }
}

TEST_CASE("step is linear in u for z-independent rates") {
    Grid g(1.0, 16, 6, 0.0, 1.0);
    ModelSpec spec = ModelSpec::from_strings("0.2", "0.3+0.1*a", "1.5*exp(-0.7*a)", "1");
    TransportStepper st(spec, g);
    DensityField u = random_nonneg(g, 21), v = random_nonneg(g, 22);
    double al = 0.6, be = 1.7;

    SimState su = st.make_state(u), sv = st.make_state(v),
             sw = st.make_state(DensityField(al * u.values + be * v.values));
    st.step(su);
    st.step(sv);
    st.step(sw);
    Matrix lin = al * su.u.values + be * sv.u.values;
    CHECK((sw.u.values - lin).cwiseAbs().maxCoeff() <=
          1e-11 * (1.0 + lin.cwiseAbs().maxCoeff()));
}

TEST_CASE("spatially constant data stays spatially constant") {
    Grid g(1.0, 10, 9, 0.0, 1.0);
    ModelSpec spec = ModelSpec::from_strings("0.4+0.3*sin(a)^2", "0.2+0.4*z", "1.6/(1+z)", "1");
    TransportStepper st(spec, g);
    SimState s = st.make_state(DensityField::constant(g, 0.8));
    for (int k = 0; k < 1000; ++k) {
        st.step(s);
        for (int j = 0; j < g.n_age_nodes(); ++j) {
            double spread = s.u.values.row(j).maxCoeff() - s.u.values.row(j).minCoeff();
            REQUIRE(spread <= 1e-11);
        }
    }
}

TEST_CASE("extinction carries exactly the evolved initial data") {
    Grid g(1.0, 12, 7, 0.0, 1.0);
    ModelSpec spec = ModelSpec::from_strings("0.25+0.1*x", "0", "0", "1");
    TransportStepper st(spec, g);
    DensityField u0 = random_nonneg(g, 5);
    SimState s = st.make_state(u0);
    const int k_steps = 5;
    for (int k = 0; k < k_steps; ++k) st.step(s);

    for (int j = 0; j < k_steps; ++j)
        CHECK(s.u.values.row(j).cwiseAbs().maxCoeff() == 0.0);
    for (int j = k_steps; j <= g.n_age(); ++j) {
        Vector expect = u0.values.row(j - k_steps).transpose();
        expect = evolve(expect, g.age_node(j - k_steps), g.age_node(j),
                        EvolutionStepPlan(1), spec, g);
        CHECK((s.u.values.row(j).transpose() - expect).cwiseAbs().maxCoeff() <= 1e-13);
    }
}

TEST_CASE("birth boundary quadrature") {
    SECTION("constants") {
        Grid g(2.0, 24, 5, 0.0, 1.0);
        ModelSpec spec = ModelSpec::from_strings("1", "0", "1", "1");
        Vector ub = weighted_age_integral(DensityField::constant(g, 1.0), spec, g);
        Vector B = birth_boundary(DensityField::constant(g, 1.0), ub, spec, g);
        for (int i = 0; i < g.n_space(); ++i)
            CHECK(B(i) == Catch::Approx(2.0).epsilon(1e-13));
    }
    SECTION("zero field") {
        Grid g(2.0, 24, 5, 0.0, 1.0);
        ModelSpec spec = ModelSpec::from_strings("1", "0", "1", "1");
        Vector B = birth_boundary(DensityField::zero(g), Vector::Zero(5), spec, g);
        CHECK(B.cwiseAbs().maxCoeff() == 0.0);
    }
    SECTION("exponential kernel against the closed-form integral") {
        Grid g(1.0, 50, 5, 0.0, 1.0);
        ModelSpec spec = ModelSpec::from_strings("1", "0", "exp(-a)", "1");
        Vector ub = weighted_age_integral(DensityField::constant(g, 1.0), spec, g);
        Vector B = birth_boundary(DensityField::constant(g, 1.0), ub, spec, g);
        double exact = 1.0 - std::exp(-1.0);
        double bound = g.delta_a() * g.delta_a() / 12.0 * g.a_max();
        for (int i = 0; i < g.n_space(); ++i) CHECK(std::abs(B(i) - exact) <= bound);
    }
}

TEST_CASE("supercritical model reports blow-up") {
    Grid g(2.0, 20, 4, 0.0, 1.0);
    ModelSpec spec = ModelSpec::from_strings("0.1", "0", "10", "1");
    SimOptions opts;
    opts.horizon = 200.0;
    opts.norm_cap = 1e6;
    Trajectory traj = simulate(DensityField::constant(g, 1.0), spec, g, opts);
    REQUIRE(traj.blew_up());
    CHECK(traj.blowup->t > 0.0);
    CHECK(traj.blowup->norm > opts.norm_cap);
    CHECK(std::isfinite(traj.blowup->t));
}

TEST_CASE("logistic death keeps the trajectory bounded and settling") {
    Grid g(4.0, 100, 4, 0.0, 1.0);
    ModelSpec spec = ModelSpec::from_strings("0.1", "0.2+z", "2", "1");
    SimOptions opts;
    opts.horizon = 60.0;
    Trajectory traj = simulate(DensityField::constant(g, 0.5), spec, g, opts);
    REQUIRE_FALSE(traj.blew_up());
    size_t n = traj.norms.size();
    double late_diff = std::abs(traj.norms[n - 1] - traj.norms[n - 2]) / g.delta_t();
    CHECK(late_diff < 1e-8);
    CHECK(traj.norms.back() > 0.1);  // settled at the nontrivial equilibrium
}

TEST_CASE("simulation is deterministic") {
    Grid g(1.0, 15, 6, 0.0, 1.0);
    ModelSpec spec = ModelSpec::from_strings("0.2+0.1*x", "0.3+0.2*z", "1.7/(1+z)", "1");
    SimOptions opts;
    opts.horizon = 2.0;
    opts.record_boundary = true;
    DensityField u0 = random_nonneg(g, 33);
    Trajectory a = simulate(u0, spec, g, opts);
    Trajectory b = simulate(u0, spec, g, opts);
    REQUIRE(a.norms.size() == b.norms.size());
    for (size_t k = 0; k < a.norms.size(); ++k) CHECK(a.norms[k] == b.norms[k]);
    CHECK((a.final_state.u.values - b.final_state.u.values).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("norms trace has one row per step plus the initial sample") {
    Grid g(1.0, 10, 4, 0.0, 1.0);
    ModelSpec spec = ModelSpec::from_strings("0.1", "0.5", "1", "1");
    SimOptions opts;
    opts.horizon = 10 * g.delta_t();
    opts.record_boundary = true;
    Trajectory traj = simulate(DensityField::constant(g, 1.0), spec, g, opts);
    CHECK(traj.norms.size() == 11);
    CHECK(traj.boundary.size() == 10);
    CHECK(traj.boundary.consistent());
}
