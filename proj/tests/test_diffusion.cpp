#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "agediff/diffusion.hpp"
#include "support/oracles.hpp"

using namespace agediff;

namespace {

Vector random_vec(int n, uint64_t seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(lo, hi);
    Vector v(n);
    for (int i = 0; i < n; ++i) v(i) = uni(rng);
    return v;
}

}  // namespace

TEST_CASE("assembly: textbook Neumann stencil for d = 1") {
    Grid g(1.0, 2, 3, 0.0, 3.0);  // dx = 1
    ModelSpec spec = ModelSpec::from_strings("1", "0", "0", "1");
    DiffusionOperator A = assemble_diffusion(spec, 0.5, g);
    Matrix M = Matrix::Zero(3, 3);
    for (int i = 0; i < 3; ++i) {
        Vector e = Vector::Zero(3);
        e(i) = 1.0;
        M.col(i) = A.apply(e);
    }
    Matrix expect(3, 3);
    expect << -1, 1, 0, 1, -2, 1, 0, 1, -1;
    CHECK((M - expect).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("assembly: face samples of a variable coefficient") {
    // faces at x = 0.25 and x = 0.75 with dx = 0.5 and d(x) = 1+x
    Grid g(1.0, 2, 3, -0.25, 1.25);
    ModelSpec spec = ModelSpec::from_strings("1+x", "0", "0", "1");
    DiffusionOperator A = assemble_diffusion(spec, 0.0, g);
    CHECK(A.lower(1) == Catch::Approx(1.25 / 0.25).epsilon(1e-15));
    CHECK(A.upper(1) == Catch::Approx(1.75 / 0.25).epsilon(1e-15));
    CHECK(A.diag(1) == Catch::Approx(-(1.25 + 1.75) / 0.25).epsilon(1e-15));
}

TEST_CASE("operator invariants: row sums, sign pattern, symmetry") {
    Grid g(1.0, 4, 24, 0.0, 2.0);
    ModelSpec spec = ModelSpec::from_strings("0.3+0.2*x+0.1*sin(a+3*x)^2", "0", "0", "1");
    for (double a : {0.0, 0.4, 0.9}) {
        DiffusionOperator A = assemble_diffusion(spec, a, g);
        CHECK(A.apply(Vector::Ones(24)).cwiseAbs().maxCoeff() == 0.0);
        for (int i = 0; i < 24; ++i) {
            CHECK(A.diag(i) <= 0.0);
            if (i > 0) CHECK(A.lower(i) >= 0.0);
            if (i < 23) CHECK(A.upper(i) >= 0.0);
        }
        Vector w = random_vec(24, 5), v = random_vec(24, 6);
        CHECK(w.dot(A.apply(v)) == Catch::Approx(v.dot(A.apply(w))).epsilon(1e-13));
    }
    SECTION("non-positive sample rejected") {
        ModelSpec bad = ModelSpec::from_strings("x-1", "0", "0", "1");
        CHECK_THROWS_AS(assemble_diffusion(bad, 0.0, g), std::runtime_error);
    }
}

TEST_CASE("evolve preserves constants at gamma = 0") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        double c0 = 0.05 + uni(rng), c1 = uni(rng), c2 = uni(rng);
        std::string d = std::to_string(c0) + "+" + std::to_string(c1) + "*x*(2-x)+" +
                        std::to_string(c2) + "*sin(a+x)^2";
        Grid g(1.0, 4, 16, 0.0, 2.0);
        ModelSpec spec = ModelSpec::from_strings(d, "0", "0", "1");
        double a0 = 0.25 * static_cast<int>(uni(rng) * 3);
        double a1 = a0 + 0.25 * (1 + static_cast<int>(uni(rng) * 2));
        Vector out = evolve(Vector::Ones(16), a0, a1, EvolutionStepPlan(2), spec, g);
        CHECK((out - Vector::Ones(16)).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("cosine Neumann eigenmode decays at the analytic rate") {
    // d constant: w = cos(pi x / L) decays like exp(-d (pi/L)^2 t)
    const int ns = 128;
    const double d0 = 0.1, L = 1.0, tau = 1.0;
    Grid g(1.0, 2, ns, 0.0, L);
    ModelSpec spec = ModelSpec::from_strings("0.1", "0", "0", "1");
    Vector w(ns);
    for (int i = 0; i < ns; ++i) w(i) = std::cos(M_PI * (g.x_node(i) - 0.0) / L);
    EvolutionStepPlan plan(static_cast<int>(std::lround(g.delta_a() / 1e-3)));
    Vector out = evolve(w, 0.0, tau, plan, spec, g);
    double rate_expected = d0 * M_PI * M_PI / (L * L);
    Vector expect = std::exp(-rate_expected * tau) * w;
    double rel = (out - expect).cwiseAbs().maxCoeff() / expect.cwiseAbs().maxCoeff();
    CHECK(rel <= 0.02);
}

TEST_CASE("gamma shift scales the result") {
    Grid g(2.0, 4, 12, 0.0, 1.0);
    ModelSpec spec = ModelSpec::from_strings("0.2+0.1*x", "0", "0", "1");
    SECTION("constant over a unit interval halves at gamma = ln 2") {
        EvolutionStepPlan plan(1, std::log(2.0));
        Vector out = evolve(Vector::Ones(12), 0.5, 1.5, plan, spec, g);
        CHECK((out - 0.5 * Vector::Ones(12)).cwiseAbs().maxCoeff() <= 1e-12);
    }
    SECTION("gamma run equals scaled gamma-free run") {
        Vector w = random_vec(12, 3);
        double gamma = 0.8, a0 = 0.0, a1 = 1.5;
        Vector shifted = evolve(w, a0, a1, EvolutionStepPlan(2, gamma), spec, g);
        Vector plain = evolve(w, a0, a1, EvolutionStepPlan(2, 0.0), spec, g);
        Vector expect = std::exp(-gamma * (a1 - a0)) * plain;
        CHECK((shifted - expect).cwiseAbs().maxCoeff() <=
              1e-13 * (1.0 + expect.cwiseAbs().maxCoeff()));
    }
}

TEST_CASE("composition law at aligned split points") {
    Grid g(2.0, 8, 10, 0.0, 1.0);
    ModelSpec spec = ModelSpec::from_strings("1+0.5*sin(a)", "0", "0", "1");
    EvolutionStepPlan plan(2);
    SECTION("random data") {
        Vector w = random_vec(10, 17);
        double res = compose_check(w, 0.25, 0.75, 1.75, plan, spec, g);
        CHECK(res <= 1e-12 * w.cwiseAbs().maxCoeff());
    }
    SECTION("zero data") {
        CHECK(compose_check(Vector::Zero(10), 0.0, 0.5, 1.0, plan, spec, g) == 0.0);
    }
    SECTION("misaligned split point throws") {
        Vector w = random_vec(10, 18);
        CHECK_THROWS_AS(compose_check(w, 0.0, 0.3, 1.0, plan, spec, g),
                        std::invalid_argument);
    }
}

TEST_CASE("positivity and max-norm contraction") {
    Grid g(1.0, 4, 20, 0.0, 1.0);
    ModelSpec spec = ModelSpec::from_strings("0.05+0.4*x*(1-x)", "0", "0", "1");
    for (uint64_t seed = 1; seed <= 10; ++seed) {
        Vector w = random_vec(20, seed, 0.0, 2.0);
        Vector out = evolve(w, 0.0, 0.75, EvolutionStepPlan(1), spec, g);
        CHECK(out.minCoeff() >= -1e-13);
        CHECK(out.cwiseAbs().maxCoeff() <= w.cwiseAbs().maxCoeff() * (1 + 1e-13));
        Vector ws = random_vec(20, seed + 50);
        Vector outs = evolve(ws, 0.0, 0.75, EvolutionStepPlan(1), spec, g);
        CHECK(outs.cwiseAbs().maxCoeff() <= ws.cwiseAbs().maxCoeff() * (1 + 1e-13));
    }
}
