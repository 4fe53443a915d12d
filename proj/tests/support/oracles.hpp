#pragma once

// Test-side oracles, independent of the library's stepping/assembly paths.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "agediff/grid.hpp"
#include "agediff/model.hpp"

namespace oracle {

using agediff::Grid;
using agediff::Matrix;
using agediff::ModelSpec;
using agediff::Vector;

// 0-D renewal stepper: the age-only model on a single spatial point,
// written directly from the discretization rules (no diffusion, no field
// machinery). x-independent models must reproduce it exactly because the
// diffusion solve acts as the identity on spatial constants.
class ScalarRenewal {
public:
    ScalarRenewal(const ModelSpec& spec, const Grid& grid, double x_probe)
        : spec_(spec), grid_(grid), x_(x_probe), q_(grid.age_weights()),
          u_(Vector::Zero(grid.n_age_nodes())) {}

    void set_initial(const Vector& u0) {
        u_ = u0;
        ubar_ = weighted_integral(u_);
    }

    const Vector& ages() const { return u_; }
    double ubar() const { return ubar_; }

    void step() {
        const int n = grid_.n_age();
        const double dt = grid_.delta_t();
        for (int j = n; j >= 1; --j) {
            double m = spec_.death.eval(ubar_, grid_.age_node(j - 1), x_);
            u_(j) = std::exp(-dt * m) * u_(j - 1);
        }
        double ubar_shift = 0.0;
        for (int j = 1; j <= n; ++j)
            ubar_shift += q_(j) * spec_.weight.eval(0.0, grid_.age_node(j), x_) * u_(j);
        double born = 0.0;
        for (int j = 1; j <= n; ++j)
            born += q_(j) * spec_.birth.eval(ubar_shift, grid_.age_node(j), x_) * u_(j);
        double den = 1.0 - q_(0) * spec_.birth.eval(ubar_shift, 0.0, x_);
        u_(0) = born / den;
        ubar_ = weighted_integral(u_);
    }

private:
    double weighted_integral(const Vector& u) const {
        double s = 0.0;
        for (int j = 0; j < grid_.n_age_nodes(); ++j)
            s += q_(j) * spec_.weight.eval(0.0, grid_.age_node(j), x_) * u(j);
        return s;
    }

    ModelSpec spec_;
    Grid grid_;
    double x_;
    Vector q_;
    Vector u_;
    double ubar_ = 0.0;
};

// Scalar age-only linearized generator at the trivial equilibrium for
// x-independent z-frozen rates, assembled by hand:
//   row 0:   ( sum_j q_j b(0,a_j) v_j - v_0 ) / da
//   row j>0: -(v_j - v_{j-1})/da - m(0,a_j) v_j
inline Matrix scalar_generator(const ModelSpec& spec, const Grid& grid, double x_probe) {
    const int n = grid.n_age();
    const double da = grid.delta_a();
    const Vector q = grid.age_weights();
    Matrix L = Matrix::Zero(n + 1, n + 1);
    for (int j = 0; j <= n; ++j)
        L(0, j) += q(j) * spec.birth.eval(0.0, grid.age_node(j), x_probe) / da;
    L(0, 0) -= 1.0 / da;
    for (int j = 1; j <= n; ++j) {
        L(j, j - 1) += 1.0 / da;
        L(j, j) += -1.0 / da - spec.death.eval(0.0, grid.age_node(j), x_probe);
    }
    return L;
}

// Random strings from the expression grammar, for round-trip and
// differentiation property tests.
class ExprGen {
public:
    explicit ExprGen(uint64_t seed) : rng_(seed) {}

    // Arbitrary grammatical expression (may hit domain faults when
    // evaluated; fine for round-trip checks).
    std::string any(int depth) { return gen(depth, false); }

    // Expression safe to evaluate and z-differentiate on z in [-1,1],
    // a,x in [0,1]: guarded denominators/log/sqrt arguments, no abs/min/max.
    std::string smooth(int depth) { return gen(depth, true); }

    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(rng_);
    }
    int pick(int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng_); }

private:
    std::mt19937_64 rng_;

    std::string atom(bool safe) {
        switch (pick(5)) {
            case 0: return "z";
            case 1: return "a";
            case 2: return "x";
            case 3: {
                char buf[32];
                std::snprintf(buf, sizeof buf, "%.3g", uniform(safe ? 0.1 : -4.0, 4.0));
                return buf;
            }
            default: return safe ? "0.7" : "-2.5";
        }
    }

    std::string gen(int depth, bool safe) {
        if (depth <= 0) return atom(safe);
        switch (pick(safe ? 9 : 11)) {
            case 0: return "(" + gen(depth - 1, safe) + "+" + gen(depth - 1, safe) + ")";
            case 1: return "(" + gen(depth - 1, safe) + "-" + gen(depth - 1, safe) + ")";
            case 2: return "(" + gen(depth - 1, safe) + "*" + gen(depth - 1, safe) + ")";
            case 3:
                if (safe)
                    return "(" + gen(depth - 1, safe) + "/(2+cos(" + gen(depth - 1, safe) +
                           ")))";
                return "(" + gen(depth - 1, safe) + "/" + gen(depth - 1, safe) + ")";
            case 4: return "sin(" + gen(depth - 1, safe) + ")";
            case 5: return "cos(" + gen(depth - 1, safe) + ")";
            case 6:
                if (safe) return "exp(0.3*sin(" + gen(depth - 1, safe) + "))";
                return "exp(" + gen(depth - 1, safe) + ")";
            case 7:
                if (safe) return "log(1.5+sin(" + gen(depth - 1, safe) + "))";
                return "log(" + gen(depth - 1, safe) + ")";
            case 8:
                if (safe) return "sqrt(2+cos(" + gen(depth - 1, safe) + "))";
                return "(" + gen(depth - 1, safe) + ")^" + std::to_string(pick(4));
            case 9: return "-" + gen(depth - 1, safe);
            default: {
                int which = pick(3);
                const char* fn = which == 0 ? "abs" : (which == 1 ? "min" : "max");
                if (which == 0) return std::string(fn) + "(" + gen(depth - 1, safe) + ")";
                return std::string(fn) + "(" + gen(depth - 1, safe) + "," +
                       gen(depth - 1, safe) + ")";
            }
        }
    }
};

// Seeded random valid models: positive diffusion, nonnegative death/birth,
// unit-ish weight. Used by the positivity sweeps.
struct RandomModel {
    ModelSpec spec;
    std::string d, m, b, nu;
};

inline RandomModel random_valid_model(uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto u = [&](double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(rng);
    };
    auto num = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.4g", v);
        return std::string(buf);
    };
    RandomModel rm;
    rm.d = num(u(0.02, 0.5)) + "+" + num(u(0.0, 0.3)) + "*x*(1-x)";
    int mkind = static_cast<int>(u(0, 3));
    if (mkind == 0)
        rm.m = num(u(0.1, 1.5));
    else if (mkind == 1)
        rm.m = num(u(0.1, 0.8)) + "+" + num(u(0.0, 0.6)) + "*a";
    else
        rm.m = num(u(0.1, 0.8)) + "+" + num(u(0.1, 0.9)) + "*z";
    int bkind = static_cast<int>(u(0, 3));
    if (bkind == 0)
        rm.b = num(u(0.2, 2.5));
    else if (bkind == 1)
        rm.b = num(u(0.5, 3.0)) + "*exp(-" + num(u(0.1, 1.0)) + "*a)";
    else
        rm.b = num(u(0.5, 3.0)) + "/(1+" + num(u(0.2, 1.0)) + "*z)";
    rm.nu = (u(0, 1) < 0.5) ? "1" : "1+" + num(u(0.0, 0.5)) + "*sin(3*x)^2";
    rm.spec = ModelSpec::from_strings(rm.d, rm.m, rm.b, rm.nu);
    return rm;
}

}  // namespace oracle
