#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "agediff/field.hpp"
#include "agediff/grid.hpp"
#include "agediff/rate_expr.hpp"

namespace agediff {

enum class NormQ { one, two, inf };

inline NormQ norm_q_from_string(const std::string& s) {
    if (s == "1") return NormQ::one;
    if (s == "2") return NormQ::two;
    if (s == "inf") return NormQ::inf;
    throw std::invalid_argument("norm_q must be one of 1, 2, inf");
}

// Model data: diffusion d(a,x) > 0, death m(z,a,x) >= 0, birth b(z,a,x) >= 0,
// weight nu(a,x) >= 0. The z-derivatives of death and birth are derived
// symbolically at construction; they drive the linearized operators.
struct ModelSpec {
    RateExpr diffusion;
    RateExpr death;
    RateExpr birth;
    RateExpr weight;
    RateExpr death_dz;
    RateExpr birth_dz;
    NormQ norm_q = NormQ::two;
    // When set, the frozen death factor belongs to the "A-part" of the
    // linear problems (the evolution operator), not to the perturbation.
    bool fold_death_into_A = true;

    static ModelSpec make(RateExpr d, RateExpr m, RateExpr b, RateExpr nu,
                          NormQ q = NormQ::two) {
        if (d.uses_z())
            throw std::invalid_argument("diffusion must not depend on z");
        if (nu.uses_z())
            throw std::invalid_argument("weight must not depend on z");
        ModelSpec s;
        s.diffusion = std::move(d);
        s.death = std::move(m);
        s.birth = std::move(b);
        s.weight = std::move(nu);
        s.death_dz = s.death.diff_z();
        s.birth_dz = s.birth.diff_z();
        s.norm_q = q;
        return s;
    }

    static ModelSpec from_strings(const std::string& d, const std::string& m,
                                  const std::string& b, const std::string& nu,
                                  NormQ q = NormQ::two) {
        return make(RateExpr::parse(d), RateExpr::parse(m), RateExpr::parse(b),
                    RateExpr::parse(nu), q);
    }

    bool death_is_z_independent() const { return !death.uses_z(); }
    bool birth_is_z_independent() const { return !birth.uses_z(); }
};

// nu(a_j, x_i) sampled once; the weighted age integral is the hottest
// quadrature in the stepper.
inline Matrix tabulate_weight(const ModelSpec& spec, const Grid& grid) {
    Matrix nu(grid.n_age_nodes(), grid.n_space());
    for (int j = 0; j < grid.n_age_nodes(); ++j)
        for (int i = 0; i < grid.n_space(); ++i)
            nu(j, i) = spec.weight.eval(0.0, grid.age_node(j), grid.x_node(i));
    return nu;
}

inline Vector weighted_age_integral_tabulated(const Matrix& u, const Matrix& nu_table,
                                              const Vector& q) {
    Vector ubar = Vector::Zero(u.cols());
    for (int j = 0; j < u.rows(); ++j)
        ubar.noalias() += q(j) * (nu_table.row(j).cwiseProduct(u.row(j))).transpose();
    return ubar;
}

// ubar(x_i) = sum_j q_j nu(a_j,x_i) u(j,i), composite trapezoid in age.
inline Vector weighted_age_integral(const DensityField& u, const ModelSpec& spec,
                                    const Grid& grid) {
    require_shape(u, grid, "weighted_age_integral");
    return weighted_age_integral_tabulated(u.values, tabulate_weight(spec, grid),
                                           grid.age_weights());
}

// Discrete E_0 = L_1(age, L_q(space)) norm: trapezoid in age over the
// per-row discrete spatial norm (cell weight delta_x; max norm for q = inf).
inline double norm_e0(const DensityField& u, const Grid& grid, NormQ q = NormQ::two) {
    require_shape(u, grid, "norm_e0");
    const Vector w = grid.age_weights();
    double s = 0.0;
    for (int j = 0; j < u.rows(); ++j) {
        double rn = 0.0;
        switch (q) {
            case NormQ::one:
                rn = grid.delta_x() * u.values.row(j).cwiseAbs().sum();
                break;
            case NormQ::two:
                rn = std::sqrt(grid.delta_x() * u.values.row(j).squaredNorm());
                break;
            case NormQ::inf:
                rn = u.values.row(j).cwiseAbs().maxCoeff();
                break;
        }
        s += w(j) * rn;
    }
    return s;
}

struct RateViolation {
    std::string rate;  // "diffusion" | "death" | "birth" | "weight"
    double z, a, x;
    double value;
};

// Samples the sign conditions on all grid nodes, with z swept over 17
// equispaced points of [z_lo, z_hi] for the z-dependent rates. An empty
// result means the model is validated on this grid. Expression evaluation
// failures propagate as EvalError with the offending rate named.
inline std::vector<RateViolation> validate_model(const ModelSpec& spec, const Grid& grid,
                                                 double z_lo, double z_hi) {
    if (!(std::isfinite(z_lo) && std::isfinite(z_hi)) || z_hi < z_lo)
        throw std::invalid_argument("validate_model: z_range must be finite");
    constexpr int kZSamples = 17;
    std::vector<double> zs(kZSamples);
    for (int k = 0; k < kZSamples; ++k)
        zs[k] = z_lo + (z_hi - z_lo) * k / (kZSamples - 1);

    std::vector<RateViolation> out;
    auto eval_or_rethrow = [](const RateExpr& e, const char* name, double z, double a,
                              double x) {
        try {
            return e.eval(z, a, x);
        } catch (const EvalError& err) {
            throw EvalError(std::string(name) + ": " + err.what() + " at (z=" +
                                std::to_string(z) + ", a=" + std::to_string(a) +
                                ", x=" + std::to_string(x) + ")",
                            err.offset());
        }
    };

    for (int j = 0; j < grid.n_age_nodes(); ++j) {
        double a = grid.age_node(j);
        for (int i = 0; i < grid.n_space(); ++i) {
            double x = grid.x_node(i);
            double d = eval_or_rethrow(spec.diffusion, "diffusion", 0.0, a, x);
            if (!(d > 0.0)) out.push_back({"diffusion", 0.0, a, x, d});
            double nu = eval_or_rethrow(spec.weight, "weight", 0.0, a, x);
            if (nu < 0.0) out.push_back({"weight", 0.0, a, x, nu});
            for (double z : zs) {
                double m = eval_or_rethrow(spec.death, "death", z, a, x);
                if (m < 0.0) out.push_back({"death", z, a, x, m});
                double b = eval_or_rethrow(spec.birth, "birth", z, a, x);
                if (b < 0.0) out.push_back({"birth", z, a, x, b});
            }
        }
    }
    return out;
}

}  // namespace agediff
