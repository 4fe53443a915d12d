#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "agediff/linear.hpp"
#include "agediff/model.hpp"
#include "agediff/transport.hpp"

namespace agediff {

enum class EquilibriumMethod { march, newton };

struct EquilibriumResult {
    DensityField phi;
    Vector phibar;
    double residual = std::numeric_limits<double>::infinity();
    EquilibriumMethod method = EquilibriumMethod::march;
    int iterations = 0;
    bool converged = false;
    std::optional<BlowUpReport> blowup;
};

// Discrete stationarity defect: || step(phi) - phi || / dt. Zero iff phi is
// a fixed point of the stepper, which is the working definition of an
// equilibrium here.
inline double equilibrium_residual(const DensityField& phi, const ModelSpec& spec,
                                   const Grid& grid) {
    TransportStepper st(spec, grid);
    SimState s = st.make_state(phi);
    st.step(s);
    DensityField diff(s.u.values - phi.values);
    return norm_e0(diff, grid, spec.norm_q) / grid.delta_t();
}

inline EquilibriumResult find_equilibrium_march(const DensityField& u0,
                                                const ModelSpec& spec, const Grid& grid,
                                                double tol, int max_steps,
                                                double norm_cap = 1e8) {
    if (!(tol > 0.0)) throw std::invalid_argument("march: tol must be positive");
    TransportStepper st(spec, grid);
    SimState s = st.make_state(u0);
    const double dt = grid.delta_t();

    EquilibriumResult res;
    res.method = EquilibriumMethod::march;
    Matrix prev;
    for (int k = 1; k <= max_steps; ++k) {
        prev = s.u.values;
        st.step(s);
        res.iterations = k;
        double nrm = norm_e0(s.u, grid, spec.norm_q);
        if (!(nrm <= norm_cap)) {
            res.blowup = BlowUpReport{s.t, nrm};
            break;
        }
        double rate = norm_e0(DensityField(s.u.values - prev), grid, spec.norm_q) / dt;
        if (rate <= tol) {
            res.converged = true;
            break;
        }
    }
    res.phi = s.u;
    res.phibar = s.ubar;
    res.residual = equilibrium_residual(res.phi, spec, grid);
    return res;
}

enum class JacobianMode { finite_difference, assembled };

// Newton iteration on R(phi) = (step(phi) - phi)/dt. The Jacobian is the
// one-step linearization minus identity over dt: by default assembled
// column-by-column from directional finite differences of the nonlinear
// step; alternatively from the frozen-rate linear stepper (exact derivative
// of the splitting up to the boundary-row quadrature details).
inline EquilibriumResult find_equilibrium_newton(
    const DensityField& init, const ModelSpec& spec, const Grid& grid, double tol,
    int max_iters, JacobianMode mode = JacobianMode::finite_difference) {
    if (!(tol > 0.0)) throw std::invalid_argument("newton: tol must be positive");
    TransportStepper st(spec, grid);
    const double dt = grid.delta_t();
    const int rows = grid.n_age_nodes(), cols = grid.n_space();
    const int N = rows * cols;

    auto residual_field = [&](const Matrix& phi) {
        SimState s = st.make_state(DensityField(phi));
        st.step(s);
        return Matrix((s.u.values - phi) / dt);
    };
    auto field_norm = [&](const Matrix& r) {
        return norm_e0(DensityField(r), grid, spec.norm_q);
    };

    EquilibriumResult res;
    res.method = EquilibriumMethod::newton;
    Matrix phi = init.values;
    Matrix r = residual_field(phi);
    double rn = field_norm(r);

    for (int it = 0; it < max_iters && rn > tol; ++it) {
        res.iterations = it + 1;
        Matrix J(N, N);
        if (mode == JacobianMode::finite_difference) {
            const double h = 1e-7 * std::max(1.0, phi.cwiseAbs().maxCoeff());
            Matrix probe = phi;
            for (int k = 0; k < N; ++k) {
                probe.data()[k] += h;
                Matrix rk = residual_field(probe);
                probe.data()[k] = phi.data()[k];
                rk -= r;
                J.col(k) = Eigen::Map<Vector>(rk.data(), N) / h;
            }
        } else {
            Vector phibar = weighted_age_integral_tabulated(
                phi, tabulate_weight(spec, grid), grid.age_weights());
            LinearStepper ls(spec, grid, DensityField(phi), phibar, true);
            Matrix basis = Matrix::Zero(rows, cols);
            for (int k = 0; k < N; ++k) {
                basis.data()[k] = 1.0;
                Matrix W = basis;
                ls.step(W, 0.0, nullptr, nullptr);
                basis.data()[k] = 0.0;
                W.data()[k] -= 1.0;
                J.col(k) = Eigen::Map<Vector>(W.data(), N) / dt;
            }
        }

        Eigen::FullPivLU<Matrix> lu(J);
        if (!lu.isInvertible())
            throw std::runtime_error(
                "newton: singular Jacobian (near a bifurcation point?)");
        Vector delta = lu.solve(-Eigen::Map<Vector>(r.data(), N));

        double lambda = 1.0;
        Matrix phi_next;
        Matrix r_next;
        double rn_next = 0.0;
        for (int half = 0; half <= 8; ++half) {
            phi_next = phi + lambda * Eigen::Map<Matrix>(delta.data(), rows, cols);
            r_next = residual_field(phi_next);
            rn_next = field_norm(r_next);
            if (rn_next < rn || half == 8) break;
            lambda *= 0.5;
        }
        phi = std::move(phi_next);
        r = std::move(r_next);
        rn = rn_next;
    }

    res.converged = rn <= tol;
    res.phi = DensityField(phi);
    res.phibar = weighted_age_integral(res.phi, spec, grid);
    res.residual = equilibrium_residual(res.phi, spec, grid);
    return res;
}

// Renewal condition for x-independent rates: a nontrivial spatially constant
// equilibrium has weighted population z* with
//   R(z*) = int_0^{a_max} b(z*,a) exp(-int_0^a m(z*,s) ds) da = 1
// (diffusion acts as the identity on constants). Nested trapezoid on the
// age grid; bisection on z*.
class NoBracketError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline double renewal_number(const ModelSpec& spec, const Grid& grid, double z) {
    const int n = grid.n_age();
    const double da = grid.delta_a();
    const double x0 = grid.x_node(0);
    double r = 0.0, integral_m = 0.0, m_prev = spec.death.eval(z, 0.0, x0);
    const Vector q = grid.age_weights();
    r += q(0) * spec.birth.eval(z, 0.0, x0);
    for (int j = 1; j <= n; ++j) {
        double a = grid.age_node(j);
        double m_here = spec.death.eval(z, a, x0);
        integral_m += 0.5 * da * (m_prev + m_here);
        m_prev = m_here;
        r += q(j) * spec.birth.eval(z, a, x0) * std::exp(-integral_m);
    }
    return r;
}

inline void require_x_independent(const ModelSpec& spec, const Grid& grid,
                                  const char* where) {
    for (int j = 0; j < grid.n_age_nodes(); ++j) {
        double a = grid.age_node(j);
        double m0 = spec.death.eval(0.0, a, grid.x_node(0));
        double b0 = spec.birth.eval(0.0, a, grid.x_node(0));
        double nu0 = spec.weight.eval(0.0, a, grid.x_node(0));
        for (int i = 1; i < grid.n_space(); ++i) {
            double x = grid.x_node(i);
            if (std::abs(spec.death.eval(0.0, a, x) - m0) > 1e-12 * (1.0 + std::abs(m0)) ||
                std::abs(spec.birth.eval(0.0, a, x) - b0) > 1e-12 * (1.0 + std::abs(b0)) ||
                std::abs(spec.weight.eval(0.0, a, x) - nu0) > 1e-12 * (1.0 + std::abs(nu0)))
                throw std::invalid_argument(std::string(where) +
                                            ": rates must be x-independent");
        }
    }
}

inline double scalar_equilibrium_oracle(const ModelSpec& spec, const Grid& grid) {
    require_x_independent(spec, grid, "scalar_equilibrium_oracle");
    double r0 = renewal_number(spec, grid, 0.0);
    if (std::abs(r0 - 1.0) <= 1e-12) return 0.0;  // threshold case
    if (!(r0 > 1.0))
        throw NoBracketError("scalar_equilibrium_oracle: R(0) <= 1, no bracket");
    double lo = 0.0, hi = 1.0;
    int expansions = 0;
    while (renewal_number(spec, grid, hi) >= 1.0) {
        lo = hi;
        hi *= 2.0;
        if (++expansions > 60)
            throw NoBracketError("scalar_equilibrium_oracle: no bracket found");
    }
    while (hi - lo > 1e-12 * (1.0 + std::abs(hi))) {
        double mid = 0.5 * (lo + hi);
        if (renewal_number(spec, grid, mid) >= 1.0)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

// Seed for the nontrivial branch: a constant field scaled so the weighted
// population starts at half the oracle's z*, falling back to 0.1 when no
// oracle bracket exists.
inline DensityField make_equilibrium_seed(const ModelSpec& spec, const Grid& grid) {
    double c = 0.1;
    try {
        double zstar = scalar_equilibrium_oracle(spec, grid);
        const Vector q = grid.age_weights();
        double nu_mass = 0.0;
        for (int j = 0; j < grid.n_age_nodes(); ++j)
            nu_mass += q(j) * spec.weight.eval(0.0, grid.age_node(j), grid.x_node(0));
        if (nu_mass > 0.0) c = 0.5 * zstar / nu_mass;
    } catch (const std::exception&) {
        // keep the fallback constant
    }
    return DensityField::constant(grid, c);
}

}  // namespace agediff
