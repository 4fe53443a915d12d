#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "agediff/diffusion.hpp"
#include "agediff/field.hpp"
#include "agediff/grid.hpp"
#include "agediff/model.hpp"
#include "agediff/transport.hpp"

namespace agediff {

// Linearized age boundary operator at an equilibrium phi:
//   M_phi(v)(x) = int b(phibar,a,x) v(a,x) da
//               + [int d1b(phibar,s,x) phi(s,x) ds] * [int nu(a,x) v(a,x) da]
struct BoundaryOperator {
    Matrix b_frozen;  // b(phibar(x_i), a_j, x_i)
    Vector kernel;    // K(x_i), the rank-structured correction factor
    Matrix nu;
    Vector q;

    static BoundaryOperator make(const DensityField& phi, const Vector& phibar,
                                 const ModelSpec& spec, const Grid& grid) {
        require_shape(phi, grid, "boundary operator");
        BoundaryOperator op;
        op.nu = tabulate_weight(spec, grid);
        op.q = grid.age_weights();
        op.b_frozen = Matrix(grid.n_age_nodes(), grid.n_space());
        op.kernel = Vector::Zero(grid.n_space());
        for (int i = 0; i < grid.n_space(); ++i) {
            double x = grid.x_node(i);
            double k = 0.0;
            for (int j = 0; j < grid.n_age_nodes(); ++j) {
                double a = grid.age_node(j);
                op.b_frozen(j, i) = spec.birth.eval(phibar(i), a, x);
                k += op.q(j) * spec.birth_dz.eval(phibar(i), a, x) * phi.values(j, i);
            }
            op.kernel(i) = k;
        }
        return op;
    }
};

// Full-quadrature application of M_phi to a given field (all age rows,
// including j = 0). The stepper's internal boundary update excludes the
// not-yet-written newborn row instead.
inline Vector apply_boundary(const DensityField& v, const BoundaryOperator& op,
                             const Grid& grid) {
    require_shape(v, grid, "apply_boundary");
    Vector out(grid.n_space());
    for (int i = 0; i < grid.n_space(); ++i) {
        double direct = 0.0, vbar = 0.0;
        for (int j = 0; j < grid.n_age_nodes(); ++j) {
            direct += op.q(j) * op.b_frozen(j, i) * v.values(j, i);
            vbar += op.q(j) * op.nu(j, i) * v.values(j, i);
        }
        out(i) = direct + op.kernel(i) * vbar;
    }
    return out;
}

// (dF(phi) v)(a,x) = -m(phibar,a,x) v(a,x) - d1m(phibar,a,x) vbar(x) phi(a,x)
inline DensityField linearized_reaction(const DensityField& v, const DensityField& phi,
                                        const ModelSpec& spec, const Grid& grid) {
    require_shape(v, grid, "linearized_reaction");
    require_shape(phi, grid, "linearized_reaction");
    Vector phibar = weighted_age_integral(phi, spec, grid);
    Vector vbar = weighted_age_integral(v, spec, grid);
    DensityField out = DensityField::zero(grid);
    for (int j = 0; j < grid.n_age_nodes(); ++j) {
        double a = grid.age_node(j);
        for (int i = 0; i < grid.n_space(); ++i) {
            double x = grid.x_node(i);
            out.values(j, i) = -spec.death.eval(phibar(i), a, x) * v.values(j, i) -
                               spec.death_dz.eval(phibar(i), a, x) * vbar(i) *
                                   phi.values(j, i);
        }
    }
    return out;
}

// Data of the frozen-rate linear problem W^{gamma,h}_{z,f}.
struct LinearProblemData {
    DensityField z0;
    std::function<Matrix(double)> f;  // forcing field at time t; nullable
    double gamma = 0.0;
    std::function<Vector(double)> h;  // boundary inhomogeneity; nullable
    DensityField phi;
    Vector phibar;

    static LinearProblemData make(DensityField z0, const DensityField& phi,
                                  const ModelSpec& spec, const Grid& grid,
                                  double gamma = 0.0,
                                  std::function<Matrix(double)> f = nullptr,
                                  std::function<Vector(double)> h = nullptr) {
        LinearProblemData d;
        d.z0 = std::move(z0);
        d.phi = phi;
        d.phibar = weighted_age_integral(phi, spec, grid);
        d.gamma = gamma;
        d.f = std::move(f);
        d.h = std::move(h);
        return d;
    }
};

struct LinearSolveOptions {
    bool with_dF = false;      // include the d1m rank-one reaction term
    bool keep_history = false; // retain W(t_k) for identity checks
    double norm_cap = 1e12;
};

struct LinearRun {
    std::vector<double> times;
    std::vector<Matrix> history;  // populated when keep_history is set
    BoundaryTrace boundary;
    DensityField final_field;
    std::optional<BlowUpReport> blowup;

    bool blew_up() const { return blowup.has_value(); }
};

// The frozen-rate splitting stepper behind solve_linear and the semigroups.
// Identical structure to the nonlinear step: death exponential at the
// departure age, diffusion solve per cell, newborn row from the shifted
// rows. Forcing enters at the departure node, inside the death factor, with
// the per-step weight w_gamma = (e^{gamma dt} - 1)/gamma; combined with the
// e^{-gamma dt} shift this integrates the gamma factor exactly, which makes
// the gamma-shift identity hold at scheme level.
class LinearStepper {
public:
    LinearStepper(const ModelSpec& spec, const Grid& grid, const DensityField& phi,
                  const Vector& phibar, bool with_dF)
        : grid_(grid), q_(grid.age_weights()), nu_(tabulate_weight(spec, grid)),
          diff_(spec, grid), with_dF_(with_dF),
          include_death_(spec.fold_death_into_A || with_dF),
          bop_(BoundaryOperator::make(phi, phibar, spec, grid)) {
        require_shape(phi, grid, "linear stepper");
        Vector check = weighted_age_integral_tabulated(phi.values, nu_, q_);
        if ((check - phibar).cwiseAbs().maxCoeff() >
            1e-12 * (1.0 + phibar.cwiseAbs().maxCoeff()))
            throw std::invalid_argument(
                "linear stepper: phibar is not the weighted age integral of phi");

        death_factor_ = Matrix::Ones(grid.n_age_nodes(), grid.n_space());
        dm_phi_ = Matrix::Zero(grid.n_age_nodes(), grid.n_space());
        const double dt = grid.delta_t();
        for (int j = 0; j < grid.n_age_nodes(); ++j) {
            double a = grid.age_node(j);
            for (int i = 0; i < grid.n_space(); ++i) {
                double x = grid.x_node(i);
                if (include_death_)
                    death_factor_(j, i) = std::exp(-dt * spec.death.eval(phibar(i), a, x));
                if (with_dF_)
                    dm_phi_(j, i) =
                        spec.death_dz.eval(phibar(i), a, x) * phi.values(j, i);
            }
        }
    }

    const Grid& grid() const { return grid_; }

    // Advances W from time t to t + dt. f_dep is the forcing field at the
    // departure time t (may be null); h_arr is h(t + dt) (may be null).
    void step(Matrix& W, double gamma, const Matrix* f_dep, const Vector* h_arr) const {
        const double dt = grid_.delta_t();
        const int n = grid_.n_age();
        const double shift = (gamma != 0.0) ? std::exp(-gamma * dt) : 1.0;
        const double w_force = (gamma != 0.0) ? std::expm1(gamma * dt) / gamma : dt;

        Vector wbar;
        if (with_dF_) wbar = weighted_age_integral_tabulated(W, nu_, q_);

        Vector row(grid_.n_space());
        for (int j = n; j >= 1; --j) {
            for (int i = 0; i < grid_.n_space(); ++i) {
                double v = W(j - 1, i);
                if (with_dF_) v -= w_force * dm_phi_(j - 1, i) * wbar(i);
                if (f_dep) v += w_force * (*f_dep)(j - 1, i);
                row(i) = death_factor_(j - 1, i) * v;
            }
            diff_.advance_cell(j - 1, row);
            if (shift != 1.0) row *= shift;
            W.row(j) = row.transpose();
        }

        // newborn row W_0 = M_phi(W) + h with the full quadrature; W_0
        // enters its own trapezoid terms linearly and is solved for
        for (int i = 0; i < grid_.n_space(); ++i) {
            double direct = 0.0, vbar = 0.0;
            for (int j = 1; j <= n; ++j) {
                direct += q_(j) * bop_.b_frozen(j, i) * W(j, i);
                vbar += q_(j) * nu_(j, i) * W(j, i);
            }
            double rhs = direct + bop_.kernel(i) * vbar;
            if (h_arr) rhs += (*h_arr)(i);
            double den =
                1.0 - q_(0) * (bop_.b_frozen(0, i) + bop_.kernel(i) * nu_(0, i));
            if (std::abs(den) <= 0.05)
                throw std::runtime_error(
                    "linear: age grid too coarse for the frozen birth rate at age zero");
            W(0, i) = rhs / den;
        }
    }

private:
    Grid grid_;
    Vector q_;
    Matrix nu_;
    DiffusionTable diff_;
    bool with_dF_;
    bool include_death_;
    BoundaryOperator bop_;
    Matrix death_factor_;
    Matrix dm_phi_;
};

inline int checked_step_count(double T, const Grid& grid, const char* where) {
    double k = T / grid.delta_t();
    long n = std::lround(k);
    if (n < 0 || std::abs(k - n) > 1e-9)
        throw std::invalid_argument(std::string(where) +
                                    ": time must be a multiple of delta_t");
    return static_cast<int>(n);
}

inline LinearRun solve_linear(const LinearProblemData& data, const ModelSpec& spec,
                              const Grid& grid, double T,
                              const LinearSolveOptions& opts = {}) {
    require_shape(data.z0, grid, "solve_linear");
    const int n_steps = checked_step_count(T, grid, "solve_linear");
    LinearStepper st(spec, grid, data.phi, data.phibar, opts.with_dF);

    LinearRun run;
    Matrix W = data.z0.values;
    run.times.push_back(0.0);
    if (opts.keep_history) run.history.push_back(W);

    const double dt = grid.delta_t();
    for (int k = 1; k <= n_steps; ++k) {
        double t_dep = (k - 1) * dt;
        double t_arr = k * dt;
        Matrix f_dep;
        Vector h_arr;
        const Matrix* fp = nullptr;
        const Vector* hp = nullptr;
        if (data.f) {
            f_dep = data.f(t_dep);
            fp = &f_dep;
        }
        if (data.h) {
            h_arr = data.h(t_arr);
            hp = &h_arr;
        }
        st.step(W, data.gamma, fp, hp);
        run.times.push_back(t_arr);
        if (opts.keep_history) run.history.push_back(W);
        run.boundary.append(t_arr, W.row(0).transpose());
        double nrm = norm_e0(DensityField(W), grid, spec.norm_q);
        if (!(nrm <= opts.norm_cap)) {
            run.blowup = BlowUpReport{t_arr, nrm};
            break;
        }
    }
    run.final_field = DensityField(W);
    return run;
}

// S(t) z = W^{0,0}_{z,0}(t): the semigroup of the A-part with the M_phi
// boundary; the dF(phi) perturbation is excluded.
inline DensityField semigroup_S(double t, const DensityField& z, const DensityField& phi,
                                const ModelSpec& spec, const Grid& grid) {
    auto data = LinearProblemData::make(z, phi, spec, grid);
    LinearSolveOptions opts;
    opts.with_dF = false;
    return solve_linear(data, spec, grid, t, opts).final_field;
}

// T_phi(t) v0: full linearization, A-part plus dF(phi) and the M_phi
// boundary. The frozen death always enters as its exact exponential; the
// rank-one d1m term is the per-step perturbation.
inline DensityField semigroup_T(double t, const DensityField& v0, const DensityField& phi,
                                const ModelSpec& spec, const Grid& grid) {
    auto data = LinearProblemData::make(v0, phi, spec, grid);
    LinearSolveOptions opts;
    opts.with_dF = true;
    return solve_linear(data, spec, grid, t, opts).final_field;
}

// Discrete shadow of W^{0,h}_{z,f} = W^{gamma,h}_{z, gamma W + f}: runs the
// unshifted problem, then the shifted problem forced by gamma times the
// recorded solution, and returns the max field deviation over grid times.
inline double gamma_shift_check(const LinearProblemData& data, const ModelSpec& spec,
                                const Grid& grid, double T) {
    LinearSolveOptions opts;
    opts.with_dF = false;
    opts.keep_history = true;

    LinearProblemData base = data;
    base.gamma = 0.0;
    LinearRun ref = solve_linear(base, spec, grid, T, opts);

    const double dt = grid.delta_t();
    const double gamma = data.gamma;
    auto forced = [&, gamma](double t) -> Matrix {
        size_t k = static_cast<size_t>(std::lround(t / dt));
        Matrix out = gamma * ref.history.at(k);
        if (data.f) out += data.f(t);
        return out;
    };

    LinearProblemData shifted = data;
    shifted.f = forced;
    LinearRun run = solve_linear(shifted, spec, grid, T, opts);

    double dev = 0.0;
    size_t n = std::min(ref.history.size(), run.history.size());
    for (size_t k = 0; k < n; ++k)
        dev = std::max(dev, (ref.history[k] - run.history[k]).cwiseAbs().maxCoeff());
    return dev;
}

struct DuhamelReport {
    double max_deviation = 0.0;
    double scale = 0.0;       // 1 + max norm of the reference solution
    double c_estimate = 0.0;  // max_deviation / (dt * scale)
};

// Checks W^{gamma,0}_{z,f}(t) against e^{-gamma t} S(t) z plus the
// rectangle-rule convolution of S with f. First order in dt.
inline DuhamelReport duhamel_check(const DensityField& z,
                                   const std::function<Matrix(double)>& f, double gamma,
                                   const DensityField& phi, const ModelSpec& spec,
                                   const Grid& grid, double T) {
    const int n_steps = checked_step_count(T, grid, "duhamel_check");
    const double dt = grid.delta_t();

    LinearSolveOptions opts;
    opts.with_dF = false;
    opts.keep_history = true;

    auto data = LinearProblemData::make(z, phi, spec, grid, gamma, f);
    LinearRun left = solve_linear(data, spec, grid, T, opts);

    // S propagated from z and from each forcing sample f(t_s)
    auto zdata = LinearProblemData::make(z, phi, spec, grid);
    LinearRun s_z = solve_linear(zdata, spec, grid, T, opts);

    std::vector<LinearRun> s_f;
    if (f) {
        s_f.reserve(n_steps);
        for (int s = 0; s < n_steps; ++s) {
            auto fd = LinearProblemData::make(DensityField(f(s * dt)), phi, spec, grid);
            s_f.push_back(solve_linear(fd, spec, grid, T - s * dt, opts));
        }
    }

    DuhamelReport rep;
    double max_norm = 0.0;
    for (int k = 0; k <= n_steps; ++k) {
        double t = k * dt;
        Matrix rhs = std::exp(-gamma * t) * s_z.history.at(k);
        for (int s = 0; f && s < k; ++s)
            rhs += dt * std::exp(-gamma * (t - s * dt)) *
                   s_f[s].history.at(static_cast<size_t>(k - s));
        rep.max_deviation =
            std::max(rep.max_deviation, (left.history.at(k) - rhs).cwiseAbs().maxCoeff());
        max_norm = std::max(max_norm, left.history.at(k).cwiseAbs().maxCoeff());
    }
    rep.scale = 1.0 + max_norm;
    rep.c_estimate = rep.max_deviation / (dt * rep.scale);
    return rep;
}

}  // namespace agediff
