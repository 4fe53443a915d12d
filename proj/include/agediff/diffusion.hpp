#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "agediff/grid.hpp"
#include "agediff/model.hpp"

namespace agediff {

// Pre-factorized tridiagonal solve (Thomas). The systems here are
// symmetric M-matrices (I - h*A_h), diagonally dominant, so no pivoting.
struct TridiagFactor {
    Vector sub;    // sub(i) multiplies x_{i-1} in row i, i >= 1
    Vector upper;  // eliminated upper coefficients
    Vector piv;    // reciprocal pivots

    // diag/off describe the symmetric system: row i = [off(i-1), diag(i), off(i)]
    static TridiagFactor factorize(const Vector& diag, const Vector& off) {
        const int n = static_cast<int>(diag.size());
        TridiagFactor f;
        f.sub = Vector::Zero(n);
        f.upper = Vector::Zero(n);
        f.piv = Vector::Zero(n);
        double denom = diag(0);
        if (denom == 0.0) throw std::runtime_error("tridiagonal solve: zero pivot");
        f.piv(0) = 1.0 / denom;
        f.upper(0) = (n > 1) ? off(0) * f.piv(0) : 0.0;
        for (int i = 1; i < n; ++i) {
            f.sub(i) = off(i - 1);
            denom = diag(i) - f.sub(i) * f.upper(i - 1);
            if (denom == 0.0) throw std::runtime_error("tridiagonal solve: zero pivot");
            f.piv(i) = 1.0 / denom;
            if (i < n - 1) f.upper(i) = off(i) * f.piv(i);
        }
        return f;
    }

    void solve_inplace(Vector& d) const {
        const int n = static_cast<int>(d.size());
        d(0) *= piv(0);
        for (int i = 1; i < n; ++i) d(i) = (d(i) - sub(i) * d(i - 1)) * piv(i);
        for (int i = n - 2; i >= 0; --i) d(i) -= upper(i) * d(i + 1);
    }
};

// Discrete A(a)w = div(d(a,.) grad w) with homogeneous Neumann boundary,
// flux form on the cell-centered grid. Face samples d(a, x_{i+1/2}) are
// taken at the interior faces only; the boundary faces carry zero flux.
struct DiffusionOperator {
    double age = 0.0;
    double inv_dx2 = 0.0;
    Vector faces;  // d(a, x_{i+1/2}), i = 0..n-2

    int n() const { return static_cast<int>(faces.size()) + 1; }

    // (A w)_i in flux form; diagonal is -(left flux + right flux) so rows
    // sum to zero identically.
    Vector apply(const Vector& w) const {
        const int m = n();
        Vector out(m);
        for (int i = 0; i < m; ++i) {
            double left = (i > 0) ? faces(i - 1) * (w(i - 1) - w(i)) : 0.0;
            double right = (i < m - 1) ? faces(i) * (w(i + 1) - w(i)) : 0.0;
            out(i) = inv_dx2 * (left + right);
        }
        return out;
    }

    double lower(int i) const { return faces(i - 1) * inv_dx2; }  // i = 1..n-1
    double upper(int i) const { return faces(i) * inv_dx2; }      // i = 0..n-2
    double diag(int i) const {
        double s = 0.0;
        if (i > 0) s += faces(i - 1);
        if (i < n() - 1) s += faces(i);
        return -s * inv_dx2;
    }

    // Factorization of (I - h A_h) for a backward-Euler substep.
    TridiagFactor factor_backward_euler(double h) const {
        const int m = n();
        Vector diag_v(m), off_v(m > 1 ? m - 1 : 0);
        for (int i = 0; i < m; ++i) {
            double s = 0.0;
            if (i > 0) s += faces(i - 1);
            if (i < m - 1) s += faces(i);
            diag_v(i) = 1.0 + h * inv_dx2 * s;
        }
        for (int i = 0; i + 1 < m; ++i) off_v(i) = -h * inv_dx2 * faces(i);
        return TridiagFactor::factorize(diag_v, off_v);
    }
};

inline DiffusionOperator assemble_diffusion(const ModelSpec& spec, double a,
                                            const Grid& grid) {
    DiffusionOperator op;
    op.age = a;
    op.inv_dx2 = 1.0 / (grid.delta_x() * grid.delta_x());
    op.faces = Vector(grid.n_space() - 1);
    for (int i = 0; i + 1 < grid.n_space(); ++i) {
        double xf = grid.x_min() + (i + 1) * grid.delta_x();
        double d = spec.diffusion.eval(0.0, a, xf);
        if (!(d > 0.0))
            throw std::runtime_error("diffusion: non-positive sample d(" +
                                     std::to_string(a) + ", " + std::to_string(xf) +
                                     ") = " + std::to_string(d));
        op.faces(i) = d;
    }
    return op;
}

struct EvolutionStepPlan {
    int substeps = 1;     // backward-Euler substeps per age cell
    double gamma = 0.0;   // shift: Pi_gamma = e^{-gamma (a-s)} Pi(a,s)

    EvolutionStepPlan() = default;
    EvolutionStepPlan(int s, double g = 0.0) : substeps(s), gamma(g) {
        if (substeps < 1) throw std::invalid_argument("plan: substeps must be >= 1");
    }
};

namespace diffusion_detail {

// Uniform substep partition of [a_from, a_to] aligned with the plan's
// target substep length delta_a / substeps.
inline int substep_count(double len, const Grid& grid, const EvolutionStepPlan& plan) {
    double h_target = grid.delta_a() / plan.substeps;
    long n = std::lround(len / h_target);
    if (n < 1) n = 1;
    return static_cast<int>(n);
}

}  // namespace diffusion_detail

// Approximates Pi_gamma(a_to, a_from) w by backward-Euler substeps with the
// coefficient frozen at each substep midpoint. Preserves constants exactly
// at gamma = 0 and maps nonnegative data to nonnegative data.
inline Vector evolve(const Vector& w, double a_from, double a_to,
                     const EvolutionStepPlan& plan, const ModelSpec& spec,
                     const Grid& grid) {
    if (a_to < a_from) throw std::invalid_argument("evolve: a_from must be <= a_to");
    if (a_from < -1e-12 || a_to > grid.a_max() * (1.0 + 1e-12))
        throw std::invalid_argument("evolve: interval outside [0, a_max]");
    Vector v = w;
    double len = a_to - a_from;
    if (len > 0.0) {
        int n = diffusion_detail::substep_count(len, grid, plan);
        double h = len / n;
        for (int k = 0; k < n; ++k) {
            double a_mid = a_from + (k + 0.5) * h;
            DiffusionOperator op = assemble_diffusion(spec, a_mid, grid);
            TridiagFactor f = op.factor_backward_euler(h);
            f.solve_inplace(v);
        }
    }
    if (plan.gamma != 0.0) v *= std::exp(-plan.gamma * len);
    return v;
}

// || Pi(a_t,a_s) w  -  Pi(a_t,a_sigma) Pi(a_sigma,a_s) w ||_inf.
// The split point must land on a substep boundary so both paths use the
// identical substep sequence.
inline double compose_check(const Vector& w, double a_s, double a_sigma, double a_t,
                            const EvolutionStepPlan& plan, const ModelSpec& spec,
                            const Grid& grid) {
    if (!(a_s <= a_sigma && a_sigma <= a_t))
        throw std::invalid_argument("compose_check: need a_s <= a_sigma <= a_t");
    double len = a_t - a_s;
    if (len > 0.0) {
        int n = diffusion_detail::substep_count(len, grid, plan);
        double h = len / n;
        double k = (a_sigma - a_s) / h;
        if (std::abs(k - std::lround(k)) > 1e-9)
            throw std::invalid_argument("compose_check: misaligned split point");
    }
    Vector direct = evolve(w, a_s, a_t, plan, spec, grid);
    Vector twostep = evolve(evolve(w, a_s, a_sigma, plan, spec, grid), a_sigma, a_t,
                            plan, spec, grid);
    return (direct - twostep).cwiseAbs().maxCoeff();
}

// Factorized per-cell solves for the stepper: one backward-Euler substep
// sequence per age cell, coefficient at the substep midpoints. Built once
// per (model, grid) and reused every step.
class DiffusionTable {
public:
    DiffusionTable() = default;

    DiffusionTable(const ModelSpec& spec, const Grid& grid, int substeps = 1)
        : substeps_(substeps) {
        cells_.reserve(static_cast<size_t>(grid.n_age()) * substeps);
        double h = grid.delta_a() / substeps;
        for (int j = 0; j < grid.n_age(); ++j) {
            for (int k = 0; k < substeps; ++k) {
                double a_mid = grid.age_node(j) + (k + 0.5) * h;
                DiffusionOperator op = assemble_diffusion(spec, a_mid, grid);
                cells_.push_back(op.factor_backward_euler(h));
            }
        }
    }

    // Applies Pi(a_{j+1}, a_j) (gamma = 0) in place.
    void advance_cell(int j, Vector& w) const {
        for (int k = 0; k < substeps_; ++k)
            cells_[static_cast<size_t>(j) * substeps_ + k].solve_inplace(w);
    }

private:
    int substeps_ = 1;
    std::vector<TridiagFactor> cells_;
};

}  // namespace agediff
