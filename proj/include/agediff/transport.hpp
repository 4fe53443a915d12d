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

namespace agediff {

struct SimState {
    double t = 0.0;
    DensityField u;
    Vector ubar;  // cached weighted age integral of u (full quadrature)
    bool nonnegative_input = false;
};

struct SimOptions {
    double horizon = 1.0;
    double norm_cap = 1e8;
    int snapshot_stride = 0;  // 0 disables snapshots
    bool record_boundary = false;

    void check() const {
        if (!(horizon > 0.0)) throw std::invalid_argument("sim: horizon must be positive");
        if (!(norm_cap > 0.0)) throw std::invalid_argument("sim: norm cap must be positive");
    }
};

struct BlowUpReport {
    double t = 0.0;
    double norm = 0.0;
};

struct Trajectory {
    std::vector<double> times;
    std::vector<double> norms;
    std::vector<std::pair<double, DensityField>> snapshots;
    BoundaryTrace boundary;
    std::optional<BlowUpReport> blowup;
    SimState final_state;

    bool blew_up() const { return blowup.has_value(); }
};

// Birth integral over a *given* field: full trapezoid including the j = 0
// row. Used for equilibrium residual checks and reporting; the stepper
// itself excludes the not-yet-written newborn row.
inline Vector birth_boundary(const DensityField& u, const Vector& ubar,
                             const ModelSpec& spec, const Grid& grid) {
    require_shape(u, grid, "birth_boundary");
    if (ubar.size() != grid.n_space())
        throw std::invalid_argument("birth_boundary: ubar size mismatch");
    const Vector q = grid.age_weights();
    Vector out = Vector::Zero(grid.n_space());
    for (int i = 0; i < grid.n_space(); ++i) {
        double x = grid.x_node(i);
        double s = 0.0;
        for (int j = 0; j < grid.n_age_nodes(); ++j)
            s += q(j) * spec.birth.eval(ubar(i), grid.age_node(j), x) * u.values(j, i);
        out(i) = s;
    }
    return out;
}

// One-step advance along characteristics: age shift with the exact death
// exponential (rate frozen at the departure age and pre-step ubar), then
// the diffusion solve per cell, then the newborn row from the birth
// quadrature over the shifted rows. The newborn value appears linearly in
// its own trapezoid term, so the full-quadrature birth row is solved in
// closed form; the birth coefficients are frozen at the shifted-row ubar
// (newborn excluded), with an optional second sweep that re-freezes them
// at the refreshed ubar.
class TransportStepper {
public:
    TransportStepper(ModelSpec spec, Grid grid, int birth_sweeps = 1)
        : spec_(std::move(spec)), grid_(grid),
          nu_(tabulate_weight(spec_, grid_)), q_(grid_.age_weights()),
          diff_(spec_, grid_), birth_sweeps_(birth_sweeps) {
        if (birth_sweeps_ < 1 || birth_sweeps_ > 2)
            throw std::invalid_argument("transport: birth_sweeps must be 1 or 2");
    }

    const Grid& grid() const { return grid_; }
    const ModelSpec& spec() const { return spec_; }

    SimState make_state(const DensityField& u0, double t0 = 0.0) const {
        require_shape(u0, grid_, "transport");
        if (!u0.all_finite()) throw std::invalid_argument("transport: non-finite initial data");
        SimState s;
        s.t = t0;
        s.u = u0;
        s.ubar = weighted_age_integral_tabulated(u0.values, nu_, q_);
        s.nonnegative_input = u0.nonnegative();
        return s;
    }

    void step(SimState& s) const {
        Matrix& u = s.u.values;
        const double dt = grid_.delta_t();
        const int n = grid_.n_age();

        // shift rows upward: u+(j) = Pi(a_j, a_{j-1}) [e^{-dt m} u(j-1)]
        Vector row(grid_.n_space());
        for (int j = n; j >= 1; --j) {
            const double a_dep = grid_.age_node(j - 1);
            for (int i = 0; i < grid_.n_space(); ++i) {
                double m = spec_.death.eval(s.ubar(i), a_dep, grid_.x_node(i));
                row(i) = std::exp(-dt * m) * u(j - 1, i);
            }
            diff_.advance_cell(j - 1, row);
            u.row(j) = row.transpose();
        }

        // newborn row: full-quadrature birth integral over the shifted rows
        // with its own j = 0 term solved for in closed form; the stale row
        // is excluded from the ubar that freezes the birth coefficients
        Vector ubar_birth = Vector::Zero(grid_.n_space());
        for (int j = 1; j <= n; ++j)
            ubar_birth.noalias() += q_(j) * (nu_.row(j).cwiseProduct(u.row(j))).transpose();
        for (int sweep = 0; sweep < birth_sweeps_; ++sweep) {
            for (int i = 0; i < grid_.n_space(); ++i) {
                double x = grid_.x_node(i);
                double born = 0.0;
                for (int j = 1; j <= n; ++j)
                    born += q_(j) * spec_.birth.eval(ubar_birth(i), grid_.age_node(j), x) *
                            u(j, i);
                double den = 1.0 - q_(0) * spec_.birth.eval(ubar_birth(i), 0.0, x);
                if (den <= 0.05)
                    throw std::runtime_error(
                        "transport: age grid too coarse for the birth rate at age zero");
                u(0, i) = born / den;
            }
            if (sweep + 1 < birth_sweeps_)
                ubar_birth = weighted_age_integral_tabulated(u, nu_, q_);
        }

        s.ubar = weighted_age_integral_tabulated(u, nu_, q_);
        s.t += dt;
    }

private:
    ModelSpec spec_;
    Grid grid_;
    Matrix nu_;
    Vector q_;
    DiffusionTable diff_;
    int birth_sweeps_ = 1;
};

inline SimState step(const SimState& state, const ModelSpec& spec, const Grid& grid) {
    TransportStepper st(spec, grid);
    SimState s = state;
    st.step(s);
    return s;
}

using SnapshotSink = std::function<void(double, const DensityField&)>;

inline Trajectory simulate(const DensityField& u0, const ModelSpec& spec,
                           const Grid& grid, const SimOptions& opts,
                           const SnapshotSink& sink = nullptr) {
    opts.check();
    TransportStepper st(spec, grid);
    SimState s = st.make_state(u0);

    Trajectory traj;
    const int n_steps = static_cast<int>(std::ceil(opts.horizon / grid.delta_t() - 1e-12));
    traj.times.reserve(n_steps + 1);
    traj.norms.reserve(n_steps + 1);

    auto snapshot = [&](int k) {
        if (opts.snapshot_stride > 0 && k % opts.snapshot_stride == 0) {
            traj.snapshots.emplace_back(s.t, s.u);
            if (sink) sink(s.t, s.u);
        }
    };

    traj.times.push_back(s.t);
    traj.norms.push_back(norm_e0(s.u, grid, spec.norm_q));
    snapshot(0);

    for (int k = 1; k <= n_steps; ++k) {
        st.step(s);
        traj.times.push_back(s.t);
        double nrm = norm_e0(s.u, grid, spec.norm_q);
        traj.norms.push_back(nrm);
        if (opts.record_boundary) traj.boundary.append(s.t, s.u.values.row(0).transpose());
        snapshot(k);
        if (!(nrm <= opts.norm_cap)) {
            traj.blowup = BlowUpReport{s.t, nrm};
            break;
        }
    }
    traj.final_state = std::move(s);
    return traj;
}

}  // namespace agediff
