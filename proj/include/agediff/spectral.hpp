#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "agediff/diffusion.hpp"
#include "agediff/equilibrium.hpp"
#include "agediff/linear.hpp"
#include "agediff/model.hpp"

namespace agediff {

// Sparse linearized generator at an equilibrium phi, on the stacked state
// v(j,i) with index j*n_space + i:
//   rows j>=1:  -(v_j - v_{j-1})/da + A_h(a_j) v_j - m(phibar,a_j,x) v_j
//               - d1m(phibar,a_j,x) phi(a_j,x) * (nu-weighted age integral)
//   row j=0:    (M_phi(v) - v_0)/da   (boundary condition as relaxation)
struct LinearizedGenerator {
    Eigen::SparseMatrix<double> L;
    DensityField phi;
    ModelSpec spec;
    Grid grid;

    int size() const { return static_cast<int>(L.rows()); }
};

inline LinearizedGenerator assemble_generator(const DensityField& phi,
                                              const ModelSpec& spec, const Grid& grid) {
    require_shape(phi, grid, "assemble_generator");
    const int ns = grid.n_space();
    const int na = grid.n_age();
    const int N = (na + 1) * ns;
    const double da = grid.delta_a();
    const Vector q = grid.age_weights();
    const Matrix nu = tabulate_weight(spec, grid);
    const Vector phibar = weighted_age_integral_tabulated(phi.values, nu, q);
    const BoundaryOperator bop = BoundaryOperator::make(phi, phibar, spec, grid);

    auto idx = [ns](int j, int i) { return j * ns + i; };
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<size_t>(N) * 8);

    // newborn row: (M_phi(v) - v_0)/da, full quadrature over all ages
    for (int i = 0; i < ns; ++i) {
        for (int j = 0; j <= na; ++j) {
            double w = q(j) * (bop.b_frozen(j, i) + bop.kernel(i) * nu(j, i)) / da;
            if (w != 0.0) trip.emplace_back(idx(0, i), idx(j, i), w);
        }
        trip.emplace_back(idx(0, i), idx(0, i), -1.0 / da);
    }

    for (int j = 1; j <= na; ++j) {
        const double a = grid.age_node(j);
        DiffusionOperator A = assemble_diffusion(spec, a, grid);
        for (int i = 0; i < ns; ++i) {
            const double x = grid.x_node(i);
            trip.emplace_back(idx(j, i), idx(j - 1, i), 1.0 / da);
            double diag = -1.0 / da + A.diag(i) - spec.death.eval(phibar(i), a, x);
            trip.emplace_back(idx(j, i), idx(j, i), diag);
            if (i > 0) trip.emplace_back(idx(j, i), idx(j, i - 1), A.lower(i));
            if (i < ns - 1) trip.emplace_back(idx(j, i), idx(j, i + 1), A.upper(i));
            double dm_phi = spec.death_dz.eval(phibar(i), a, x) * phi.values(j, i);
            if (dm_phi != 0.0)
                for (int jp = 0; jp <= na; ++jp)
                    trip.emplace_back(idx(j, i), idx(jp, i), -dm_phi * q(jp) * nu(jp, i));
        }
    }

    LinearizedGenerator gen{Eigen::SparseMatrix<double>(N, N), phi, spec, grid};
    gen.L.setFromTriplets(trip.begin(), trip.end());
    return gen;
}

struct GrowthBoundResult {
    double omega_est = 0.0;
    DensityField iterate;
    bool converged = false;
    std::vector<double> ratio_tail;  // last log-ratio estimates
};

// omega_est = (1/T) log rho(T_phi(T)) by power iteration on the frozen-rate
// propagator. T past a_max so the characteristic-exit transient has left
// the iteration. A vanishing iterate (nilpotent transient, e.g. b = 0)
// restarts once from the positive constant field; a second collapse means
// the propagator annihilates positive data and the decay is reported at
// the measurable floor.
inline GrowthBoundResult growth_bound_via_propagation(const DensityField& phi,
                                                      const ModelSpec& spec,
                                                      const Grid& grid, double T,
                                                      int iters = 100,
                                                      double tol = 1e-8) {
    const int steps = checked_step_count(T, grid, "growth_bound_via_propagation");
    if (steps * grid.delta_t() < grid.a_max() - 1e-9)
        throw std::invalid_argument("growth_bound_via_propagation: need T >= a_max");
    Vector phibar = weighted_age_integral(phi, spec, grid);
    LinearStepper st(spec, grid, phi, phibar, true);

    GrowthBoundResult res;
    Matrix v = Matrix::Ones(grid.n_age_nodes(), grid.n_space());
    double nv = norm_e0(DensityField(v), grid, spec.norm_q);
    v /= nv;
    bool restarted = false;
    double prev_log = std::numeric_limits<double>::quiet_NaN();
    for (int it = 0; it < iters; ++it) {
        Matrix w = v;
        for (int k = 0; k < steps; ++k) st.step(w, 0.0, nullptr, nullptr);
        double nw = norm_e0(DensityField(w), grid, spec.norm_q);
        if (!(nw > 1e-300)) {
            if (!restarted) {
                restarted = true;
                v = Matrix::Ones(grid.n_age_nodes(), grid.n_space());
                v /= norm_e0(DensityField(v), grid, spec.norm_q);
                continue;
            }
            res.omega_est = std::log(1e-300) / T;
            res.iterate = DensityField(w);
            res.converged = true;
            return res;
        }
        double log_ratio = std::log(nw) / T;
        res.ratio_tail.push_back(log_ratio);
        if (res.ratio_tail.size() > 4)
            res.ratio_tail.erase(res.ratio_tail.begin());
        v = w / nw;
        if (std::isfinite(prev_log) &&
            std::abs(log_ratio - prev_log) <= tol * (1.0 + std::abs(log_ratio))) {
            res.omega_est = log_ratio;
            res.iterate = DensityField(v);
            res.converged = true;
            return res;
        }
        prev_log = log_ratio;
    }
    res.omega_est = res.ratio_tail.empty() ? 0.0 : res.ratio_tail.back();
    res.iterate = DensityField(v);
    res.converged = false;
    return res;
}

inline double grid_aligned_time(const Grid& grid, double t) {
    long n = std::lround(t / grid.delta_t());
    if (n < 1) n = 1;
    return n * grid.delta_t();
}

// The generator state is stacked age-major: entry j*n_space + i.
inline Vector stack_field(const Matrix& u) {
    Vector v(u.size());
    for (int j = 0; j < u.rows(); ++j)
        for (int i = 0; i < u.cols(); ++i) v(j * u.cols() + i) = u(j, i);
    return v;
}

inline Matrix unstack_field(const Vector& v, int rows, int cols) {
    Matrix u(rows, cols);
    for (int j = 0; j < rows; ++j)
        for (int i = 0; i < cols; ++i) u(j, i) = v(j * cols + i);
    return u;
}

struct SpectralBoundResult {
    double s0 = 0.0;
    Vector eigenvector;      // real part for a complex attaining pair
    bool complex_pair = false;
    bool from_propagation = false;
};

// Spectral bound: max real part over the spectrum. Dense eigensolve up to
// the threshold; beyond it the bound is estimated from the propagator power
// iteration (the dominant eigenvalue of T_phi(T) is e^{s0 T} for these
// positivity-structured generators).
inline SpectralBoundResult spectral_bound(const LinearizedGenerator& gen,
                                          int dense_threshold = 4000) {
    SpectralBoundResult res;
    const int N = gen.size();
    if (N <= dense_threshold) {
        Matrix dense(gen.L);
        Eigen::EigenSolver<Matrix> es(dense);
        if (es.info() != Eigen::Success)
            throw std::runtime_error("spectral_bound: eigensolver failed");
        int best = 0;
        for (int k = 1; k < N; ++k)
            if (es.eigenvalues()(k).real() > es.eigenvalues()(best).real()) best = k;
        res.s0 = es.eigenvalues()(best).real();
        res.complex_pair = std::abs(es.eigenvalues()(best).imag()) >
                           1e-10 * (1.0 + std::abs(res.s0));
        res.eigenvector = es.eigenvectors().col(best).real();
        double n2 = res.eigenvector.norm();
        if (n2 > 0.0) {
            res.eigenvector /= n2;
            // fix the sign so the dominant component is positive
            int imax = 0;
            res.eigenvector.cwiseAbs().maxCoeff(&imax);
            if (res.eigenvector(imax) < 0.0) res.eigenvector = -res.eigenvector;
        }
        return res;
    }
    double T = grid_aligned_time(gen.grid, 2.0 * gen.grid.a_max());
    GrowthBoundResult g = growth_bound_via_propagation(gen.phi, gen.spec, gen.grid, T);
    res.s0 = g.omega_est;
    res.from_propagation = true;
    res.eigenvector = stack_field(g.iterate.values);
    return res;
}

// Net reproduction operator Q_lambda = int b(0,a) Pi_{0,lambda}(a,0) da,
// with Pi_0 the evolution operator of A - m(0,.). Columns are assembled by
// propagating unit basis vectors; the death integral uses the per-cell
// trapezoid exponential so the x-independent case collapses exactly onto
// the nested-trapezoid closed form.
inline Matrix q_lambda(double lambda, const ModelSpec& spec, const Grid& grid) {
    const int ns = grid.n_space();
    const int na = grid.n_age();
    const double da = grid.delta_a();
    const Vector q = grid.age_weights();
    DiffusionTable diff(spec, grid);

    Matrix b0(na + 1, ns), mdeath(na + 1, ns);
    for (int j = 0; j <= na; ++j)
        for (int i = 0; i < ns; ++i) {
            b0(j, i) = spec.birth.eval(0.0, grid.age_node(j), grid.x_node(i));
            mdeath(j, i) = spec.death.eval(0.0, grid.age_node(j), grid.x_node(i));
        }

    const double shift = std::exp(-lambda * da);
    Matrix Q = Matrix::Zero(ns, ns);
    Vector v(ns);
    for (int c = 0; c < ns; ++c) {
        v.setZero();
        v(c) = 1.0;
        for (int j = 0; j <= na; ++j) {
            Q.col(c).noalias() += q(j) * b0.row(j).transpose().cwiseProduct(v);
            if (j < na) {
                for (int i = 0; i < ns; ++i)
                    v(i) *= std::exp(-0.5 * da * (mdeath(j, i) + mdeath(j + 1, i)));
                diff.advance_cell(j, v);
                v *= shift;
            }
        }
    }
    return Q;
}

class PowerIterationError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Power iteration from the positive constant vector. An iterate collapsing
// to zero restarts once from the constant vector; collapsing again from a
// positive start certifies a nilpotent action on the cone, radius 0.
inline double spectral_radius(const Matrix& Q, double tol = 1e-12,
                              int max_iters = 10000) {
    const int n = static_cast<int>(Q.rows());
    if (Q.minCoeff() < -1e-12)
        throw std::invalid_argument("spectral_radius: Q must be entrywise nonnegative");
    Vector v = Vector::Ones(n) / std::sqrt(static_cast<double>(n));
    bool restarted = false;
    double prev = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> tail;
    for (int it = 0; it < max_iters; ++it) {
        Vector w = Q * v;
        double nw = w.norm();
        if (!(nw > 1e-300)) {
            if (restarted) return 0.0;
            restarted = true;
            v = Vector::Ones(n) / std::sqrt(static_cast<double>(n));
            prev = std::numeric_limits<double>::quiet_NaN();
            continue;
        }
        double ratio = nw;  // ||Q v|| with ||v|| = 1
        tail.push_back(ratio);
        if (tail.size() > 4) tail.erase(tail.begin());
        v = w / nw;
        if (std::isfinite(prev) && std::abs(ratio - prev) <= tol * std::max(1.0, ratio))
            return ratio;
        prev = ratio;
    }
    std::ostringstream os;
    os << "spectral_radius: no convergence; last ratios:";
    for (double r : tail) os << ' ' << r;
    throw PowerIterationError(os.str());
}

struct ClosedFormR0 {
    double value = 0.0;                // nested trapezoid of the scalar integral
    std::optional<double> analytic;    // exact value when both rates are constant
};

// r(Q_0) = int_0^{a_max} b(0,a) exp(-int_0^a m(0,s) ds) da for x-independent
// rates. Shares the renewal quadrature with the equilibrium oracle.
inline ClosedFormR0 closed_form_r0(const ModelSpec& spec, const Grid& grid) {
    for (int j = 0; j < grid.n_age_nodes(); ++j) {
        double a = grid.age_node(j);
        double m0 = spec.death.eval(0.0, a, grid.x_node(0));
        double b0 = spec.birth.eval(0.0, a, grid.x_node(0));
        for (int i = 1; i < grid.n_space(); ++i) {
            double x = grid.x_node(i);
            if (std::abs(spec.death.eval(0.0, a, x) - m0) > 1e-12 * (1.0 + std::abs(m0)) ||
                std::abs(spec.birth.eval(0.0, a, x) - b0) > 1e-12 * (1.0 + std::abs(b0)))
                throw std::invalid_argument("closed_form_r0: rates depend on x");
        }
    }
    ClosedFormR0 out;
    out.value = renewal_number(spec, grid, 0.0);

    double b0 = spec.birth.eval(0.0, 0.0, grid.x_node(0));
    double m0 = spec.death.eval(0.0, 0.0, grid.x_node(0));
    bool constant = true;
    for (int j = 0; j <= grid.n_age(); ++j) {
        double a = grid.age_node(j);
        if (std::abs(spec.birth.eval(0.0, a, grid.x_node(0)) - b0) >
                1e-12 * (1.0 + std::abs(b0)) ||
            std::abs(spec.death.eval(0.0, a, grid.x_node(0)) - m0) >
                1e-12 * (1.0 + std::abs(m0))) {
            constant = false;
            break;
        }
    }
    if (constant)
        out.analytic = (m0 > 0.0) ? (b0 / m0) * (1.0 - std::exp(-m0 * grid.a_max()))
                                  : b0 * grid.a_max();
    return out;
}

class BracketError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Lambda0Result {
    double lambda0 = 0.0;
    int iterations = 0;
    double bracket_lo = 0.0;
    double bracket_hi = 0.0;
};

// The threshold lambda_0 with r(Q_{lambda_0}) = 1; lambda -> r(Q_lambda) is
// strictly decreasing. The initial bracket is expanded by doubling.
inline Lambda0Result lambda0_bisect(const ModelSpec& spec, const Grid& grid,
                                    double lo = -1.0, double hi = 1.0) {
    auto r_of = [&](double lam) { return spectral_radius(q_lambda(lam, spec, grid)); };

    double width = hi - lo;
    int tries = 0;
    while (r_of(lo) <= 1.0) {
        lo -= width;
        width *= 2.0;
        if (++tries > 60) throw BracketError("lambda0: bracket not found (r <= 1 everywhere)");
    }
    width = hi - lo;
    tries = 0;
    while (r_of(hi) >= 1.0) {
        hi += width;
        width *= 2.0;
        if (++tries > 60) throw BracketError("lambda0: bracket not found (r >= 1 everywhere)");
    }

    Lambda0Result res;
    res.bracket_lo = lo;
    res.bracket_hi = hi;
    while (hi - lo > 1e-10) {
        double mid = 0.5 * (lo + hi);
        ++res.iterations;
        if (r_of(mid) >= 1.0)
            lo = mid;
        else
            hi = mid;
        if (res.iterations > 200) break;
    }
    res.lambda0 = 0.5 * (lo + hi);
    return res;
}

// Q_{phi,lambda} z = int b(phibar,a) Pi_lambda(a,0) z da
//                  + [int d1b(phibar,a) phi(a) da] int nu(a) Pi_lambda(a,0) z da
// for z-independent death folded into the evolution operator.
inline Matrix q_phi_lambda(const DensityField& phi, double lambda, const ModelSpec& spec,
                           const Grid& grid) {
    if (spec.death.uses_z())
        throw std::invalid_argument("q_phi_lambda: death must be z-independent");
    require_shape(phi, grid, "q_phi_lambda");
    const int ns = grid.n_space();
    const int na = grid.n_age();
    const double da = grid.delta_a();
    const Vector q = grid.age_weights();
    const Matrix nu = tabulate_weight(spec, grid);
    const Vector phibar = weighted_age_integral_tabulated(phi.values, nu, q);
    const BoundaryOperator bop = BoundaryOperator::make(phi, phibar, spec, grid);
    DiffusionTable diff(spec, grid);

    Matrix mdeath(na + 1, ns);
    for (int j = 0; j <= na; ++j)
        for (int i = 0; i < ns; ++i)
            mdeath(j, i) = spec.death.eval(0.0, grid.age_node(j), grid.x_node(i));

    const double shift = std::exp(-lambda * da);
    Matrix Q = Matrix::Zero(ns, ns);
    Vector v(ns);
    for (int c = 0; c < ns; ++c) {
        v.setZero();
        v(c) = 1.0;
        Vector direct = Vector::Zero(ns), weighted = Vector::Zero(ns);
        for (int j = 0; j <= na; ++j) {
            direct.noalias() += q(j) * bop.b_frozen.row(j).transpose().cwiseProduct(v);
            weighted.noalias() += q(j) * nu.row(j).transpose().cwiseProduct(v);
            if (j < na) {
                for (int i = 0; i < ns; ++i)
                    v(i) *= std::exp(-0.5 * da * (mdeath(j, i) + mdeath(j + 1, i)));
                diff.advance_cell(j, v);
                v *= shift;
            }
        }
        Q.col(c) = direct + bop.kernel.cwiseProduct(weighted);
    }
    return Q;
}

// Radius of Q_{phi,lambda}: power iteration when entrywise nonnegative,
// otherwise (signed correction, e.g. logistic birth) the max eigenvalue
// modulus from the dense solve on the small spatial system.
inline double q_matrix_radius(const Matrix& Q) {
    if (Q.minCoeff() >= -1e-12) return spectral_radius(Q.cwiseMax(0.0));
    Eigen::EigenSolver<Matrix> es(Q);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("q_matrix_radius: eigensolver failed");
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

struct SpectralReport {
    double s0 = 0.0;
    Vector dominant_eigenvector;
    bool s0_from_propagation = false;
    double omega_est = 0.0;
    bool omega_converged = false;
    double r_q0 = 0.0;
    std::optional<double> lambda0;
    std::optional<double> r_qphi0;  // nontrivial-equilibrium criterion, when defined
    double margin = 0.0;
    std::string verdict;  // "stable" | "unstable" | "marginal"
};

struct SpectralOptions {
    int dense_threshold = 4000;
    double probe_T = 0.0;  // 0: use 2*a_max rounded to the grid
    int power_iters = 100;
};

inline SpectralReport build_spectral_report(const DensityField& phi, const ModelSpec& spec,
                                            const Grid& grid,
                                            const SpectralOptions& opts = {}) {
    SpectralReport rep;
    LinearizedGenerator gen = assemble_generator(phi, spec, grid);
    SpectralBoundResult sb = spectral_bound(gen, opts.dense_threshold);
    rep.s0 = sb.s0;
    rep.dominant_eigenvector = sb.eigenvector;
    rep.s0_from_propagation = sb.from_propagation;

    double T = opts.probe_T > 0.0 ? grid_aligned_time(grid, opts.probe_T)
                                  : grid_aligned_time(grid, 2.0 * grid.a_max());
    GrowthBoundResult g =
        growth_bound_via_propagation(phi, spec, grid, T, opts.power_iters);
    rep.omega_est = g.omega_est;
    rep.omega_converged = g.converged;

    rep.r_q0 = spectral_radius(q_lambda(0.0, spec, grid));
    try {
        rep.lambda0 = lambda0_bisect(spec, grid).lambda0;
    } catch (const BracketError&) {
        rep.lambda0 = std::nullopt;
    }
    if (!spec.death.uses_z() && phi.values.cwiseAbs().maxCoeff() > 0.0)
        rep.r_qphi0 = q_matrix_radius(q_phi_lambda(phi, 0.0, spec, grid));

    rep.margin = 1e-3 / grid.a_max();
    if (rep.s0 < -rep.margin)
        rep.verdict = "stable";
    else if (rep.s0 > rep.margin)
        rep.verdict = "unstable";
    else
        rep.verdict = "marginal";
    return rep;
}

}  // namespace agediff
