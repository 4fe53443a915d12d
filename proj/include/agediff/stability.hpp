#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "agediff/equilibrium.hpp"
#include "agediff/model.hpp"
#include "agediff/parallel.hpp"
#include "agediff/transport.hpp"

namespace agediff {

struct DecayFit {
    double omega_fit = 0.0;
    double r_squared = 1.0;
    int points = 0;
};

// Least-squares slope of log(norms) vs time on [t_lo, t_hi]; omega_fit is
// the negated slope. A nonpositive norm inside the window truncates it (the
// trajectory reached exact zero); fewer than two usable points is an error.
inline DecayFit fit_decay_rate(const std::vector<double>& times,
                               const std::vector<double>& norms, double t_lo,
                               double t_hi) {
    if (times.size() != norms.size())
        throw std::invalid_argument("fit_decay_rate: times/norms length mismatch");
    std::vector<double> ts, ys;
    for (size_t k = 0; k < times.size(); ++k) {
        if (times[k] < t_lo - 1e-12 || times[k] > t_hi + 1e-12) continue;
        if (!(norms[k] > 0.0)) break;  // truncate at the first nonpositive norm
        ts.push_back(times[k]);
        ys.push_back(std::log(norms[k]));
    }
    if (ts.size() < 2)
        throw std::invalid_argument("fit_decay_rate: window has fewer than two points");

    const size_t n = ts.size();
    double tm = 0.0, ym = 0.0;
    for (size_t k = 0; k < n; ++k) {
        tm += ts[k];
        ym += ys[k];
    }
    tm /= n;
    ym /= n;
    double stt = 0.0, sty = 0.0, syy = 0.0;
    for (size_t k = 0; k < n; ++k) {
        stt += (ts[k] - tm) * (ts[k] - tm);
        sty += (ts[k] - tm) * (ys[k] - ym);
        syy += (ys[k] - ym) * (ys[k] - ym);
    }
    double slope = stt > 0.0 ? sty / stt : 0.0;

    DecayFit fit;
    fit.omega_fit = -slope;
    fit.points = static_cast<int>(n);
    if (syy > 0.0) {
        double ss_res = syy - slope * sty;
        fit.r_squared = 1.0 - std::max(0.0, ss_res) / syy;
    } else {
        fit.r_squared = 1.0;  // constant series: the fit is exact
    }
    return fit;
}

struct StabilityTrial {
    int index = 0;
    double omega_fit = 0.0;
    double r_squared = 1.0;
    bool degenerate = false;  // deviation stayed at numerical zero
    bool decayed = false;
    bool rate_ok = false;
    bool blew_up = false;
    double initial_deviation = 0.0;
    double final_deviation = 0.0;
    std::vector<double> times;
    std::vector<double> deviations;
};

struct StabilityOptions {
    double rate_tol = 0.15;
    double rate_floor = 0.0;  // 0: use 0.01 / a_max
    bool signed_perturbation = false;
    double norm_cap = 1e8;
};

struct StabilityReport {
    double epsilon = 0.0;
    int trials = 0;
    uint64_t seed = 0;
    double predicted_s0 = 0.0;
    double rate_tol = 0.0;
    double rate_floor = 0.0;
    bool pass = false;
    std::vector<StabilityTrial> trial_results;
};

namespace stability_detail {

inline DensityField perturbed_start(const DensityField& phi, const Grid& grid,
                                    double eps, uint64_t seed, int trial,
                                    bool signed_mode) {
    std::mt19937_64 rng(seed + 0x9E3779B97F4A7C15ULL * static_cast<uint64_t>(trial + 1));
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    DensityField u0 = phi;
    for (int j = 0; j < u0.rows(); ++j)
        for (int i = 0; i < u0.cols(); ++i) {
            double v = u0.values(j, i) + eps * uni(rng);
            u0.values(j, i) = signed_mode ? v : std::max(0.0, v);
        }
    return u0;
}

// Envelope decay over age-turnover blocks: the per-block maxima of the
// deviation must be non-increasing on the fit window.
inline bool envelope_decayed(const std::vector<double>& times,
                             const std::vector<double>& devs, double t_lo,
                             double block, double scale) {
    std::vector<double> maxima;
    double cur = -1.0;
    double block_end = t_lo + block;
    for (size_t k = 0; k < times.size(); ++k) {
        if (times[k] < t_lo - 1e-12) continue;
        if (times[k] > block_end + 1e-12) {
            if (cur >= 0.0) maxima.push_back(cur);
            cur = -1.0;
            while (times[k] > block_end + 1e-12) block_end += block;
        }
        cur = std::max(cur, devs[k]);
    }
    if (cur >= 0.0) maxima.push_back(cur);
    for (size_t k = 0; k + 1 < maxima.size(); ++k)
        if (maxima[k + 1] > maxima[k] + 1e-12 * scale) return false;
    return maxima.size() >= 2;
}

}  // namespace stability_detail

// Perturbs the equilibrium, simulates, fits the decay exponent of
// ||u(t) - phi|| on [a_max, T] (skipping the characteristic transient), and
// compares against the spectral prediction s0. A blow-up counts as
// instability evidence, not an error.
inline StabilityReport verify_stability(const EquilibriumResult& eq,
                                        const ModelSpec& spec, const Grid& grid,
                                        double eps, int trials, double T,
                                        uint64_t seed, double predicted_s0,
                                        const StabilityOptions& opts = {}) {
    if (!eq.converged)
        throw std::invalid_argument("verify_stability: equilibrium not converged");
    if (eps < 0.0) throw std::invalid_argument("verify_stability: eps must be >= 0");
    if (T < 3.0 * grid.a_max() - 1e-9)
        throw std::invalid_argument("verify_stability: need T >= 3 a_max");

    StabilityReport rep;
    rep.epsilon = eps;
    rep.trials = trials;
    rep.seed = seed;
    rep.predicted_s0 = predicted_s0;
    rep.rate_tol = opts.rate_tol;
    rep.rate_floor = opts.rate_floor > 0.0 ? opts.rate_floor : 0.01 / grid.a_max();
    rep.trial_results.resize(trials);

    const int n_steps = static_cast<int>(std::lround(T / grid.delta_t()));
    const double dev_floor = 1e-12 * (1.0 + norm_e0(eq.phi, grid, spec.norm_q));
    const double rate_ref = std::max(std::abs(predicted_s0), rep.rate_floor);

    parallel_for_indexed(trials, [&](int tr) {
        StabilityTrial& res = rep.trial_results[tr];
        res.index = tr;
        TransportStepper st(spec, grid);
        DensityField u0 = stability_detail::perturbed_start(eq.phi, grid, eps, seed, tr,
                                                            opts.signed_perturbation);
        SimState s = st.make_state(u0);
        res.times.reserve(n_steps + 1);
        res.deviations.reserve(n_steps + 1);
        auto dev_norm = [&] {
            return norm_e0(DensityField(s.u.values - eq.phi.values), grid, spec.norm_q);
        };
        res.times.push_back(s.t);
        res.deviations.push_back(dev_norm());
        res.initial_deviation = res.deviations.front();
        for (int k = 1; k <= n_steps; ++k) {
            st.step(s);
            res.times.push_back(s.t);
            double d = dev_norm();
            res.deviations.push_back(d);
            if (!(norm_e0(s.u, grid, spec.norm_q) <= opts.norm_cap)) {
                res.blew_up = true;
                break;
            }
        }
        res.final_deviation = res.deviations.back();

        double dev_max = 0.0;
        for (double d : res.deviations) dev_max = std::max(dev_max, d);
        if (dev_max <= dev_floor) {
            res.degenerate = true;  // started at the equilibrium
            res.decayed = true;
            res.rate_ok = true;
            return;
        }
        if (res.blew_up) return;

        res.decayed = stability_detail::envelope_decayed(
            res.times, res.deviations, grid.a_max(), grid.a_max(), dev_max);
        try {
            DecayFit fit = fit_decay_rate(res.times, res.deviations, grid.a_max(), T);
            res.omega_fit = fit.omega_fit;
            res.r_squared = fit.r_squared;
            res.rate_ok = std::abs(res.omega_fit - (-predicted_s0)) <=
                          rep.rate_tol * rate_ref;
        } catch (const std::invalid_argument&) {
            // trajectory hit exact zero inside the window: decayed hard
            res.omega_fit = std::numeric_limits<double>::infinity();
            res.rate_ok = false;
        }
    });

    rep.pass = true;
    for (const auto& tr : rep.trial_results)
        if (!(tr.decayed && tr.rate_ok && !tr.blew_up)) rep.pass = false;
    return rep;
}

struct BasinProbeResult {
    std::vector<double> eps_list;
    std::vector<bool> decayed;
    std::optional<double> largest_decaying;
};

// One trial per epsilon; an epsilon counts as decaying when the final
// deviation drops below eps/2 by time T.
inline BasinProbeResult basin_probe(const EquilibriumResult& eq, const ModelSpec& spec,
                                    const Grid& grid, const std::vector<double>& eps_list,
                                    double T, uint64_t seed = 12345,
                                    const StabilityOptions& opts = {}) {
    for (size_t k = 0; k + 1 < eps_list.size(); ++k)
        if (!(eps_list[k] < eps_list[k + 1]))
            throw std::invalid_argument("basin_probe: eps_list must be increasing");

    BasinProbeResult res;
    res.eps_list = eps_list;
    res.decayed.resize(eps_list.size(), false);
    const int n_steps = static_cast<int>(std::lround(T / grid.delta_t()));

    parallel_for_indexed(static_cast<int>(eps_list.size()), [&](int k) {
        TransportStepper st(spec, grid);
        DensityField u0 = stability_detail::perturbed_start(eq.phi, grid, eps_list[k],
                                                            seed, k,
                                                            opts.signed_perturbation);
        SimState s = st.make_state(u0);
        bool ok = true;
        for (int i = 0; i < n_steps; ++i) {
            st.step(s);
            if (!(norm_e0(s.u, grid, spec.norm_q) <= opts.norm_cap)) {
                ok = false;
                break;
            }
        }
        if (ok) {
            double dev = norm_e0(DensityField(s.u.values - eq.phi.values), grid,
                                 spec.norm_q);
            res.decayed[k] = dev < 0.5 * eps_list[k];
        }
    });

    for (size_t k = 0; k < eps_list.size(); ++k)
        if (res.decayed[k]) res.largest_decaying = eps_list[k];
    return res;
}

}  // namespace agediff
