#pragma once

#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "agediff/grid.hpp"

namespace agediff {

// State u(a,x) on the grid: row j holds the spatial profile at age a_j,
// including the j = 0 newborn row. Units: individuals per age per volume.
struct DensityField {
    Matrix values;  // (n_age+1) x n_space

    DensityField() = default;
    explicit DensityField(Matrix v) : values(std::move(v)) {}

    static DensityField zero(const Grid& g) {
        return DensityField(Matrix::Zero(g.n_age_nodes(), g.n_space()));
    }
    static DensityField constant(const Grid& g, double c) {
        return DensityField(Matrix::Constant(g.n_age_nodes(), g.n_space(), c));
    }
    static DensityField from_function(const Grid& g,
                                      const std::function<double(double, double)>& f) {
        Matrix v(g.n_age_nodes(), g.n_space());
        for (int j = 0; j < g.n_age_nodes(); ++j)
            for (int i = 0; i < g.n_space(); ++i)
                v(j, i) = f(g.age_node(j), g.x_node(i));
        return DensityField(std::move(v));
    }

    int rows() const { return static_cast<int>(values.rows()); }
    int cols() const { return static_cast<int>(values.cols()); }

    bool matches(const Grid& g) const {
        return rows() == g.n_age_nodes() && cols() == g.n_space();
    }

    bool all_finite() const { return values.allFinite(); }
    double min_entry() const { return values.minCoeff(); }
    double max_abs() const { return values.cwiseAbs().maxCoeff(); }

    // Reported nonnegative with solver tolerance slack.
    bool nonnegative(double slack = 1e-12) const { return min_entry() >= -slack; }
};

inline void require_shape(const DensityField& u, const Grid& g, const char* where) {
    if (!u.matches(g))
        throw std::invalid_argument(std::string(where) + ": field shape does not match grid");
}

// Newborn density B(t)(x) recorded along a run.
struct BoundaryTrace {
    std::vector<double> times;
    std::vector<Vector> values;

    void append(double t, Vector v) {
        times.push_back(t);
        values.push_back(std::move(v));
    }
    size_t size() const { return times.size(); }
    bool consistent() const {
        if (times.size() != values.size()) return false;
        for (size_t k = 0; k + 1 < times.size(); ++k)
            if (!(times[k] < times[k + 1])) return false;
        for (const auto& v : values)
            if (!v.allFinite()) return false;
        return true;
    }
};

}  // namespace agediff
