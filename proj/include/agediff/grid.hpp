#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace agediff {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Coupled age/space/time discretization. Time steps are locked to the age
// step (delta_t == delta_a) so characteristics land exactly on grid nodes.
// Age nodes a_j = j*delta_a, j = 0..n_age (closed, includes a = 0 and a_max).
// Spatial cells are cell-centered: x_i = x_min + (i + 1/2)*delta_x.
class Grid {
public:
    Grid(double a_max, int n_age, int n_space, double x_min, double x_max)
        : a_max_(a_max), n_age_(n_age), n_space_(n_space),
          x_min_(x_min), x_max_(x_max) {
        if (!(a_max > 0.0)) throw std::invalid_argument("grid: a_max must be positive");
        if (n_age < 2) throw std::invalid_argument("grid: n_age must be >= 2");
        if (n_space < 2) throw std::invalid_argument("grid: n_space must be >= 2");
        if (!(x_max > x_min)) throw std::invalid_argument("grid: x_max must exceed x_min");
        delta_a_ = a_max / n_age;
        delta_x_ = (x_max - x_min) / n_space;
    }

    double a_max() const { return a_max_; }
    int n_age() const { return n_age_; }
    int n_space() const { return n_space_; }
    double x_min() const { return x_min_; }
    double x_max() const { return x_max_; }
    double delta_a() const { return delta_a_; }
    double delta_x() const { return delta_x_; }
    double delta_t() const { return delta_a_; }  // characteristic alignment

    int n_age_nodes() const { return n_age_ + 1; }

    double age_node(int j) const { return j * delta_a_; }
    double x_node(int i) const { return x_min_ + (i + 0.5) * delta_x_; }

    std::vector<double> age_nodes() const {
        std::vector<double> a(n_age_ + 1);
        for (int j = 0; j <= n_age_; ++j) a[j] = age_node(j);
        return a;
    }
    std::vector<double> x_nodes() const {
        std::vector<double> x(n_space_);
        for (int i = 0; i < n_space_; ++i) x[i] = x_node(i);
        return x;
    }

    // Composite trapezoid weights over the closed age grid; sum == a_max.
    Vector age_weights() const {
        Vector q = Vector::Constant(n_age_ + 1, delta_a_);
        q(0) = 0.5 * delta_a_;
        q(n_age_) = 0.5 * delta_a_;
        return q;
    }

private:
    double a_max_;
    int n_age_;
    int n_space_;
    double x_min_, x_max_;
    double delta_a_, delta_x_;
};

}  // namespace agediff
