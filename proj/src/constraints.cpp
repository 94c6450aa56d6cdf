#include "regflow/constraints.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace rf {

Constraint make_zero_area(const TimeGrid& grid, double target) {
    Constraint c;
    c.kind = Constraint::Kind::AffineKernel;
    c.kernel.assign(grid.n_points, 1.0);
    c.target = target;
    c.label = "zero_area";
    return c;
}

Constraint make_fluence(double target, std::string label) {
    Constraint c;
    c.kind = Constraint::Kind::Fluence;
    c.target = target;
    c.label = std::move(label);
    return c;
}

Constraint make_reference_area(const TimeGrid& grid, double mu_d, double omega_r, double target) {
    Constraint c;
    c.kind = Constraint::Kind::AffineKernel;
    c.kernel.resize(grid.n_points);
    for (int k = 0; k < grid.n_points; ++k)
        c.kernel[k] = mu_d * std::cos(omega_r * grid.time(k));
    c.target = target;
    c.label = "reference_area";
    return c;
}

void ConstraintSet::validate(const TimeGrid& grid) const {
    std::unordered_set<std::string> seen;
    for (const Constraint& c : items) {
        if (!seen.insert(c.label).second)
            throw std::invalid_argument("ConstraintSet: duplicate label '" + c.label + "'");
        if (c.kind == Constraint::Kind::AffineKernel &&
            static_cast<int>(c.kernel.size()) != grid.n_points)
            throw std::invalid_argument("ConstraintSet: kernel length does not match grid");
        if (c.kind == Constraint::Kind::Fluence && !c.kernel.empty())
            throw std::invalid_argument("ConstraintSet: fluence constraint carries no kernel");
    }
}

ConstraintSet benchmark_constraints(const BenchmarkProblem& problem) {
    ConstraintSet set;
    set.items.push_back(make_zero_area(problem.grid));
    set.items.push_back(make_fluence(problem.fluence_target));
    set.items.push_back(make_reference_area(problem.grid, problem.mu_d_au, problem.omega_r_au,
                                            problem.reference_area_target));
    set.validate(problem.grid);
    return set;
}

double evaluate(const Constraint& c, const ControlField& field) {
    const int n = field.grid.n_points;
    if (c.kind == Constraint::Kind::AffineKernel) {
        if (static_cast<int>(c.kernel.size()) != n)
            throw std::invalid_argument("evaluate: kernel length does not match field grid");
        std::vector<double> prod(n);
        for (int k = 0; k < n; ++k) prod[k] = c.kernel[k] * field.samples[k];
        return trapezoid(prod, field.grid.dt);
    }
    std::vector<double> sq(n);
    for (int k = 0; k < n; ++k) sq[k] = field.samples[k] * field.samples[k];
    return trapezoid(sq, field.grid.dt);
}

std::vector<double> gradient(const Constraint& c, const ControlField& field) {
    const int n = field.grid.n_points;
    if (c.kind == Constraint::Kind::AffineKernel) {
        if (static_cast<int>(c.kernel.size()) != n)
            throw std::invalid_argument("gradient: kernel length does not match field grid");
        return c.kernel;
    }
    std::vector<double> g(n);
    for (int k = 0; k < n; ++k) g[k] = 2.0 * field.samples[k];
    return g;
}

std::vector<double> violation(const ConstraintSet& set, const ControlField& field) {
    std::vector<double> out;
    out.reserve(set.items.size());
    for (const Constraint& c : set.items) out.push_back(evaluate(c, field) - c.target);
    return out;
}

std::vector<double> relative_violation(const ConstraintSet& set, const ControlField& field) {
    std::vector<double> out = violation(set, field);
    for (size_t m = 0; m < out.size(); ++m) {
        const double denom = std::abs(set.items[m].target);
        if (denom > 1e-30) out[m] /= denom;
    }
    return out;
}

double integrand_scale(const Constraint& c, const ControlField& field) {
    const int n = field.grid.n_points;
    std::vector<double> mag(n);
    if (c.kind == Constraint::Kind::AffineKernel) {
        if (static_cast<int>(c.kernel.size()) != n)
            throw std::invalid_argument("integrand_scale: kernel length does not match field grid");
        for (int k = 0; k < n; ++k) mag[k] = std::abs(c.kernel[k] * field.samples[k]);
    } else {
        for (int k = 0; k < n; ++k) mag[k] = field.samples[k] * field.samples[k];
    }
    return trapezoid(mag, field.grid.dt);
}

}  // namespace rf
