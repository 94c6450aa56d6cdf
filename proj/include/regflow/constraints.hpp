#pragma once

#include <string>
#include <vector>

#include "regflow/model.hpp"

namespace rf {

// Integral equality constraint h[E] = target. Two kinds cover everything the
// flow needs: a field-independent kernel integrated against E, and the field
// energy integral.
struct Constraint {
    enum class Kind { AffineKernel, Fluence };

    Kind kind = Kind::AffineKernel;
    std::vector<double> kernel;  // AffineKernel only, one sample per grid point
    double target = 0.0;
    std::string label;
};

Constraint make_zero_area(const TimeGrid& grid, double target = 0.0);
Constraint make_fluence(double target, std::string label = "fluence");
Constraint make_reference_area(const TimeGrid& grid, double mu_d, double omega_r, double target);

struct ConstraintSet {
    std::vector<Constraint> items;

    int size() const { return static_cast<int>(items.size()); }
    void validate(const TimeGrid& grid) const;  // unique labels, kernel lengths
};

// The three-instance set used by the benchmark, targets taken from the
// problem's initial field.
ConstraintSet benchmark_constraints(const BenchmarkProblem& problem);

double evaluate(const Constraint& c, const ControlField& field);

// Functional derivative samples c(t_k): the kernel itself for AffineKernel,
// 2*E(t_k) for Fluence.
std::vector<double> gradient(const Constraint& c, const ControlField& field);

// Signed h_m[E] - C_m per constraint.
std::vector<double> violation(const ConstraintSet& set, const ControlField& field);

// Violation divided by |target| when the target is meaningfully nonzero;
// zero-target constraints (zero-area) are reported in absolute terms.
std::vector<double> relative_violation(const ConstraintSet& set, const ControlField& field);

// Magnitude of the constraint integrand before cancellation:
// trapezoid(|kernel * E|) for affine kernels, trapezoid(E^2) for fluence.
// Feasibility tests compare violations against this rather than against a
// target that may legitimately be zero.
double integrand_scale(const Constraint& c, const ControlField& field);

}  // namespace rf
