#pragma once

#include <numbers>
#include <vector>

#include "regflow/numkit.hpp"

namespace rf {

// Unit conversions pinned so runs are bit-reproducible across machines.
inline constexpr double kCmPerHartree = 219474.6313632;
inline constexpr double kDebyePerAu = 2.541746473;
inline constexpr double kFsPerAu = 0.02418884326;

// Uniform time grid in atomic units.
struct TimeGrid {
    double t_start = 0.0;
    double t_end = 0.0;
    int n_points = 0;
    double dt = 0.0;

    TimeGrid() = default;
    TimeGrid(double t0, double t1, int n);

    double time(int k) const { return t_start + dt * k; }
};

// Bilinear control problem data: drift H0, coupling mu, initial and target
// states. All in atomic units.
struct QuantumSystem {
    int dim = 0;
    HermitianMatrix H0;
    HermitianMatrix mu;
    std::vector<cplx> psi0;
    std::vector<cplx> psif;

    void validate() const;  // unit norms to 1e-12, Hermiticity, matching dims
};

struct ControlField {
    TimeGrid grid;
    std::vector<double> samples;  // E(t_k), atomic units, length n_points

    void validate() const;  // length matches grid, all samples finite
};

struct StateTrajectory {
    std::vector<std::vector<cplx>> states;  // psi(t_k)
    std::vector<CMatrix> propagators;       // U(t_k), U(t_0) = identity
};

// Three-level ladder benchmark parameters in laboratory units. omega_r is
// always derived from omega0 and Vdd, never stored.
struct BenchmarkParams {
    double omega0_cm = 12578.95;
    double vdd_cm = 12.35;
    double mu_d_debye = std::numbers::sqrt2 * 7.61;
    double tau_fs = 250.0;
    double theta_sg = std::numbers::pi / 2.0;
    int n_points = 4000;

    double omega0_au() const { return omega0_cm / kCmPerHartree; }
    double vdd_au() const { return vdd_cm / kCmPerHartree; }
    double mu_d_au() const { return mu_d_debye / kDebyePerAu; }
    double tau_au() const { return tau_fs / kFsPerAu; }
    double omega_r_au() const { return 0.5 * omega0_au() + vdd_au(); }
};

// Assembled problem: system plus grid, the Gaussian-carrier initial field,
// and the constraint targets evaluated on it. tau/omega_r/mu_d ride along in
// atomic units because the envelope and the reference-area kernel need them.
struct BenchmarkProblem {
    QuantumSystem system;
    TimeGrid grid;
    ControlField initial_field;
    double fluence_target = 0.0;         // integral of E^2 over the horizon
    double reference_area_target = 0.0;  // integral of mu_d*cos(omega_r t)*E
    double tau_au = 0.0;
    double omega_r_au = 0.0;
    double mu_d_au = 0.0;
};

BenchmarkProblem build_benchmark(const BenchmarkParams& params);

// Piecewise-constant propagation: the generator on slice [t_k, t_{k+1}] is
// H0 - mu*E(t_k) (left endpoint), exponentiated through its
// eigendecomposition. Stores cumulative propagators.
StateTrajectory propagate(const QuantumSystem& system, const ControlField& field);

// J = |<psif, psi(T)>|^2, clamped to 1 only within a 1e-12 overshoot.
double fidelity(const QuantumSystem& system, const StateTrajectory& trajectory);

// Same J without storing the trajectory. Performs the identical sequence of
// per-slice operations as evaluate_with_gradient, so the two values match bit
// for bit; accept/reject decisions can mix the two paths safely.
double fidelity(const QuantumSystem& system, const ControlField& field);

// lambda(t_k) = <psif, psi(T)> * U(t_k) * U(T)^dagger * psif, assembled from
// the trajectory's stored propagators. No second backward solve.
std::vector<std::vector<cplx>> costate(const QuantumSystem& system,
                                       const ControlField& field,
                                       const StateTrajectory& trajectory);

// Fidelity and its gradient with respect to the field samples, in
// functional-derivative normalisation (dJ/dE_k = dt * c0[k] for the slices
// the stepper actually consumes). One forward pass, one backward pass.
struct ObjectiveEval {
    double J = 0.0;
    std::vector<double> c0;
};
ObjectiveEval evaluate_with_gradient(const QuantumSystem& system, const ControlField& field);

std::vector<double> objective_gradient(const QuantumSystem& system, const ControlField& field);

}  // namespace rf
