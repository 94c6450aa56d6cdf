#pragma once

#include <functional>
#include <string>
#include <vector>

#include "regflow/constraints.hpp"
#include "regflow/gram.hpp"
#include "regflow/model.hpp"

namespace rf {

// Objective seam: the flow only needs a value and a value-plus-gradient
// evaluation, so synthetic objectives can stand in for the quantum one.
class Objective {
public:
    virtual ~Objective() = default;
    virtual double value(const ControlField& field) const = 0;
    virtual ObjectiveEval value_and_gradient(const ControlField& field) const = 0;
};

class FidelityObjective final : public Objective {
public:
    explicit FidelityObjective(QuantumSystem system) : sys_(std::move(system)) {}
    double value(const ControlField& field) const override;
    ObjectiveEval value_and_gradient(const ControlField& field) const override;
    const QuantumSystem& system() const { return sys_; }

private:
    QuantumSystem sys_;
};

// J = -(1/2) * trapezoid(E^2): gradient -E, exactly unit curvature along any
// unit direction. Used to pin the curvature probe.
class QuadraticObjective final : public Objective {
public:
    double value(const ControlField& field) const override;
    ObjectiveEval value_and_gradient(const ControlField& field) const override;
};

struct StepPolicy {
    enum class Kind { Fixed, HalvingOnDecrease, CflBound };

    Kind kind = Kind::Fixed;
    double ds = 1e-6;      // Fixed step, or the per-iteration starting step
    double factor = 0.1;   // HalvingOnDecrease shrink factor
    double min_ds = 1e-16; // HalvingOnDecrease underflow threshold
    bool reset_each_iteration = true;  // restart each iteration from ds
    double alpha = 1.0;    // CflBound margin, in (0, 2)
    int g_refresh = 5;     // CflBound: re-estimate G every this many accepted steps
    double probe_h = 1e-5; // curvature probe scale
    double safety = 5.0;   // curvature inflation factor
    double g_fixed = 0.0;  // CflBound: when > 0, use this G instead of probing

    static StepPolicy fixed(double step);
    static StepPolicy halving_on_decrease(double ds0, double shrink = 0.1,
                                          double min_step = 1e-16);
    static StepPolicy cfl_bound(double alpha);
    void validate() const;
};

enum class Termination { tolerance, max_iterations, step_underflow, factorisation_failure };
std::string to_string(Termination t);

// Evolving state of one run: the current iterate plus the accumulated
// morphing time and drift prediction. s_accum sums only accepted steps, and
// drift_pred moves only on accepted steps.
struct FlowState {
    ControlField field;
    int iteration = 0;
    double s_accum = 0.0;
    std::vector<double> drift_pred;  // one entry per constraint
};

// One row per attempted step plus one closing row for the final iterate.
// State columns (J, h, gram diagnostics, drift_pred) describe the iterate the
// attempt starts from; ds/accepted/rejections describe the attempt itself.
// The closing row carries ds = 0, accepted = true.
struct IterationRecord {
    int k = 0;
    double s_accum = 0.0;
    double J = 0.0;
    double dJ_firstorder = 0.0;  // g0 * rho
    double g0 = 0.0;
    double rho = 0.0;  // 1 - eps^2 * [gamma_eps^-1]_00
    std::vector<double> h;
    double cond = 0.0;
    double sigma_min_sq = 0.0;
    double eps = 0.0;
    double ds = 0.0;
    bool accepted = true;
    int rejections_this_step = 0;
    double cfl_product = 0.0;  // ds * G * ||gamma_eps^-1||, CflBound runs only
    std::vector<double> drift_pred;
};

struct FlowLog {
    std::vector<IterationRecord> records;
    ControlField terminal_field;
    Termination termination = Termination::max_iterations;
    std::vector<double> final_drift_pred;
    int accepted_steps = 0;
    int total_rejections = 0;
};

// Read-only view of one iterate, handed to the observer before stepping.
struct IterateView {
    const FlowState& state;
    double J;
    const std::vector<double>& c0;
    const std::vector<double>& velocity;
    const GramData& gram;
};

enum class DriftQuadrature { LeftEndpoint, TrapezoidInS };

struct FlowOptions {
    double eps = 0.0;
    StepPolicy policy;
    double tau_stop = 1e-10;
    int max_iter = 500;
    DriftQuadrature drift_quadrature = DriftQuadrature::LeftEndpoint;
    double feasibility_tol = 1e-6;
    std::function<void(const IterateView&)> observer;
    // Extra stop predicate checked at each iterate head (fidelity targets in
    // the experiment harness); reported as Termination::tolerance.
    std::function<bool(const IterateView&)> stop_when;
};

// v(t_k) = S(t_k) * g0 * sum_l x_l * c_l(t_k). gradients holds the M+1 rows,
// objective direction first, matching gram.x.
std::vector<double> velocity(const ControlField& field, const Envelope& envelope,
                             const GramData& gram,
                             const std::vector<std::vector<double>>& gradients);

// Largest step the discrete-monotonicity bound admits: alpha / (G * ||gamma_eps^-1||).
double cfl_step_bound(double curvature, const GramData& gram, double alpha);

// Second difference of the objective along the unit-normalised direction,
// inflated by the safety factor.
double estimate_curvature(const Objective& objective, const ControlField& field,
                          const std::vector<double>& direction, double h, double safety = 5.0);
double estimate_curvature(const QuantumSystem& system, const ControlField& field,
                          const std::vector<double>& direction, double h, double safety = 5.0);

FlowLog run(const Objective& objective, const ConstraintSet& constraints,
            const Envelope& envelope, const ControlField& initial, const FlowOptions& options);
FlowLog run(const QuantumSystem& system, const ConstraintSet& constraints,
            const Envelope& envelope, const ControlField& initial, double eps,
            const StepPolicy& policy, double tau_stop = 1e-10, int max_iter = 500);

struct DriftEntry {
    double measured = 0.0;
    double predicted = 0.0;
    double residual = 0.0;  // measured - predicted, the discretisation part
};

std::vector<DriftEntry> drift_report(const FlowLog& log, const ConstraintSet& constraints,
                                     const ControlField& terminal_field);

}  // namespace rf
