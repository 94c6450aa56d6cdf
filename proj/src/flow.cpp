#include "regflow/flow.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace rf {

namespace {

double l2_norm(const std::vector<double>& v, double dt) {
    std::vector<double> sq(v.size());
    for (size_t i = 0; i < v.size(); ++i) sq[i] = v[i] * v[i];
    return std::sqrt(trapezoid(sq, dt));
}

}  // namespace

double FidelityObjective::value(const ControlField& field) const { return fidelity(sys_, field); }

ObjectiveEval FidelityObjective::value_and_gradient(const ControlField& field) const {
    return evaluate_with_gradient(sys_, field);
}

double QuadraticObjective::value(const ControlField& field) const {
    field.validate();
    std::vector<double> sq(field.samples.size());
    for (size_t i = 0; i < field.samples.size(); ++i) sq[i] = field.samples[i] * field.samples[i];
    return -0.5 * trapezoid(sq, field.grid.dt);
}

ObjectiveEval QuadraticObjective::value_and_gradient(const ControlField& field) const {
    ObjectiveEval out;
    out.J = value(field);
    out.c0.resize(field.samples.size());
    for (size_t i = 0; i < field.samples.size(); ++i) out.c0[i] = -field.samples[i];
    return out;
}

StepPolicy StepPolicy::fixed(double step) {
    StepPolicy p;
    p.kind = Kind::Fixed;
    p.ds = step;
    return p;
}

StepPolicy StepPolicy::halving_on_decrease(double ds0, double shrink, double min_step) {
    StepPolicy p;
    p.kind = Kind::HalvingOnDecrease;
    p.ds = ds0;
    p.factor = shrink;
    p.min_ds = min_step;
    return p;
}

StepPolicy StepPolicy::cfl_bound(double alpha) {
    StepPolicy p;
    p.kind = Kind::CflBound;
    p.alpha = alpha;
    return p;
}

void StepPolicy::validate() const {
    if (kind != Kind::CflBound && !(ds > 0.0))
        throw std::invalid_argument("StepPolicy: step must be positive");
    if (kind == Kind::HalvingOnDecrease) {
        if (!(factor > 0.0) || !(factor < 1.0))
            throw std::invalid_argument("StepPolicy: shrink factor must lie in (0, 1)");
        if (!(min_ds > 0.0))
            throw std::invalid_argument("StepPolicy: underflow threshold must be positive");
    }
    if (kind == Kind::CflBound) {
        if (!(alpha > 0.0) || !(alpha < 2.0))
            throw std::invalid_argument("StepPolicy: alpha must lie in (0, 2)");
        if (g_refresh < 1) throw std::invalid_argument("StepPolicy: g_refresh must be at least 1");
        if (!(probe_h > 0.0)) throw std::invalid_argument("StepPolicy: probe scale must be positive");
        if (!(safety > 0.0)) throw std::invalid_argument("StepPolicy: safety must be positive");
        if (g_fixed < 0.0) throw std::invalid_argument("StepPolicy: pinned curvature must be nonnegative");
    }
}

std::string to_string(Termination t) {
    switch (t) {
        case Termination::tolerance: return "tolerance";
        case Termination::max_iterations: return "max_iterations";
        case Termination::step_underflow: return "step_underflow";
        case Termination::factorisation_failure: return "factorisation_failure";
    }
    return "unknown";
}

std::vector<double> velocity(const ControlField& field, const Envelope& envelope,
                             const GramData& gram,
                             const std::vector<std::vector<double>>& gradients) {
    const size_t n = field.samples.size();
    if (envelope.samples.size() != n)
        throw std::invalid_argument("velocity: envelope length does not match field");
    if (gradients.size() != gram.x.size())
        throw std::invalid_argument("velocity: gradient row count does not match solve dimension");
    for (const std::vector<double>& row : gradients)
        if (row.size() != n)
            throw std::invalid_argument("velocity: gradient row length does not match field");

    std::vector<double> v(n, 0.0);
    for (size_t l = 0; l < gradients.size(); ++l) {
        const double w = gram.x[l];
        for (size_t i = 0; i < n; ++i) v[i] += w * gradients[l][i];
    }
    for (size_t i = 0; i < n; ++i) v[i] *= envelope.samples[i] * gram.g0;
    return v;
}

double cfl_step_bound(double curvature, const GramData& gram, double alpha) {
    if (!(curvature > 0.0))
        throw std::invalid_argument("cfl_step_bound: curvature must be positive");
    if (!(alpha > 0.0) || !(alpha < 2.0))
        throw std::invalid_argument("cfl_step_bound: alpha must lie in (0, 2)");
    return alpha / (curvature * gram.inverse_norm2());
}

double estimate_curvature(const Objective& objective, const ControlField& field,
                          const std::vector<double>& direction, double h, double safety) {
    if (!(h > 0.0) || !std::isfinite(h))
        throw std::invalid_argument("estimate_curvature: probe scale must be positive and finite");
    if (!(safety > 0.0)) throw std::invalid_argument("estimate_curvature: safety must be positive");
    if (direction.size() != field.samples.size())
        throw std::invalid_argument("estimate_curvature: direction length does not match field");
    const double nrm = l2_norm(direction, field.grid.dt);
    if (nrm == 0.0) throw std::invalid_argument("estimate_curvature: direction has zero norm");

    const double scale = h / nrm;
    ControlField plus = field;
    ControlField minus = field;
    for (size_t i = 0; i < field.samples.size(); ++i) {
        plus.samples[i] += scale * direction[i];
        minus.samples[i] -= scale * direction[i];
    }
    const double j0 = objective.value(field);
    const double jp = objective.value(plus);
    const double jm = objective.value(minus);
    return safety * std::abs(jp - 2.0 * j0 + jm) / (h * h);
}

double estimate_curvature(const QuantumSystem& system, const ControlField& field,
                          const std::vector<double>& direction, double h, double safety) {
    return estimate_curvature(FidelityObjective(system), field, direction, h, safety);
}

FlowLog run(const Objective& objective, const ConstraintSet& constraints,
            const Envelope& envelope, const ControlField& initial, const FlowOptions& options) {
    initial.validate();
    constraints.validate(initial.grid);
    if (static_cast<int>(envelope.samples.size()) != initial.grid.n_points)
        throw std::invalid_argument("run: envelope length does not match grid");
    if (!(options.eps >= 0.0)) throw std::invalid_argument("run: eps must be nonnegative");
    if (!(options.tau_stop >= 0.0)) throw std::invalid_argument("run: tau_stop must be nonnegative");
    if (options.max_iter < 0) throw std::invalid_argument("run: max_iter must be nonnegative");
    options.policy.validate();

    const int n = initial.grid.n_points;
    const double dt = initial.grid.dt;
    const int M = constraints.size();

    // The projection only preserves constraints it starts on; refuse fields
    // that are already off the constraint surface beyond quadrature noise.
    for (const Constraint& c : constraints.items) {
        const double err = std::abs(evaluate(c, initial) - c.target);
        const double scale = std::max(std::abs(c.target), integrand_scale(c, initial));
        if (err > options.feasibility_tol * scale)
            throw std::invalid_argument("run: initial field violates constraint '" + c.label +
                                        "' beyond the feasibility tolerance");
    }

    const bool is_cfl = options.policy.kind == StepPolicy::Kind::CflBound;
    const bool is_halving = options.policy.kind == StepPolicy::Kind::HalvingOnDecrease;
    const double eps2 = options.eps * options.eps;

    FlowLog log;
    FlowState state;
    state.field = initial;
    state.drift_pred.assign(M, 0.0);
    double ds_memory = options.policy.ds;  // carries the last accepted step when reset is off
    double curvature = options.policy.g_fixed;
    int accepted_since_probe = -1;  // forces a probe on the first CflBound step
    bool small_change = false;      // last accepted step moved J by less than tau_stop
    double pending_half_ds = 0.0;   // TrapezoidInS: half-interval waiting for the next integrand

    while (true) {
        ObjectiveEval eval = objective.value_and_gradient(state.field);
        std::vector<std::vector<double>> rows;
        rows.reserve(M + 1);
        rows.push_back(std::move(eval.c0));
        std::vector<double> hvals(M);
        for (int m = 0; m < M; ++m) {
            hvals[m] = evaluate(constraints.items[m], state.field);
            rows.push_back(gradient(constraints.items[m], state.field));
        }

        GramData gram;
        try {
            gram = regularize_and_diagnose(assemble(envelope, rows, dt), options.eps);
        } catch (const FactorizationError&) {
            // A stalled run that converged onto a critical point still counts
            // as a tolerance stop; the head diagnostics are uncomputable, so
            // no terminal record is appended either way.
            log.termination = small_change ? Termination::tolerance
                                           : Termination::factorisation_failure;
            break;
        }

        // First-order drift rate of h_m along the flow; identically zero when
        // eps is zero, so unregularised runs predict exact conservation.
        std::vector<double> integrand(M);
        for (int m = 0; m < M; ++m) integrand[m] = -eps2 * gram.g0 * gram.x[m + 1];
        if (pending_half_ds != 0.0) {
            for (int m = 0; m < M; ++m)
                state.drift_pred[m] += 0.5 * pending_half_ds * integrand[m];
            pending_half_ds = 0.0;
        }

        std::vector<double> v = velocity(state.field, envelope, gram, rows);
        const double rho = 1.0 - eps2 * gram.x[0];

        IterationRecord base;
        base.k = state.iteration;
        base.s_accum = state.s_accum;
        base.J = eval.J;
        base.dJ_firstorder = gram.g0 * rho;
        base.g0 = gram.g0;
        base.rho = rho;
        base.h = hvals;
        base.cond = gram.cond;
        base.sigma_min_sq = gram.sigma_min_sq;
        base.eps = options.eps;
        base.drift_pred = state.drift_pred;

        const IterateView view{state, eval.J, rows[0], v, gram};
        if (options.observer) options.observer(view);

        const bool want_stop = small_change || (options.stop_when && options.stop_when(view));
        if (want_stop || state.iteration >= options.max_iter) {
            base.ds = 0.0;
            base.accepted = true;
            base.rejections_this_step = 0;
            base.cfl_product = 0.0;
            log.records.push_back(std::move(base));
            log.termination = want_stop ? Termination::tolerance : Termination::max_iterations;
            break;
        }

        if (is_cfl && options.policy.g_fixed <= 0.0 &&
            (accepted_since_probe < 0 || accepted_since_probe >= options.policy.g_refresh)) {
            // At a stationary point the probe direction vanishes; any step is
            // a no-op there, so a zero curvature placeholder is safe.
            curvature = l2_norm(v, dt) == 0.0
                            ? 0.0
                            : estimate_curvature(objective, state.field, v,
                                                 options.policy.probe_h, options.policy.safety);
            accepted_since_probe = 0;
        }

        double trial;
        if (is_cfl) {
            trial = cfl_step_bound(std::max(curvature, 1e-30), gram, options.policy.alpha);
        } else if (is_halving && !options.policy.reset_each_iteration) {
            trial = ds_memory;
        } else {
            trial = options.policy.ds;
        }

        int rejections = 0;
        bool underflow = false;
        while (true) {
            ControlField candidate = state.field;
            for (int i = 0; i < n; ++i) candidate.samples[i] += trial * v[i];
            const double j_new = objective.value(candidate);
            const bool accept = !is_halving || j_new >= eval.J;

            IterationRecord rec = base;
            rec.ds = trial;
            rec.accepted = accept;
            rec.rejections_this_step = rejections;
            rec.cfl_product = is_cfl ? trial * curvature * gram.inverse_norm2() : 0.0;
            log.records.push_back(std::move(rec));

            if (accept) {
                if (options.drift_quadrature == DriftQuadrature::LeftEndpoint) {
                    for (int m = 0; m < M; ++m) state.drift_pred[m] += trial * integrand[m];
                } else {
                    for (int m = 0; m < M; ++m) state.drift_pred[m] += 0.5 * trial * integrand[m];
                    pending_half_ds = trial;
                }
                state.s_accum += trial;
                ds_memory = trial;
                ++log.accepted_steps;
                if (is_cfl) ++accepted_since_probe;
                small_change = std::abs(j_new - eval.J) < options.tau_stop;
                state.field = std::move(candidate);
                ++state.iteration;
                break;
            }

            ++rejections;
            ++log.total_rejections;
            trial *= options.policy.factor;
            if (trial < options.policy.min_ds) {
                underflow = true;
                break;
            }
        }
        if (underflow) {
            log.termination = Termination::step_underflow;
            break;
        }
    }

    log.terminal_field = std::move(state.field);
    log.final_drift_pred = std::move(state.drift_pred);
    return log;
}

FlowLog run(const QuantumSystem& system, const ConstraintSet& constraints,
            const Envelope& envelope, const ControlField& initial, double eps,
            const StepPolicy& policy, double tau_stop, int max_iter) {
    const FidelityObjective objective(system);
    FlowOptions options;
    options.eps = eps;
    options.policy = policy;
    options.tau_stop = tau_stop;
    options.max_iter = max_iter;
    return run(objective, constraints, envelope, initial, options);
}

std::vector<DriftEntry> drift_report(const FlowLog& log, const ConstraintSet& constraints,
                                     const ControlField& terminal_field) {
    if (static_cast<int>(log.final_drift_pred.size()) != constraints.size())
        throw std::invalid_argument("drift_report: constraint count does not match the log");
    std::vector<DriftEntry> out(constraints.items.size());
    for (size_t m = 0; m < constraints.items.size(); ++m) {
        const Constraint& c = constraints.items[m];
        out[m].measured = evaluate(c, terminal_field) - c.target;
        out[m].predicted = log.final_drift_pred[m];
        out[m].residual = out[m].measured - out[m].predicted;
    }
    return out;
}

}  // namespace rf
