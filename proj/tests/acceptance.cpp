// Acceptance gate: every release criterion measured at its stated tolerance,
// one PASS/FAIL line per criterion, nonzero exit if any line fails.
#include <chrono>
#include <cmath>
#include <numbers>
#include <cstdarg>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "regflow/cli.hpp"
#include "regflow/experiments.hpp"
#include "regflow/flow.hpp"

using namespace rf;

namespace {

int g_failures = 0;

class Timer {
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();

public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }
};

void report(int index, const std::string& name, bool passed, double seconds,
            const std::string& detail) {
    if (!passed) ++g_failures;
    std::printf("%s criterion %d: %s | %s | %.2f s\n", passed ? "PASS" : "FAIL", index,
                name.c_str(), detail.c_str(), seconds);
    std::fflush(stdout);
}

std::string fmt(const char* pattern, ...) {
    char buf[512];
    va_list args;
    va_start(args, pattern);
    std::vsnprintf(buf, sizeof buf, pattern, args);
    va_end(args);
    return buf;
}

BenchmarkProblem benchmark(int n_points) {
    BenchmarkParams params;
    params.n_points = n_points;
    return build_benchmark(params);
}

struct BenchRunStats {
    FlowLog log;
    double fluence_drift = 0.0;  // relative, terminal
    int it99 = -1;
};

BenchRunStats benchmark_run(int n_points, double eps, const StepPolicy& policy, int max_iter,
                            double tau_stop, double j_stop) {
    const BenchmarkProblem p = benchmark(n_points);
    const Envelope env = build_envelope(p.grid, p.tau_au);
    const ConstraintSet cons = benchmark_constraints(p);
    FlowOptions options;
    options.eps = eps;
    options.policy = policy;
    options.tau_stop = tau_stop;
    options.max_iter = max_iter;
    if (j_stop > 0.0) {
        options.stop_when = [j_stop](const IterateView& view) { return view.J >= j_stop; };
    }
    BenchRunStats out;
    out.log = run(FidelityObjective(p.system), cons, env, p.initial_field, options);

    int fluence_idx = -1;
    for (int m = 0; m < cons.size(); ++m)
        if (cons.items[m].label == "fluence") fluence_idx = m;
    if (!out.log.records.empty() && fluence_idx >= 0) {
        const IterationRecord& last = out.log.records.back();
        const double target = cons.items[fluence_idx].target;
        out.fluence_drift = (last.h[fluence_idx] - target) / target;
    }
    int accepted = 0;
    for (const IterationRecord& rec : out.log.records) {
        if (rec.J >= 0.99 && out.it99 < 0) out.it99 = accepted;
        if (rec.accepted && rec.ds > 0.0) ++accepted;
    }
    return out;
}

void criterion_1_shift_identity() {
    Timer t;
    const ShiftReport rep = shift_suite(1000, 4, 42);
    const double sec = t.seconds();
    const bool pass = rep.violations == 0 && rep.worst_rel <= 1e-12 && sec < 5.0;
    report(1, "eigenvalue shift identity under regularisation", pass, sec,
           fmt("1000 trials, eps 1e-8..1, worst rel %.3e (tol 1e-12), %d violations",
               rep.worst_rel, rep.violations));
}

void criterion_2_lemma_suite() {
    Timer t;
    const LemmaReport rep = lemma_suite(1000, 4, 43);
    const double sec = t.seconds();
    const bool pass = rep.violations == 0 && rep.worst_margin >= -1e-12 && sec < 5.0;
    report(2, "inverse-entry and first-order bounds", pass, sec,
           fmt("1000 trials, %d violations, worst margin %.3e (slack floor -1e-12)",
               rep.violations, rep.worst_margin));
}

void criterion_3_ascent_pairing() {
    Timer t;
    const BenchmarkProblem p = benchmark(1000);
    const Envelope env = build_envelope(p.grid, p.tau_au);
    const ConstraintSet cons = benchmark_constraints(p);
    const double eps = 1e-3;

    double worst_rel = 0.0;
    double min_gain = 0.0;
    int iterates = 0;
    FlowOptions options;
    options.eps = eps;
    options.policy = StepPolicy::halving_on_decrease(5e-7, 0.5);
    options.tau_stop = 0.0;
    options.max_iter = 50;
    options.observer = [&](const IterateView& view) {
        ++iterates;
        std::vector<double> prod(view.c0.size());
        for (size_t k = 0; k < prod.size(); ++k) prod[k] = view.c0[k] * view.velocity[k];
        const double lhs = trapezoid(prod, view.state.field.grid.dt);
        const double rhs = view.gram.g0 * (1.0 - eps * eps * view.gram.x[0]);
        worst_rel = std::max(worst_rel, std::abs(lhs - rhs) / std::abs(rhs));
        min_gain = std::min(min_gain, rhs);
    };
    run(FidelityObjective(p.system), cons, env, p.initial_field, options);
    const double sec = t.seconds();
    const bool pass = iterates >= 50 && worst_rel <= 1e-10 && min_gain >= -1e-15 && sec < 60.0;
    report(3, "gradient/velocity pairing equals the tempered ascent rate", pass, sec,
           fmt("%d iterates, worst rel %.3e (tol 1e-10), min first-order gain %.3e", iterates,
               worst_rel, min_gain));
}

void criterion_4_fd_gradient() {
    Timer t;
    const BenchmarkProblem p = benchmark(400);
    const ObjectiveEval eval = evaluate_with_gradient(p.system, p.initial_field);
    double field_scale = 0.0, grad_scale = 0.0;
    for (double v : p.initial_field.samples) field_scale = std::max(field_scale, std::abs(v));
    for (double v : eval.c0) grad_scale = std::max(grad_scale, std::abs(v));
    const double h = 1e-6 * field_scale;

    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> pick(1, p.grid.n_points - 3);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const int k = pick(rng);
        ControlField up = p.initial_field, dn = p.initial_field;
        up.samples[k] += h;
        dn.samples[k] -= h;
        const double jp = fidelity(p.system, up);
        const double jm = fidelity(p.system, dn);
        const double fd = (jp - jm) / (2.0 * h * p.grid.dt);
        const double denom = std::max(std::abs(eval.c0[k]), 1e-6 * grad_scale);
        worst = std::max(worst, std::abs(fd - eval.c0[k]) / denom);
    }
    const double sec = t.seconds();
    const bool pass = worst <= 1e-5 && sec < 60.0;
    report(4, "adjoint gradient matches central differences", pass, sec,
           fmt("20 random interior points at N_t = 400, worst rel %.3e (tol 1e-5)", worst));
}

void criterion_5_convergence_rate() {
    Timer t;
    SweepSpec synth_spec;
    const ConvergenceResult synth = convergence_sweep(synth_spec, ProblemKind::synthetic);

    SweepSpec bench_spec;
    bench_spec.n_points = 1000;
    const ConvergenceResult bench = convergence_sweep(bench_spec, ProblemKind::benchmark);

    double bench_slope = bench.fit.slope;
    double sat_ratio = 0.0, knee_ratio = 0.0;
    double d_1e3 = 0.0, d_3e3 = 0.0, d_1e2 = 0.0, d_1e1 = 0.0;
    for (size_t i = 0; i < bench.fit.eps.size(); ++i) {
        const double e = bench.fit.eps[i];
        const double d = bench.fit.distances[i];
        if (e == 1e-3) d_1e3 = d;
        if (e == 3e-3) d_3e3 = d;
        if (e == 1e-2) d_1e2 = d;
        if (e == 1e-1) d_1e1 = d;
    }
    if (d_3e3 > 0.0) sat_ratio = d_1e1 / d_3e3;
    if (d_1e3 > 0.0) knee_ratio = d_1e1 / d_1e3;

    const double sec = t.seconds();
    const bool synth_ok =
        synth.fit.window_points >= 4 && synth.fit.slope >= 1.8 && synth.fit.slope <= 2.2;
    // Saturation: past eps ~ 1e-3 the distances flatten instead of growing
    // with eps^2 (which would be 1e4 over these two decades).
    const bool bench_ok = bench_slope >= 1.8 && bench_slope <= 2.2 && sat_ratio > 0.0 &&
                          sat_ratio < 1.6 && knee_ratio < 2.0;
    const bool pass = synth_ok && bench_ok && sec < 600.0;
    report(5, "quadratic convergence rate with benchmark saturation", pass, sec,
           fmt("synthetic slope %.4f over 4 decades (band [1.8, 2.2]); benchmark small-eps "
               "slope %.4f, flatness past the knee %.3f (< 1.6), growth 1e-3 -> 1e-1 %.3f "
               "(< 2 vs 1e4 unsaturated)",
               synth.fit.slope, bench_slope, sat_ratio, knee_ratio));
}

void criterion_6_baseline_conditioning() {
    Timer t;
    const BenchmarkProblem p = benchmark(1000);
    const Envelope env = build_envelope(p.grid, p.tau_au);
    const ConstraintSet cons = benchmark_constraints(p);
    FlowOptions options;
    options.eps = 0.0;
    options.policy = StepPolicy::halving_on_decrease(5e-7, 0.5);
    options.max_iter = 100;
    options.stop_when = [](const IterateView& view) { return view.J >= 0.99; };
    const FlowLog log = run(FidelityObjective(p.system), cons, env, p.initial_field, options);

    double cond_lo = 1e300, cond_hi = 0.0, worst_affine = 0.0;
    for (const IterationRecord& rec : log.records) {
        cond_lo = std::min(cond_lo, rec.cond);
        cond_hi = std::max(cond_hi, rec.cond);
        for (int m = 0; m < cons.size(); ++m)
            if (cons.items[m].kind == Constraint::Kind::AffineKernel)
                worst_affine = std::max(worst_affine, std::abs(rec.h[m] - cons.items[m].target));
    }
    const double final_j = log.records.empty() ? 0.0 : log.records.back().J;
    const double sec = t.seconds();
    const bool pass = final_j >= 0.99 && cond_lo >= 1e8 && cond_hi <= 1e12 &&
                      worst_affine <= 1e-6 && sec < 300.0;
    report(6, "unregularised baseline: conditioning band and affine conservation", pass, sec,
           fmt("J %.5f, cond in [%.3e, %.3e] (band [1e8, 1e12]), worst affine deviation "
               "%.3e (tol 1e-6)",
               final_j, cond_lo, cond_hi, worst_affine));
}

void criterion_7_payoff() {
    Timer t;
    const StepPolicy policy = StepPolicy::halving_on_decrease(1e-6, 0.1);
    const BenchRunStats plain = benchmark_run(4000, 0.0, policy, 100, 1e-10, 0.0);
    const BenchRunStats reg = benchmark_run(4000, 1e-2, policy, 100, 1e-10, 0.0);
    const double sec = t.seconds();

    const double drift_ratio = std::abs(plain.fluence_drift) / std::abs(reg.fluence_drift);
    const bool zero_rejections = reg.log.total_rejections == 0;
    const bool drift_ok = drift_ratio >= 5.0;
    const bool fidelity_ok = plain.it99 >= 0 && reg.it99 >= 0;
    const bool ordering_ok = fidelity_ok && reg.it99 <= plain.it99;
    const bool pass = zero_rejections && drift_ok && fidelity_ok && ordering_ok && sec < 600.0;
    report(7, "regularisation payoff at ds = 1e-6 (full grid)", pass, sec,
           fmt("rejections eps=1e-2: %d (need 0); drift %.4f -> %.4f, ratio %.2f (need >= 5); "
               "iterations to 0.99: %d vs %d (need regularised <= plain); both reach 0.99: %s",
               reg.log.total_rejections, plain.fluence_drift, reg.fluence_drift, drift_ratio,
               reg.it99, plain.it99, fidelity_ok ? "yes" : "no"));
}

void criterion_8_cfl() {
    Timer t;
    // Bounded-step runs: every accepted step keeps ds * G * ||inv|| <= 1.9,
    // and no accepted step may lose more than 1e-12 of the objective.
    const BenchmarkProblem p = benchmark(1000);
    const Envelope env = build_envelope(p.grid, p.tau_au);
    const ConstraintSet cons = benchmark_constraints(p);
    FlowOptions options;
    options.eps = 1e-3;
    options.policy = StepPolicy::cfl_bound(1.9);
    options.tau_stop = 0.0;
    options.max_iter = 30;
    const FlowLog log = run(FidelityObjective(p.system), cons, env, p.initial_field, options);

    double worst_product = 0.0, worst_loss = 0.0;
    double prev_j = log.records.empty() ? 0.0 : log.records.front().J;
    for (const IterationRecord& rec : log.records) {
        if (!rec.accepted) continue;
        worst_product = std::max(worst_product, rec.cfl_product);
        worst_loss = std::max(worst_loss, prev_j - rec.J);
        prev_j = rec.J;
    }
    const bool bounded_ok = worst_product <= 1.9 * (1.0 + 1e-12) && worst_loss <= 1e-12;

    // Deliberate 10x violation on the exact-curvature quadratic toy: the
    // objective has unit curvature, so overshooting the bound by a factor of
    // ten must lose ground on the very first step.
    TimeGrid toy_grid(0.0, 1.0, 101);
    Envelope toy_env;
    toy_env.samples.assign(toy_grid.n_points, 1.0);
    toy_env.tau = 1.0;
    ControlField toy_start;
    toy_start.grid = toy_grid;
    toy_start.samples.resize(toy_grid.n_points);
    for (int k = 0; k < toy_grid.n_points; ++k)
        toy_start.samples[k] = std::sin(2.0 * std::numbers::pi * toy_grid.time(k));
    const QuadraticObjective quad;
    const ConstraintSet no_constraints;
    const ObjectiveEval eval = quad.value_and_gradient(toy_start);
    const std::vector<std::vector<double>> rows = {eval.c0};
    const GramData gram = regularize_and_diagnose(assemble(toy_env, rows, toy_grid.dt), 0.0);
    const double ds_violate = 10.0 * cfl_step_bound(1.0, gram, 1.9);

    FlowOptions vopt;
    vopt.eps = 0.0;
    vopt.policy = StepPolicy::fixed(ds_violate);
    vopt.tau_stop = 0.0;
    vopt.max_iter = 1;
    const FlowLog vlog = run(quad, no_constraints, toy_env, toy_start, vopt);
    const bool decreased =
        vlog.records.size() == 2 && vlog.records[1].J < vlog.records[0].J;

    const double sec = t.seconds();
    const bool pass = bounded_ok && decreased && sec < 120.0;
    report(8, "step bound guarantees ascent; 10x violation breaks it", pass, sec,
           fmt("bounded run: worst product %.3f (<= 1.9), worst accepted loss %.3e "
               "(<= 1e-12); violated run decreased: %s",
               worst_product, worst_loss, decreased ? "yes" : "no"));
}

void criterion_9_drift_identity() {
    Timer t;
    // eps = 0: the predicted drift is bitwise zero and the affine functionals
    // are conserved to 1e-6 absolute.
    const BenchmarkProblem p = benchmark(1000);
    const Envelope env = build_envelope(p.grid, p.tau_au);
    const ConstraintSet cons = benchmark_constraints(p);
    FlowOptions options;
    options.eps = 0.0;
    options.policy = StepPolicy::halving_on_decrease(5e-7, 0.5);
    options.max_iter = 10;
    const FlowLog log = run(FidelityObjective(p.system), cons, env, p.initial_field, options);
    bool pred_zero = true;
    for (const IterationRecord& rec : log.records)
        for (double d : rec.drift_pred)
            if (d != 0.0) pred_zero = false;
    double worst_affine = 0.0;
    const std::vector<DriftEntry> zero_drifts = drift_report(log, cons, log.terminal_field);
    for (int m = 0; m < cons.size(); ++m) {
        if (zero_drifts[m].predicted != 0.0) pred_zero = false;
        if (cons.items[m].kind == Constraint::Kind::AffineKernel)
            worst_affine = std::max(worst_affine, std::abs(zero_drifts[m].measured));
    }

    // Large eps on the synthetic problem: the measured-minus-predicted part
    // of the nonlinear (fluence) drift is the quadrature remainder, so
    // halving ds at a fixed step count shrinks it by about 4.
    const SyntheticProblem s = make_synthetic_problem(true);
    int fluence_idx = -1;
    for (int m = 0; m < s.constraints.size(); ++m)
        if (s.constraints.items[m].label == "fluence") fluence_idx = m;
    auto residual_at = [&](double ds) {
        FlowOptions o;
        o.eps = 0.1;
        o.policy = StepPolicy::fixed(ds);
        o.tau_stop = 0.0;
        o.max_iter = 40;
        const FlowLog l = run(FidelityObjective(s.system), s.constraints, s.envelope, s.field, o);
        const std::vector<DriftEntry> d = drift_report(l, s.constraints, l.terminal_field);
        return d[fluence_idx].residual;
    };
    const double r_full = residual_at(0.002);
    const double r_half = residual_at(0.001);
    const double ratio = std::abs(r_full) / std::abs(r_half);

    const double sec = t.seconds();
    const bool pass = pred_zero && worst_affine <= 1e-6 && ratio >= 3.0 && ratio <= 5.0 &&
                      sec < 300.0;
    report(9, "drift prediction: exact zero at eps = 0, quadratic remainder at eps > 0", pass,
           sec,
           fmt("predicted drift all zero: %s; worst affine deviation %.3e (tol 1e-6); "
               "residual ratio on halving %.3f (band [3, 5])",
               pred_zero ? "yes" : "no", worst_affine, ratio));
}

}  // namespace

int main() {
    std::printf("acceptance gate: 9 criteria\n");
    criterion_1_shift_identity();
    criterion_2_lemma_suite();
    criterion_3_ascent_pairing();
    criterion_4_fd_gradient();
    criterion_5_convergence_rate();
    criterion_6_baseline_conditioning();
    criterion_7_payoff();
    criterion_8_cfl();
    criterion_9_drift_identity();
    std::printf("acceptance: %d/9 passed\n", 9 - g_failures);
    return g_failures == 0 ? 0 : 1;
}
