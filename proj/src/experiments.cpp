#include "regflow/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <stdexcept>

#include "json.hpp"

namespace rf {

namespace {

std::string num17(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string numg(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

std::string join_g(const std::vector<double>& values) {
    std::string out;
    for (size_t i = 0; i < values.size(); ++i) {
        if (i) out += ",";
        out += num17(values[i]);
    }
    return out;
}

std::string hash_hex(std::uint32_t h) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%08x", h);
    return buf;
}

BenchmarkProblem desk_benchmark(double tau_fs, int n_points) {
    BenchmarkParams params;
    params.tau_fs = tau_fs;
    params.n_points = n_points;
    return build_benchmark(params);
}

int constraint_index(const ConstraintSet& cons, const std::string& label) {
    for (int m = 0; m < cons.size(); ++m)
        if (cons.items[m].label == label) return m;
    throw std::invalid_argument("no constraint labelled '" + label + "'");
}

// Accepted steps before the objective first reaches `target`; -1 if never.
int iterations_to(const FlowLog& log, double target) {
    int accepted = 0;
    for (const IterationRecord& rec : log.records) {
        if (rec.J >= target) return accepted;
        if (rec.accepted && rec.ds > 0.0) ++accepted;
    }
    return -1;
}

double relative_drift(const FlowLog& log, const ConstraintSet& cons, int index) {
    if (log.records.empty()) return std::numeric_limits<double>::quiet_NaN();
    const IterationRecord& last = log.records.back();
    const double target = cons.items[index].target;
    return (last.h[index] - target) / target;
}

double max_cond(const FlowLog& log) {
    double worst = 0.0;
    for (const IterationRecord& rec : log.records) worst = std::max(worst, rec.cond);
    return worst;
}

double l2_trap(const std::vector<double>& v, double dt) {
    std::vector<double> sq(v.size());
    for (size_t i = 0; i < v.size(); ++i) sq[i] = v[i] * v[i];
    return std::sqrt(trapezoid(sq, dt));
}

double l2_diff(const std::vector<double>& a, const std::vector<double>& b, double dt) {
    std::vector<double> sq(a.size());
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        sq[i] = d * d;
    }
    return std::sqrt(trapezoid(sq, dt));
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const size_t n = x.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < n; ++i) {
        const double lx = std::log(x[i]);
        const double ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double denom = n * sxx - sx * sx;
    if (denom == 0.0) throw std::invalid_argument("slope fit needs spread in x");
    return (n * sxy - sx * sy) / denom;
}

std::string canonical_text(const SweepSpec& spec) {
    std::string out = "tau_fs=" + join_g(spec.tau_fs);
    out += ";eps=" + join_g(spec.eps);
    out += ";ds=" + join_g(spec.ds);
    out += ";common_steps=" + std::to_string(spec.common_steps);
    out += ";s_target=" + num17(spec.s_target);
    out += ";seed=" + std::to_string(spec.seed);
    out += ";n_points=" + std::to_string(spec.n_points);
    out += ";max_iter=" + std::to_string(spec.max_iter);
    return out;
}

void stamp_common_meta(Table& table, const std::string& experiment, const SweepSpec& spec,
                       std::uint32_t hash) {
    table.meta.emplace_back("experiment", experiment);
    table.meta.emplace_back("columns_version", "1");
    table.meta.emplace_back("config_hash", hash_hex(hash));
    table.meta.emplace_back("spec", canonical_text(spec));
}

// The shared step policy of the target-stopped reference runs.
StepPolicy reference_policy() { return StepPolicy::halving_on_decrease(5e-7, 0.5, 1e-16); }

FlowOptions target_stopped_options(double eps, int max_iter, double j_target) {
    FlowOptions options;
    options.eps = eps;
    options.policy = reference_policy();
    options.tau_stop = 1e-10;
    options.max_iter = max_iter;
    options.stop_when = [j_target](const IterateView& view) { return view.J >= j_target; };
    return options;
}

}  // namespace

std::string to_csv(const Table& table) {
    std::string out;
    for (const auto& [key, value] : table.meta) out += "# " + key + ": " + value + "\n";
    for (size_t c = 0; c < table.columns.size(); ++c) {
        if (c) out += ",";
        out += table.columns[c];
    }
    out += "\n";
    for (const std::vector<double>& row : table.rows) {
        if (row.size() != table.columns.size())
            throw std::invalid_argument("table row width does not match its header");
        for (size_t c = 0; c < row.size(); ++c) {
            if (c) out += ",";
            out += num17(row[c]);
        }
        out += "\n";
    }
    return out;
}

void write_csv(const Table& table, const std::string& path) {
    const std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream stream(p, std::ios::binary);
    if (!stream) throw std::runtime_error("cannot open for writing: " + path);
    stream << to_csv(table);
    if (!stream) throw std::runtime_error("write failed: " + path);
}

void SweepSpec::validate() const {
    if (tau_fs.empty()) throw std::invalid_argument("SweepSpec: tau list is empty");
    for (double t : tau_fs)
        if (!(t > 0.0)) throw std::invalid_argument("SweepSpec: tau must be positive");
    if (eps.empty()) throw std::invalid_argument("SweepSpec: eps list is empty");
    for (double e : eps)
        if (!(e >= 0.0) || !std::isfinite(e))
            throw std::invalid_argument("SweepSpec: eps values must be finite and >= 0");
    if (ds.empty()) throw std::invalid_argument("SweepSpec: ds list is empty");
    for (double d : ds)
        if (!(d > 0.0) || !std::isfinite(d))
            throw std::invalid_argument("SweepSpec: ds values must be finite and positive");
    if (common_steps < 1 && !(s_target > 0.0))
        throw std::invalid_argument("SweepSpec: need a positive step count or s_target");
    if (n_points < 3) throw std::invalid_argument("SweepSpec: grid needs at least 3 points");
    if (max_iter < 0) throw std::invalid_argument("SweepSpec: max_iter must be >= 0");
}

std::uint32_t config_hash(const SweepSpec& spec) {
    const std::string text = canonical_text(spec);
    std::uint32_t h = 2166136261u;
    for (unsigned char c : text) {
        h ^= c;
        h *= 16777619u;
    }
    return h;
}

std::string experiment_filename(const std::string& experiment, double tau_fs,
                                std::uint32_t hash) {
    return experiment + "_" + numg(tau_fs) + "fs_" + hash_hex(hash) + ".csv";
}

SyntheticProblem make_synthetic_problem(bool with_fluence, int n_points) {
    if (n_points < 3) throw std::invalid_argument("synthetic problem needs at least 3 points");
    SyntheticProblem s;
    const double T = 20.0;
    s.grid = TimeGrid(0.0, T, n_points);
    s.system.dim = 2;
    s.system.H0 = HermitianMatrix(2);
    s.system.H0.at(1, 1) = 1.0;
    s.system.mu = HermitianMatrix(2);
    s.system.mu.at(0, 1) = 0.5;
    s.system.mu.at(1, 0) = 0.5;
    s.system.psi0 = {1.0, 0.0};
    s.system.psif = {0.0, 1.0};

    s.envelope.tau = T;
    s.envelope.samples.resize(n_points);
    s.field.grid = s.grid;
    s.field.samples.resize(n_points);
    std::vector<double> centered(n_points);
    for (int k = 0; k < n_points; ++k) {
        const double t = s.grid.time(k);
        const double gate = std::sin(std::numbers::pi * t / T);
        s.envelope.samples[k] = gate * gate;
        s.field.samples[k] = 0.08 * gate * std::cos(t);
        centered[k] = t - 0.5 * T;
    }

    std::vector<double> w(n_points);
    for (int k = 0; k < n_points; ++k) w[k] = s.envelope.samples[k];
    const double n1 = std::sqrt(trapezoid(w, s.grid.dt));
    for (int k = 0; k < n_points; ++k) w[k] = s.envelope.samples[k] * centered[k] * centered[k];
    const double n2 = std::sqrt(trapezoid(w, s.grid.dt));

    Constraint mean;
    mean.kind = Constraint::Kind::AffineKernel;
    mean.kernel.assign(n_points, 1.0 / n1);
    mean.label = "mean";
    Constraint tilt;
    tilt.kind = Constraint::Kind::AffineKernel;
    tilt.kernel.resize(n_points);
    for (int k = 0; k < n_points; ++k) tilt.kernel[k] = centered[k] / n2;
    tilt.label = "tilt";
    s.constraints.items = {mean, tilt};
    if (with_fluence) s.constraints.items.push_back(make_fluence(0.0));
    for (Constraint& c : s.constraints.items) c.target = evaluate(c, s.field);
    return s;
}

Table baseline_run(const SweepSpec& spec_in) {
    SweepSpec spec = spec_in;
    if (spec.eps.empty()) spec.eps = {0.0};
    if (spec.ds.empty()) spec.ds = {5e-7};
    spec.validate();
    const std::uint32_t hash = config_hash(spec);

    Table table;
    stamp_common_meta(table, "baseline", spec, hash);
    table.meta.emplace_back("policy", "halving_on_decrease factor 0.5, stop at J >= 0.99");
    table.columns = {"tau_fs", "k",  "J",  "fluence_drift", "abs_h1",
                     "cond",   "ds", "rejections", "config_hash"};

    for (double tau : spec.tau_fs) {
        const BenchmarkProblem p = desk_benchmark(tau, spec.n_points);
        const Envelope env = build_envelope(p.grid, p.tau_au);
        const ConstraintSet cons = benchmark_constraints(p);
        const int i_fluence = constraint_index(cons, "fluence");
        const int i_area = constraint_index(cons, "zero_area");

        FlowOptions options = target_stopped_options(spec.eps[0], spec.max_iter, 0.99);
        options.policy = StepPolicy::halving_on_decrease(spec.ds[0], 0.5, 1e-16);
        const FidelityObjective objective(p.system);
        const FlowLog log = run(objective, cons, env, p.initial_field, options);

        for (const IterationRecord& rec : log.records) {
            if (!rec.accepted) continue;  // one row per iterate, not per attempt
            table.rows.push_back({tau, static_cast<double>(rec.k), rec.J,
                                  (rec.h[i_fluence] - cons.items[i_fluence].target) /
                                      cons.items[i_fluence].target,
                                  std::abs(rec.h[i_area] - cons.items[i_area].target), rec.cond,
                                  rec.ds, static_cast<double>(rec.rejections_this_step),
                                  static_cast<double>(hash)});
        }
        table.meta.emplace_back("termination_" + numg(tau) + "fs", to_string(log.termination));
    }
    return table;
}

ConvergenceResult convergence_sweep(const SweepSpec& spec_in, ProblemKind kind) {
    SweepSpec spec = spec_in;
    int steps = spec.common_steps;
    if (kind == ProblemKind::synthetic) {
        if (spec.ds.empty()) spec.ds = {1e-3};
        if (spec.eps.empty()) {
            spec.eps = {0.0};
            for (int i = 0; i <= 12; ++i) spec.eps.push_back(std::pow(10.0, -6.0 + i / 3.0));
        }
    } else {
        if (spec.ds.empty()) {
            // Measured protocol: the plain fixed-step benchmark flow stays
            // monotone at this step over this horizon, which the sweep needs.
            spec.ds = {2e-8};
            steps = 100;
        }
        if (spec.eps.empty())
            spec.eps = {0.0,  1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 3e-3, 1e-2, 1e-1};
    }
    spec.validate();
    const double ds = spec.ds[0];
    if (spec.s_target > 0.0) steps = std::max(1, static_cast<int>(std::lround(spec.s_target / ds)));
    if (std::find(spec.eps.begin(), spec.eps.end(), 0.0) == spec.eps.end())
        throw std::invalid_argument("convergence_sweep: eps list must contain the 0 reference");
    const std::uint32_t hash = config_hash(spec);

    // Problem setup shared by every run of the sweep.
    SyntheticProblem synth;
    BenchmarkProblem bench;
    const QuantumSystem* system = nullptr;
    const ControlField* start = nullptr;
    Envelope env;
    ConstraintSet cons;
    double tau_meta = spec.tau_fs[0];
    if (kind == ProblemKind::synthetic) {
        synth = make_synthetic_problem(false);
        system = &synth.system;
        start = &synth.field;
        env = synth.envelope;
        cons = synth.constraints;
    } else {
        bench = desk_benchmark(tau_meta, spec.n_points);
        system = &bench.system;
        start = &bench.initial_field;
        env = build_envelope(bench.grid, bench.tau_au);
        cons = benchmark_constraints(bench);
    }
    const FidelityObjective objective(*system);
    const double dt = start->grid.dt;

    struct RunOut {
        ControlField terminal;
        std::vector<double> ds_seq;
        bool aborted = false;
    };
    auto one_run = [&](double eps) {
        FlowOptions options;
        options.eps = eps;
        options.policy = StepPolicy::fixed(ds);
        options.tau_stop = 0.0;
        options.max_iter = steps;
        const FlowLog log = run(objective, cons, env, *start, options);
        RunOut out;
        out.terminal = log.terminal_field;
        out.aborted = log.termination != Termination::max_iterations;
        double prev = -1.0;
        for (const IterationRecord& rec : log.records) {
            if (!std::isfinite(rec.J) || (prev >= 0.0 && rec.J < prev)) out.aborted = true;
            prev = rec.J;
            if (rec.accepted && rec.ds > 0.0) out.ds_seq.push_back(rec.ds);
        }
        return out;
    };

    const RunOut reference = one_run(0.0);
    if (reference.aborted)
        throw NumericError("convergence_sweep: the eps = 0 reference run decreased; "
                           "shrink ds or the horizon");
    const double ref_norm = l2_trap(reference.terminal.samples, dt);

    ConvergenceResult result;
    result.fit.window_lo = kind == ProblemKind::synthetic ? 1e-6 : 1e-8;
    result.fit.window_hi = kind == ProblemKind::synthetic ? 1e-2 : 1e-5;

    stamp_common_meta(result.table, "converge", spec, hash);
    result.table.meta.emplace_back(
        "problem", kind == ProblemKind::synthetic ? "synthetic" : "benchmark");
    result.table.meta.emplace_back("ds", num17(ds));
    result.table.meta.emplace_back("steps", std::to_string(steps));
    result.table.columns = {"eps", "distance", "aborted", "config_hash"};

    std::vector<double> wx, wy;
    for (double eps : spec.eps) {
        if (eps == 0.0) continue;
        const RunOut r = one_run(eps);
        double dist = std::numeric_limits<double>::quiet_NaN();
        if (!r.aborted) {
            if (r.ds_seq != reference.ds_seq)
                throw NumericError("convergence_sweep: accepted-step sequences diverged");
            dist = l2_diff(r.terminal.samples, reference.terminal.samples, dt) / ref_norm;
        }
        result.fit.eps.push_back(eps);
        result.fit.distances.push_back(dist);
        result.fit.aborted.push_back(r.aborted ? 1 : 0);
        result.table.rows.push_back(
            {eps, dist, r.aborted ? 1.0 : 0.0, static_cast<double>(hash)});
        if (!r.aborted && dist > 0.0 && eps >= result.fit.window_lo &&
            eps <= result.fit.window_hi) {
            wx.push_back(eps);
            wy.push_back(dist);
        }
    }
    result.fit.window_points = static_cast<int>(wx.size());
    if (result.fit.window_points >= 4) result.fit.slope = loglog_slope(wx, wy);
    result.table.meta.emplace_back("slope", num17(result.fit.slope));
    result.table.meta.emplace_back(
        "window", num17(result.fit.window_lo) + ".." + num17(result.fit.window_hi) + " (" +
                      std::to_string(result.fit.window_points) + " points)");
    return result;
}

Table cond_drift_sweep(const SweepSpec& spec_in) {
    SweepSpec spec = spec_in;
    if (spec.eps.empty())
        spec.eps = {0.0,  3e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4,
                    1e-3, 1e-2, 1e-1, 1.0,  10.0, 1e4};
    if (spec.ds.empty()) spec.ds = {5e-7};
    spec.validate();
    const std::uint32_t hash = config_hash(spec);

    const BenchmarkProblem p = desk_benchmark(spec.tau_fs[0], spec.n_points);
    const Envelope env = build_envelope(p.grid, p.tau_au);
    const ConstraintSet cons = benchmark_constraints(p);
    const int i_fluence = constraint_index(cons, "fluence");
    const FidelityObjective objective(p.system);

    Table table;
    stamp_common_meta(table, "cond-drift", spec, hash);
    table.meta.emplace_back("policy", "halving_on_decrease factor 0.5, stop at J >= 0.99");
    table.columns = {"eps",      "max_cond",       "terminal_fluence_drift", "accepted",
                     "rejected", "reached_target", "config_hash"};

    for (double eps : spec.eps) {
        FlowOptions options = target_stopped_options(eps, spec.max_iter, 0.99);
        options.policy = StepPolicy::halving_on_decrease(spec.ds[0], 0.5, 1e-16);
        const FlowLog log = run(objective, cons, env, p.initial_field, options);
        table.rows.push_back({eps, max_cond(log), relative_drift(log, cons, i_fluence),
                              static_cast<double>(log.accepted_steps),
                              static_cast<double>(log.total_rejections),
                              iterations_to(log, 0.99) >= 0 ? 1.0 : 0.0,
                              static_cast<double>(hash)});
    }
    return table;
}

Table payoff_matrix(const SweepSpec& spec_in) {
    SweepSpec spec = spec_in;
    if (spec.ds.empty()) spec.ds = {1e-6, 5e-6, 1e-5, 5e-5, 1e-4};
    if (spec.eps.empty()) spec.eps = {0.0, 1e-4, 1e-3, 1e-2};
    spec.validate();
    const std::uint32_t hash = config_hash(spec);

    const BenchmarkProblem p = desk_benchmark(spec.tau_fs[0], spec.n_points);
    const Envelope env = build_envelope(p.grid, p.tau_au);
    const ConstraintSet cons = benchmark_constraints(p);
    const int i_fluence = constraint_index(cons, "fluence");
    const FidelityObjective objective(p.system);
    const double j_start = objective.value(p.initial_field);

    Table table;
    stamp_common_meta(table, "payoff", spec, hash);
    table.meta.emplace_back("policy",
                            "halving_on_decrease factor 0.1 to the common horizon; breakdown "
                            "from a plain fixed-step companion run");
    table.columns = {"ds",        "eps",       "iterations_to_99", "rejections",
                     "terminal_fluence_drift", "reached_target",   "breakdown",
                     "config_hash"};

    for (double ds : spec.ds) {
        for (double eps : spec.eps) {
            FlowOptions options;
            options.eps = eps;
            options.policy = StepPolicy::halving_on_decrease(ds, 0.1, 1e-16);
            options.tau_stop = 1e-10;
            options.max_iter = spec.max_iter;
            const FlowLog log = run(objective, cons, env, p.initial_field, options);
            const int it99 = iterations_to(log, 0.99);

            FlowOptions probe;
            probe.eps = eps;
            probe.policy = StepPolicy::fixed(ds);
            probe.tau_stop = 0.0;
            probe.max_iter = spec.max_iter;
            probe.stop_when = [j_start](const IterateView& view) {
                return view.J >= 0.99 || view.J < j_start - 0.01 || !std::isfinite(view.J);
            };
            const FlowLog fixed_log = run(objective, cons, env, p.initial_field, probe);
            bool breakdown = false;
            for (const IterationRecord& rec : fixed_log.records)
                if (!std::isfinite(rec.J) || rec.J < j_start - 0.01) breakdown = true;

            table.rows.push_back({ds, eps,
                                  it99 >= 0 ? static_cast<double>(it99)
                                            : std::numeric_limits<double>::quiet_NaN(),
                                  static_cast<double>(log.total_rejections),
                                  relative_drift(log, cons, i_fluence), it99 >= 0 ? 1.0 : 0.0,
                                  breakdown ? 1.0 : 0.0, static_cast<double>(hash)});
        }
    }
    return table;
}

IdentityReport identity_suite(unsigned seed, int trials, int n_points) {
    if (trials < 1) throw std::invalid_argument("identity_suite: need at least one trial");
    IdentityReport report;

    {
        const ShiftReport s = shift_suite(trials, 4, seed + 1);
        report.checks.push_back({"shift-identity", s.violations == 0, s.worst_rel,
                                 std::to_string(s.trials) + " trials, worst rel " +
                                     num17(s.worst_rel)});
    }
    {
        const LemmaReport l = lemma_suite(trials, 4, seed);
        const bool ok = l.violations == 0 && l.worst_margin >= -1e-12;
        report.checks.push_back({"inverse-entry-bounds", ok, l.worst_margin,
                                 std::to_string(l.trials) + " trials, worst margin " +
                                     num17(l.worst_margin)});
    }
    {
        const BenchmarkProblem p = desk_benchmark(250.0, n_points);
        const Envelope env = build_envelope(p.grid, p.tau_au);
        const ConstraintSet cons = benchmark_constraints(p);
        const FidelityObjective objective(p.system);
        const double eps = 1e-3;

        double worst_rel = 0.0;
        bool rho_ok = true;
        bool sign_ok = true;
        FlowOptions options;
        options.eps = eps;
        options.policy = reference_policy();
        options.tau_stop = 0.0;
        options.max_iter = 50;
        options.observer = [&](const IterateView& view) {
            std::vector<double> prod(view.c0.size());
            for (size_t k = 0; k < prod.size(); ++k) prod[k] = view.c0[k] * view.velocity[k];
            const double lhs = trapezoid(prod, view.state.field.grid.dt);
            const double rho = 1.0 - eps * eps * view.gram.x[0];
            const double rhs = view.gram.g0 * rho;
            worst_rel = std::max(worst_rel, std::abs(lhs - rhs) / std::abs(rhs));
            if (rho < -1e-12 || rho > 1.0 + 1e-12) rho_ok = false;
            if (rhs < -1e-15) sign_ok = false;
        };
        const FlowLog log = run(objective, cons, env, p.initial_field, options);
        const bool ok = worst_rel <= 1e-10 && rho_ok && sign_ok &&
                        log.termination == Termination::max_iterations;
        report.checks.push_back({"ascent-pairing", ok, worst_rel,
                                 "50 benchmark iterates at eps 1e-3, worst rel " +
                                     num17(worst_rel) + (rho_ok ? "" : ", rho out of [0,1]") +
                                     (sign_ok ? "" : ", negative first-order gain")});
    }
    {
        const BenchmarkProblem p = desk_benchmark(250.0, n_points);
        const Envelope env = build_envelope(p.grid, p.tau_au);
        const ConstraintSet cons = benchmark_constraints(p);
        FlowOptions options;
        options.eps = 0.0;
        options.policy = reference_policy();
        options.tau_stop = 1e-10;
        options.max_iter = 10;
        const FidelityObjective objective(p.system);
        const FlowLog log = run(objective, cons, env, p.initial_field, options);

        bool pred_zero = true;
        for (const IterationRecord& rec : log.records)
            for (double d : rec.drift_pred)
                if (d != 0.0) pred_zero = false;
        double worst_affine = 0.0;
        const std::vector<DriftEntry> drifts = drift_report(log, cons, log.terminal_field);
        for (int m = 0; m < cons.size(); ++m) {
            if (drifts[m].predicted != 0.0) pred_zero = false;
            if (cons.items[m].kind == Constraint::Kind::AffineKernel)
                worst_affine = std::max(worst_affine, std::abs(drifts[m].measured));
        }
        const bool ok = pred_zero && worst_affine <= 1e-6;
        report.checks.push_back({"zero-eps-conservation", ok, worst_affine,
                                 "predicted drift bitwise zero; worst affine deviation " +
                                     num17(worst_affine)});
    }

    report.all_passed = true;
    for (const IdentityCheck& c : report.checks) report.all_passed = report.all_passed && c.passed;
    return report;
}

EmitResult run_and_emit(const std::string& experiment, const SweepSpec& spec,
                        const std::string& out_dir, int trials) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    EmitResult result;
    nlohmann::json summary;
    summary["experiment"] = experiment;

    auto emit_table = [&](const Table& table, const std::string& name) {
        std::uint32_t hash = 0;
        for (const auto& [key, value] : table.meta)
            if (key == "config_hash") hash = std::stoul(value, nullptr, 16);
        const std::string file =
            (fs::path(out_dir) / experiment_filename(name, spec.tau_fs.empty() ? 250.0
                                                                                : spec.tau_fs[0],
                                                     hash))
                .string();
        write_csv(table, file);
        result.files.push_back(file);
        summary["config_hash"] = hash_hex(hash);
        return file;
    };

    if (experiment == "baseline") {
        const Table table = baseline_run(spec);
        emit_table(table, "baseline");
        if (!table.rows.empty()) {
            const std::vector<double>& last = table.rows.back();
            summary["final_J"] = last[2];
            summary["terminal_fluence_drift"] = last[3];
            double worst_cond = 0.0, worst_h1 = 0.0;
            for (const auto& row : table.rows) {
                worst_cond = std::max(worst_cond, row[5]);
                worst_h1 = std::max(worst_h1, row[4]);
            }
            summary["max_cond"] = worst_cond;
            summary["max_abs_h1"] = worst_h1;
        }
    } else if (experiment == "converge") {
        const ConvergenceResult synth = convergence_sweep(spec, ProblemKind::synthetic);
        emit_table(synth.table, "converge-synthetic");
        const ConvergenceResult bench = convergence_sweep(spec, ProblemKind::benchmark);
        emit_table(bench.table, "converge-benchmark");
        summary["synthetic_slope"] = synth.fit.slope;
        summary["benchmark_window_slope"] = bench.fit.slope;
    } else if (experiment == "cond-drift") {
        emit_table(cond_drift_sweep(spec), "cond-drift");
    } else if (experiment == "payoff") {
        emit_table(payoff_matrix(spec), "payoff");
    } else if (experiment == "verify") {
        const IdentityReport report = identity_suite(spec.seed, trials, spec.n_points);
        SweepSpec stamped = spec;
        if (stamped.eps.empty()) stamped.eps = {0.0};
        if (stamped.ds.empty()) stamped.ds = {5e-7};
        const std::uint32_t hash = config_hash(stamped);
        Table table;
        stamp_common_meta(table, "verify", stamped, hash);
        table.meta.emplace_back("trials", std::to_string(trials));
        table.columns = {"check", "passed", "worst", "config_hash"};
        nlohmann::json checks = nlohmann::json::array();
        for (size_t i = 0; i < report.checks.size(); ++i) {
            const IdentityCheck& c = report.checks[i];
            table.meta.emplace_back("check_" + std::to_string(i), c.name + ": " + c.detail);
            table.rows.push_back({static_cast<double>(i), c.passed ? 1.0 : 0.0, c.worst,
                                  static_cast<double>(hash)});
            checks.push_back({{"name", c.name}, {"passed", c.passed}, {"worst", c.worst}});
        }
        emit_table(table, "verify");
        summary["checks"] = checks;
        summary["passed"] = report.all_passed;
        result.passed = report.all_passed;
    } else {
        throw std::invalid_argument("unknown experiment '" + experiment +
                                    "' (expected baseline, converge, cond-drift, payoff, "
                                    "or verify)");
    }

    summary["files"] = result.files;
    const std::string summary_path =
        (fs::path(out_dir) / (experiment + "_summary.json")).string();
    std::ofstream stream(summary_path, std::ios::binary);
    stream << summary.dump(2) << "\n";
    result.files.push_back(summary_path);
    result.summary_json = summary.dump(2);
    return result;
}

}  // namespace rf
